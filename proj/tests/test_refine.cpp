#include "tacrefine/refine.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace tacrefine;
namespace fs = std::filesystem;

namespace {

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("tacrefine_" + name); }

PolicyParams zero_policy() {
  PolicyParams p = init_params(0);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  return p;
}

Pose6 offset_pose(double y, double pitch) {
  Pose6 p = canonical_grasp_pose();
  p[kY] = y;
  p[kPitch] = pitch;
  return p;
}

Demonstration canonical_demo() {
  return demonstrate_target(canonical_grasp_pose(), ObjectModel{}, SensorParams::nominal(),
                            HandConfig{}, 1);
}

void expect_same(const Trajectory& a, const Trajectory& b) {
  ASSERT_EQ(a.entries.size(), b.entries.size());
  EXPECT_EQ(a.reason, b.reason);
  for (std::size_t s = 0; s < a.entries.size(); ++s) {
    EXPECT_EQ(a.entries[s].pose, b.entries[s].pose);
    EXPECT_EQ(a.entries[s].images, b.entries[s].images);
    EXPECT_EQ(a.entries[s].applied, b.entries[s].applied);
  }
}

}  // namespace

TEST(Demonstrate, CanonicalHasContact) {
  const Demonstration d = canonical_demo();
  EXPECT_EQ(d.pose, canonical_grasp_pose());
  for (const auto& img : d.images) EXPECT_FALSE(img.all_zero());
}

TEST(Demonstrate, UnreachableTargetThrows) {
  Pose6 p = canonical_grasp_pose();
  p[kZ] = 0.5;
  try {
    demonstrate_target(p, ObjectModel{}, SensorParams::nominal(), HandConfig{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_contact);
  }
}

TEST(Refine, StartingAtTargetStopsImmediately) {
  RefineConfig cfg;
  cfg.stop_on_threshold = true;
  const Trajectory t = refine_loop(canonical_grasp_pose(), canonical_demo(), init_params(1),
                                   ObjectModel{}, SensorParams::nominal(), HandConfig{}, cfg);
  ASSERT_EQ(t.entries.size(), 1u);
  EXPECT_EQ(t.reason, Termination::threshold);
  EXPECT_EQ(t.last().dpos, 0.0);
  EXPECT_EQ(t.last().drot, 0.0);
}

TEST(Refine, ZeroClampKeepsWristStill) {
  RefineConfig cfg;
  cfg.step_clamp = {};
  const Pose6 start = offset_pose(0.01, 0.1);
  const Trajectory t = refine_loop(start, canonical_demo(), init_params(2), ObjectModel{},
                                   SensorParams::nominal(), HandConfig{}, cfg);
  ASSERT_EQ(t.entries.size(), static_cast<std::size_t>(cfg.max_steps + 1));
  EXPECT_EQ(t.reason, Termination::max_steps);
  for (const auto& e : t.entries) {
    EXPECT_EQ(e.pose, start);
    EXPECT_NEAR(e.dpos, 0.01, 1e-12);
  }
}

TEST(Refine, ZeroPolicyKeepsWristStill) {
  const Pose6 start = offset_pose(-0.01, 0.0);
  const Trajectory t = refine_loop(start, canonical_demo(), zero_policy(), ObjectModel{},
                                   SensorParams::nominal(), HandConfig{}, RefineConfig{});
  for (const auto& e : t.entries) {
    EXPECT_EQ(e.pose, start);
    for (double v : e.predicted) EXPECT_EQ(v, 0.0);
  }
}

TEST(Refine, IncrementsRespectClamp) {
  RefineConfig cfg;
  cfg.step_clamp = {0.0, 0.001, 0.001, 0.01, 0.01, 0.0};
  // Large weights so raw predictions exceed the caps.
  PolicyParams p = init_params(3);
  for (double& v : p.values) v *= 5.0;
  const Trajectory t = refine_loop(offset_pose(0.01, -0.1), canonical_demo(), p, ObjectModel{},
                                   SensorParams::nominal(), HandConfig{}, cfg);
  bool saturated = false;
  for (std::size_t s = 0; s + 1 < t.entries.size(); ++s) {
    const auto& e = t.entries[s];
    for (int i = 0; i < 6; ++i) {
      EXPECT_LE(std::abs(e.applied[i]), cfg.step_clamp[i]);
      saturated |= std::abs(e.predicted[i]) > cfg.step_clamp[i] && cfg.step_clamp[i] > 0;
    }
    const Pose6 next = apply_increment(e.pose, e.applied);
    EXPECT_EQ(t.entries[s + 1].pose, next);
  }
  EXPECT_TRUE(saturated);
}

TEST(Refine, InitialNonContact) {
  Pose6 start = canonical_grasp_pose();
  start[kX] = 0.5;
  const Trajectory t = refine_loop(start, canonical_demo(), init_params(1), ObjectModel{},
                                   SensorParams::nominal(), HandConfig{}, RefineConfig{});
  ASSERT_EQ(t.entries.size(), 1u);
  EXPECT_EQ(t.reason, Termination::initial_non_contact);
  EXPECT_FALSE(t.last().contact);
}

TEST(Refine, Deterministic) {
  RefineConfig cfg;
  cfg.seed = 4;
  const SensorParams noisy = perturb_params(SensorParams::nominal(), 0.2, 8);
  const auto run = [&] {
    return refine_loop(offset_pose(0.005, 0.05), canonical_demo(), init_params(5), ObjectModel{}, noisy,
                       HandConfig{}, cfg);
  };
  expect_same(run(), run());
}

TEST(Refine, RejectsBadConfig) {
  RefineConfig cfg;
  cfg.max_steps = 0;
  EXPECT_THROW(refine_loop(canonical_grasp_pose(), canonical_demo(), init_params(1), ObjectModel{},
                           SensorParams::nominal(), HandConfig{}, cfg),
               Error);
}

TEST(Track, ZeroScheduleEqualsRefineLoop) {
  const Pose6 start = offset_pose(0.008, -0.05);
  const PolicyParams p = init_params(6);
  const RefineConfig cfg;
  const Trajectory a = refine_loop(start, canonical_demo(), p, ObjectModel{}, SensorParams::nominal(),
                                   HandConfig{}, cfg);
  const Trajectory b = track(start, canonical_demo(), {{0, Pose6{}}}, p, ObjectModel{},
                             SensorParams::nominal(), HandConfig{}, cfg);
  expect_same(a, b);
}

TEST(Track, TargetFollowsObjectOffset) {
  Pose6 offset;
  offset[kY] = 0.005;
  RefineConfig cfg;
  cfg.max_steps = 6;
  const Trajectory t = track(canonical_grasp_pose(), canonical_demo(), {{3, offset}}, zero_policy(),
                             ObjectModel{}, SensorParams::nominal(), HandConfig{}, cfg);
  ASSERT_EQ(t.entries.size(), 7u);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(t.entries[s].dpos, 0.0);
  for (int s = 3; s < 7; ++s) {
    EXPECT_NEAR(t.entries[s].target[kY], 0.005, 1e-12);
    EXPECT_NEAR(t.entries[s].dpos, 0.005, 1e-12);
  }
  // The object moved under a stationary wrist, so the readings change.
  EXPECT_NE(t.entries[2].images, t.entries[3].images);
}

TEST(Track, ThresholdDoesNotStopBeforeLastKey) {
  Pose6 offset;
  offset[kY] = 0.005;
  RefineConfig cfg;
  cfg.stop_on_threshold = true;
  cfg.max_steps = 8;
  const Trajectory t = track(canonical_grasp_pose(), canonical_demo(), {{4, offset}}, zero_policy(),
                             ObjectModel{}, SensorParams::nominal(), HandConfig{}, cfg);
  // Within threshold at 0..3, but the key at 4 is still ahead.
  EXPECT_GE(t.entries.size(), 5u);
}

TEST(Track, DefaultScheduleShape) {
  const MotionSchedule s = default_schedule(10);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[1].at, 10);
  EXPECT_DOUBLE_EQ(s[1].offset[kPitch], 0.05);
  EXPECT_DOUBLE_EQ(s[2].offset[kY], 0.005);
  EXPECT_DOUBLE_EQ(s[3].offset[kRoll], 0.05);
  EXPECT_EQ(s[3].at, 30);
}

TEST(Output, TrajectoryCsv) {
  const Trajectory t = refine_loop(offset_pose(0.004, 0.0), canonical_demo(), zero_policy(),
                                   ObjectModel{}, SensorParams::nominal(), HandConfig{}, RefineConfig{});
  const auto path = temp("traj.csv");
  write_trajectory_csv(t, path, 0xff);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# config_hash=0x00000000000000ff termination=max_steps");
  std::getline(in, line);
  EXPECT_EQ(line, "step,x,y,z,roll,pitch,yaw,dpos,drot,dx_x,dx_y,dx_z,dx_roll,dx_pitch,dx_yaw,contact");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, t.entries.size());
  fs::remove(path);
}

TEST(Output, PgmFormat) {
  TactileImage img;
  for (int i = 0; i < kTaxels; ++i) img.values[i] = static_cast<std::uint8_t>(i);
  const auto path = temp("img.pgm");
  write_pgm(img, path);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  in.get();
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, 9);
  EXPECT_EQ(h, 11);
  EXPECT_EQ(maxv, 255);
  std::vector<char> data(kTaxels);
  in.read(data.data(), kTaxels);
  EXPECT_EQ(in.gcount(), kTaxels);
  EXPECT_EQ(static_cast<std::uint8_t>(data[10]), 10);
  EXPECT_EQ(in.peek(), EOF);
  fs::remove(path);

  const auto dir = temp("pgm_dir");
  const Trajectory t = refine_loop(offset_pose(0.004, 0.0), canonical_demo(), zero_policy(),
                                   ObjectModel{}, SensorParams::nominal(), HandConfig{}, RefineConfig{});
  write_trajectory_pgm(t, dir);
  EXPECT_TRUE(fs::exists(dir / "target_f2.pgm"));
  EXPECT_TRUE(fs::exists(dir / ("step" + std::to_string(t.entries.size() - 1) + "_f0.pgm")));
  fs::remove_all(dir);
}
