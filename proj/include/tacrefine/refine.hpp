#pragma once

#include "tacrefine/dataset.hpp"
#include "tacrefine/error.hpp"
#include "tacrefine/geometry.hpp"
#include "tacrefine/metrics.hpp"
#include "tacrefine/net.hpp"
#include "tacrefine/tacsim.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace tacrefine {

struct RefineConfig {
  int max_steps = 10;
  // Sampling half-range per dimension; x and yaw are never sampled.
  Vec6 step_clamp{0.0, 0.02, 0.02, 0.15, 0.15, 0.0};
  double eps_pos = 0.005;
  double eps_rot = 0.05;
  bool stop_on_threshold = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_steps < 1) throw Error(ErrorCode::invalid_argument, "max_steps must be >= 1");
    for (double c : step_clamp)
      if (!(c >= 0)) throw Error(ErrorCode::invalid_argument, "step_clamp must be >= 0");
    if (!(eps_pos > 0) || !(eps_rot > 0))
      throw Error(ErrorCode::invalid_argument, "thresholds must be > 0");
  }

  MetricThresholds thresholds() const { return {eps_pos, eps_rot, max_steps, 5}; }
};

enum class Termination : std::uint8_t { max_steps, threshold, lost_contact, initial_non_contact };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::max_steps: return "max_steps";
    case Termination::threshold: return "threshold";
    case Termination::lost_contact: return "lost_contact";
    case Termination::initial_non_contact: return "initial_non_contact";
  }
  return "unknown";
}

struct TrajectoryEntry {
  Pose6 pose;
  Pose6 target;  // moves with the object while tracking
  bool contact = false;
  Vec6 joints{};
  TactileTriplet images{};
  Vec6 predicted{};  // raw policy output; zero on the last entry
  Vec6 applied{};    // after clamping
  double dpos = 0;
  double drot = 0;
};

struct Trajectory {
  std::vector<TrajectoryEntry> entries;
  Pose6 target_pose;
  TactileTriplet target_images{};
  Termination reason = Termination::max_steps;

  const TrajectoryEntry& last() const { return entries.back(); }
};

struct Demonstration {
  TactileTriplet images{};
  Pose6 pose;
};

/// Renders the target triplet at `target` and records the wrist pose.
inline Demonstration demonstrate_target(const Pose6& target, const ObjectModel& object,
                                        const SensorParams& params, const HandConfig& hand,
                                        std::uint64_t seed) {
  auto obs = render_hand(WristPose::from_pose6(target), object, params, hand, seed);
  if (!obs) throw Error(ErrorCode::non_contact, "demonstration pose has no contact");
  return {obs->images, target};
}

/// Piecewise-constant absolute object offsets: from iteration `at` on, the
/// object sits at `offset` (R6, same parameterization as wrist poses).
struct MotionKey {
  int at = 0;
  Pose6 offset;
};
using MotionSchedule = std::vector<MotionKey>;

/// Pitch, then y, then roll segments, each held for `hold` iterations.
inline MotionSchedule default_schedule(int hold = 10) {
  MotionSchedule s;
  Pose6 o;
  s.push_back({0, o});
  o[kPitch] = 0.05;
  s.push_back({hold, o});
  o[kY] = 0.005;
  s.push_back({2 * hold, o});
  o[kRoll] = 0.05;
  s.push_back({3 * hold, o});
  return s;
}

namespace detail {

inline Vec6 clamp_increment(const Vec6& dx, const Vec6& cap) {
  Vec6 out{};
  for (int i = 0; i < 6; ++i) out[i] = std::clamp(dx[i], -cap[i], cap[i]);
  return out;
}

inline ObjectModel moved_object(const ObjectModel& base, const Pose6& offset) {
  ObjectModel o = base;
  o.pose = to_isometry(offset) * base.pose;
  return o;
}

inline Pose6 moved_target(const Pose6& target, const Pose6& offset) {
  if (offset == Pose6{}) return target;
  return from_isometry(to_isometry(offset) * to_isometry(target));
}

inline const Pose6& offset_at(const MotionSchedule& s, int iteration) {
  static const Pose6 zero{};
  const Pose6* cur = &zero;
  for (const MotionKey& k : s)
    if (k.at <= iteration) cur = &k.offset;
  return *cur;
}

inline bool has_key_after(const MotionSchedule& s, int iteration) {
  return std::any_of(s.begin(), s.end(), [iteration](const MotionKey& k) { return k.at > iteration; });
}

}  // namespace detail

/// Moving-object loop. Before each iteration the scheduled offset is applied
/// to the object and to the target wrist pose. A threshold stop or lost
/// contact ends the run only when no later motion key remains; otherwise the
/// wrist holds until the object moves again.
inline Trajectory track(const Pose6& initial, const Demonstration& target,
                        const MotionSchedule& schedule, const PolicyParams& policy,
                        const ObjectModel& object, const SensorParams& params,
                        const HandConfig& hand, const RefineConfig& config) {
  config.validate();
  Trajectory traj;
  traj.target_pose = target.pose;
  traj.target_images = target.images;
  Pose6 pose = initial;
  for (int s = 0;; ++s) {
    const Pose6& offset = detail::offset_at(schedule, s);
    const ObjectModel obj = detail::moved_object(object, offset);
    TrajectoryEntry e;
    e.pose = pose;
    e.target = detail::moved_target(target.pose, offset);
    const PoseError err = pose_error(pose, e.target);
    e.dpos = err.dpos;
    e.drot = err.drot;
    auto obs = render_hand(WristPose::from_pose6(pose), obj, params, hand, derive_seed(config.seed, s));
    e.contact = obs.has_value();
    if (obs) {
      e.joints = obs->state.joints;
      e.images = obs->images;
    }
    const bool more = detail::has_key_after(schedule, s);
    const bool within = err.dpos <= config.eps_pos && err.drot <= config.eps_rot;
    Termination stop = Termination::max_steps;
    bool done = false;
    if (config.stop_on_threshold && within && !more) {
      stop = Termination::threshold;
      done = true;
    } else if (s >= config.max_steps) {
      done = true;
    } else if (!obs && !more) {
      stop = s == 0 ? Termination::initial_non_contact : Termination::lost_contact;
      done = true;
    }
    if (done) {
      traj.entries.push_back(e);
      traj.reason = stop;
      return traj;
    }
    if (obs) {
      e.predicted = forward(policy, {obs->images, target.images, obs->state.joints});
      e.applied = detail::clamp_increment(e.predicted, config.step_clamp);
      pose = apply_increment(pose, e.applied);
    }
    traj.entries.push_back(e);
  }
}

/// Closed-loop refinement against a fixed object. Each iteration regrasps
/// from scratch at the current wrist pose.
inline Trajectory refine_loop(const Pose6& initial, const Demonstration& target,
                              const PolicyParams& policy, const ObjectModel& object,
                              const SensorParams& params, const HandConfig& hand,
                              const RefineConfig& config) {
  return track(initial, target, {}, policy, object, params, hand, config);
}

inline void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path,
                                 std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path.string());
  out << "# config_hash=" << format_hash(config_hash) << " termination=" << to_string(traj.reason)
      << '\n';
  out << "step,x,y,z,roll,pitch,yaw,dpos,drot,dx_x,dx_y,dx_z,dx_roll,dx_pitch,dx_yaw,contact\n";
  out << std::setprecision(17);
  for (std::size_t s = 0; s < traj.entries.size(); ++s) {
    const TrajectoryEntry& e = traj.entries[s];
    out << s;
    for (double v : e.pose.v) out << ',' << v;
    out << ',' << e.dpos << ',' << e.drot;
    for (double v : e.applied) out << ',' << v;
    out << ',' << (e.contact ? 1 : 0) << '\n';
  }
}

inline void write_pgm(const TactileImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path.string());
  out << "P5\n" << kTaxelCols << ' ' << kTaxelRows << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.values.data()), kTaxels);
}

/// target_f<k>.pgm plus step<s>_f<k>.pgm for every entry.
inline void write_trajectory_pgm(const Trajectory& traj, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int f = 0; f < kFingers; ++f)
    write_pgm(traj.target_images[f], dir / ("target_f" + std::to_string(f) + ".pgm"));
  for (std::size_t s = 0; s < traj.entries.size(); ++s)
    for (int f = 0; f < kFingers; ++f)
      write_pgm(traj.entries[s].images[f],
                dir / ("step" + std::to_string(s) + "_f" + std::to_string(f) + ".pgm"));
}

}  // namespace tacrefine
