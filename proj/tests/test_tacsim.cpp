#include "support/sensor_properties.hpp"
#include "tacrefine/tacsim.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tacrefine;

namespace {

WristPose canonical() { return WristPose::from_pose6(canonical_grasp_pose()); }

}  // namespace

TEST(SensorParams, NominalInvariants) {
  const SensorParams p = SensorParams::nominal();
  EXPECT_EQ(p.rows * p.cols, 99);
  EXPECT_DOUBLE_EQ(p.taxel_spacing, 0.0011);
  EXPECT_EQ(p.noise_std, 0.0);
  for (double g : p.gain_map) EXPECT_EQ(g, 1.0);
  EXPECT_EQ(p.mount_offset[0], 0.0);
  EXPECT_EQ(p.mount_offset[1], 0.0);
  // Half a millimetre of penetration lands near mid-scale.
  EXPECT_NEAR(255.0 * p.stiffness * 0.0005 / p.max_force, 128, 1.0);
}

TEST(SensorParams, ValidateRejectsBadValues) {
  SensorParams p;
  p.stiffness = 0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.gain_map.resize(10);
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.noise_std = -1;
  EXPECT_THROW(p.validate(), Error);
}

TEST(ObjectModel, PlanarDepthMatchesDescriptors) {
  ObjectModel disc;
  disc.shape = Disc{0.05};
  EXPECT_NEAR(disc.planar_depth(0.03, 0.0), 0.02, 1e-15);
  EXPECT_NEAR(disc.planar_depth(0.0, -0.06), -0.01, 1e-15);
  ObjectModel bar;
  bar.shape = Bar{0.08, 0.02};
  EXPECT_NEAR(bar.planar_depth(0.0, 0.0), 0.02, 1e-15);
  EXPECT_NEAR(bar.planar_depth(0.07, 0.0), 0.01, 1e-15);
  EXPECT_FALSE(bar.contains_planar(0.0, 0.03));
  ObjectModel rr;
  rr.shape = RoundedRect{0.08, 0.05, 0.015};
  EXPECT_TRUE(rr.contains_planar(0.0, 0.049));
  // Corner is rounded: the box corner itself is outside.
  EXPECT_FALSE(rr.contains_planar(0.0795, 0.0495));
  EXPECT_TRUE(rr.contains_planar(0.079, 0.0));
}

TEST(ObjectModel, ValidateRejectsBadShapes) {
  ObjectModel o;
  o.thickness = 0;
  EXPECT_THROW(o.validate(), Error);
  o = {};
  o.shape = Disc{-1};
  EXPECT_THROW(o.validate(), Error);
}

TEST(CloseFingers, CanonicalGraspTouchesWithAllFingers) {
  const HandConfig hc;
  const HandState s = close_fingers(canonical(), ObjectModel{}, hc);
  for (int f = 0; f < kFingers; ++f) {
    EXPECT_TRUE(s.contact[f]) << f;
    EXPECT_GT(s.joints[2 * f], hc.joint_lower);
    EXPECT_LT(s.joints[2 * f], hc.joint_upper);
    // Bisection ends on the side that reaches the target depth.
    EXPECT_GE(s.max_penetration[f], hc.target_depth);
    EXPECT_NEAR(s.max_penetration[f], hc.target_depth, 1e-6);
    EXPECT_DOUBLE_EQ(s.joints[2 * f + 1], hc.coupling(f) * s.joints[2 * f]);
  }
}

TEST(CloseFingers, FarAwayWristHasNoContactAndJointsAtLimit) {
  Pose6 p = canonical_grasp_pose();
  p[kX] += 1.0;
  const HandConfig hc;
  const HandState s = close_fingers(WristPose::from_pose6(p), ObjectModel{}, hc);
  EXPECT_FALSE(s.any_contact());
  for (int f = 0; f < kFingers; ++f) EXPECT_EQ(s.joints[2 * f], hc.joint_upper);
}

TEST(CloseFingers, Deterministic) {
  Pose6 p = canonical_grasp_pose();
  p[kY] = 0.013;
  p[kPitch] = -0.07;
  const auto a = close_fingers(WristPose::from_pose6(p), ObjectModel{}, HandConfig{});
  const auto b = close_fingers(WristPose::from_pose6(p), ObjectModel{}, HandConfig{});
  EXPECT_EQ(a.joints, b.joints);
  for (int f = 0; f < kFingers; ++f)
    EXPECT_TRUE(a.fingertip_frames[f].matrix() == b.fingertip_frames[f].matrix());
}

TEST(CloseFingers, RejectsNonFiniteWrist) {
  WristPose w = canonical();
  w.position.x() = std::nan("");
  EXPECT_THROW(close_fingers(w, ObjectModel{}, HandConfig{}), Error);
}

TEST(RenderHand, CanonicalGivesThreeNonZeroImages) {
  const auto obs = render_hand(canonical(), ObjectModel{}, SensorParams::nominal(), HandConfig{}, 1);
  ASSERT_TRUE(obs.has_value());
  for (const TactileImage& img : obs->images) EXPECT_FALSE(img.all_zero());
}

TEST(RenderHand, UnreachableIsEmpty) {
  Pose6 p = canonical_grasp_pose();
  p[kZ] = 1.0;
  EXPECT_FALSE(render_hand(WristPose::from_pose6(p), ObjectModel{}, SensorParams::nominal(),
                           HandConfig{}, 1));
}

TEST(RenderHand, SameSeedSameImagesWithNoise) {
  SensorParams p = perturb_params(SensorParams::nominal(), 0.2, 9);
  const auto a = render_hand(canonical(), ObjectModel{}, p, HandConfig{}, 5);
  const auto b = render_hand(canonical(), ObjectModel{}, p, HandConfig{}, 5);
  const auto c = render_hand(canonical(), ObjectModel{}, p, HandConfig{}, 6);
  EXPECT_EQ(a->images, b->images);
  EXPECT_NE(a->images, c->images);
}

TEST(RenderTactile, ReadingFollowsForceLaw) {
  // Flat press on a wide plate at depth d: every taxel reads the same value.
  ObjectModel plate;
  plate.shape = Bar{0.5, 0.5};
  SensorParams p;
  // Depths chosen so 255 * k * d / F stays clear of half-integers.
  for (double d : {0.00012, 0.00033, 0.00047, 0.00091, 0.0012}) {
    Eigen::Isometry3d pad = Eigen::Isometry3d::Identity();
    pad.translation().z() = plate.thickness / 2 - d;
    const TactileImage img = render_tactile(pad, plate, p, 0);
    const double expected = std::round(255.0 * std::min(p.stiffness * d, p.max_force) / p.max_force);
    for (std::uint8_t v : img.values) EXPECT_EQ(v, expected) << d;
  }
}

TEST(PerturbParams, SeverityZeroIsIdentity) {
  const SensorParams n = SensorParams::nominal();
  EXPECT_EQ(perturb_params(n, 0.0, 123), n);
}

TEST(PerturbParams, DeterministicAndWithinRanges) {
  const SensorParams n = SensorParams::nominal();
  const SensorParams a = perturb_params(n, 0.2, 11);
  EXPECT_EQ(a, perturb_params(n, 0.2, 11));
  EXPECT_NE(a, perturb_params(n, 0.2, 12));
  double mad = 0;
  for (double g : a.gain_map) {
    EXPECT_GE(g, 0.8);
    EXPECT_LE(g, 1.2);
    mad += std::abs(g - 1.0) / kTaxels;
  }
  // E|U(-0.2, 0.2)| = 0.1
  EXPECT_NEAR(mad, 0.1, 0.03);
  EXPECT_GE(a.stiffness, 0.8 * n.stiffness);
  EXPECT_LE(a.stiffness, 1.2 * n.stiffness);
  EXPECT_LE(std::abs(a.mount_offset[0]), 0.2 * n.taxel_spacing);
  EXPECT_LE(std::abs(a.mount_offset[1]), 0.2 * n.taxel_spacing);
  EXPECT_DOUBLE_EQ(a.noise_std, 2.0);
  EXPECT_THROW(perturb_params(n, -0.1, 1), Error);
}

TEST(SensorProperties, Monotonicity) { EXPECT_EQ(props::monotonicity(101, 1000), 0); }
TEST(SensorProperties, ZeroContact) { EXPECT_EQ(props::zero_contact(102, 1000), 0); }
TEST(SensorProperties, Saturation) { EXPECT_EQ(props::saturation(103, 1000), 0); }
TEST(SensorProperties, ShiftEquivariance) {
  long compared = 0;
  EXPECT_EQ(props::shift_equivariance(104, 1000, &compared), 0);
  EXPECT_GT(compared, 1000);
}
TEST(SensorProperties, ReflectionSymmetry) { EXPECT_EQ(props::reflection_symmetry(105, 1000), 0); }
