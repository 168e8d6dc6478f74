#pragma once

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace tacrefine {

using Vec6 = std::array<double, 6>;

/// Component order of every R6 pose or increment in this library.
enum Axis : std::size_t { kX = 0, kY, kZ, kRoll, kPitch, kYaw };

inline constexpr std::array<const char*, 6> kAxisNames{"x", "y", "z", "roll", "pitch", "yaw"};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (a > -std::numbers::pi && a <= std::numbers::pi) return a;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Wrist pose in the sampling parameterization: translation in meters, then
/// roll, pitch, yaw in radians with R = Rz(yaw) * Ry(pitch) * Rx(roll).
struct Pose6 {
  Vec6 v{};

  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  Eigen::Vector3d position() const { return {v[kX], v[kY], v[kZ]}; }

  friend bool operator==(const Pose6&, const Pose6&) = default;
};

inline Eigen::Matrix3d rotation_from_rpy(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

inline Eigen::Quaterniond quaternion_from_rpy(double roll, double pitch, double yaw) {
  const double cr = std::cos(roll / 2), sr = std::sin(roll / 2);
  const double cp = std::cos(pitch / 2), sp = std::sin(pitch / 2);
  const double cy = std::cos(yaw / 2), sy = std::sin(yaw / 2);
  Eigen::Quaterniond q(cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy,
                       cr * sp * cy + sr * cp * sy, cr * cp * sy - sr * sp * cy);
  q.normalize();
  return q;
}

inline Eigen::Isometry3d to_isometry(const Pose6& p) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = rotation_from_rpy(p[kRoll], p[kPitch], p[kYaw]);
  t.translation() = p.position();
  return t;
}

/// Inverse of to_isometry for pitch away from +-pi/2.
inline Pose6 from_isometry(const Eigen::Isometry3d& t) {
  const Eigen::Matrix3d r = t.linear();
  Pose6 p;
  p[kX] = t.translation().x();
  p[kY] = t.translation().y();
  p[kZ] = t.translation().z();
  p[kPitch] = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  p[kRoll] = std::atan2(r(2, 1), r(2, 2));
  p[kYaw] = std::atan2(r(1, 0), r(0, 0));
  return p;
}

/// Wrist pose as position plus unit quaternion (w, x, y, z).
struct WristPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  static WristPose from_pose6(const Pose6& p) {
    return {p.position(), quaternion_from_rpy(p[kRoll], p[kPitch], p[kYaw])};
  }

  Eigen::Isometry3d isometry() const {
    Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
    t.linear() = orientation.toRotationMatrix();
    t.translation() = position;
    return t;
  }

  bool finite() const {
    return position.allFinite() && orientation.coeffs().allFinite();
  }
};

/// Componentwise target - current with angles wrapped into (-pi, pi].
inline Vec6 pose_difference(const Pose6& target, const Pose6& current) {
  Vec6 d{};
  for (std::size_t i = 0; i < 3; ++i) d[i] = target[i] - current[i];
  for (std::size_t i = 3; i < 6; ++i) d[i] = wrap_angle(target[i] - current[i]);
  return d;
}

/// Applies an increment in the same parameterization used for labels:
/// translation added in the world frame, Euler offsets added and wrapped.
inline Pose6 apply_increment(const Pose6& pose, const Vec6& delta) {
  Pose6 out = pose;
  for (std::size_t i = 0; i < 3; ++i) out[i] += delta[i];
  for (std::size_t i = 3; i < 6; ++i) out[i] = wrap_angle(out[i] + delta[i]);
  return out;
}

}  // namespace tacrefine
