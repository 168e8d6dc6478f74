#pragma once

#include "tacrefine/error.hpp"
#include "tacrefine/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace tacrefine {

struct MetricThresholds {
  double eps_pos = 0.005;  // m
  double eps_rot = 0.05;   // rad
  int max_steps = 10;
  int repetitions = 5;

  void validate() const {
    if (!(eps_pos > 0) || !(eps_rot > 0) || max_steps < 1 || repetitions < 1)
      throw Error(ErrorCode::invalid_argument, "thresholds must be positive");
  }

  bool within(double dpos, double drot) const { return dpos <= eps_pos && drot <= eps_rot; }
};

struct PoseError {
  double dpos = 0;
  double drot = 0;
};

inline constexpr double kUnitQuaternionTolerance = 1e-6;

/// Euclidean position error and quaternion geodesic angle 2 acos |<Q, Qg>|.
inline PoseError pose_error(const Eigen::Vector3d& p, const Eigen::Vector3d& pg,
                            const Eigen::Quaterniond& q, const Eigen::Quaterniond& qg) {
  if (std::abs(q.norm() - 1.0) > kUnitQuaternionTolerance ||
      std::abs(qg.norm() - 1.0) > kUnitQuaternionTolerance)
    throw Error(ErrorCode::invalid_argument, "quaternion is not unit-norm");
  const double dot = std::clamp(std::abs(q.coeffs().dot(qg.coeffs())), -1.0, 1.0);
  return {(p - pg).norm(), 2.0 * std::acos(dot)};
}

inline PoseError pose_error(const WristPose& w, const WristPose& goal) {
  return pose_error(w.position, goal.position, w.orientation, goal.orientation);
}

inline PoseError pose_error(const Pose6& p, const Pose6& goal) {
  return pose_error(WristPose::from_pose6(p), WristPose::from_pose6(goal));
}

}  // namespace tacrefine
