#pragma once

// Synthetic fingertip tactile sensor and a three-finger closure model.
//
// The object is a rigid flat slab held fixed in the world. The hand closes a
// thumb against two opposing fingers; each finger is a hinge with a coupled
// distal joint whose pad carries an 11x9 taxel grid. Each taxel is a point
// spring: reading ~ min(stiffness * penetration, max_force).

#include "tacrefine/binary_io.hpp"
#include "tacrefine/error.hpp"
#include "tacrefine/geometry.hpp"
#include "tacrefine/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tacrefine {

inline constexpr int kTaxelRows = 11;
inline constexpr int kTaxelCols = 9;
inline constexpr int kTaxels = kTaxelRows * kTaxelCols;
inline constexpr int kFingers = 3;

enum Finger : int { kThumb = 0, kIndex = 1, kMiddle = 2 };

/// Quantized normal-force readings, row-major (row index along the finger).
struct TactileImage {
  std::array<std::uint8_t, kTaxels> values{};

  std::uint8_t at(int row, int col) const { return values[row * kTaxelCols + col]; }
  std::uint8_t& at(int row, int col) { return values[row * kTaxelCols + col]; }

  bool all_zero() const {
    return std::all_of(values.begin(), values.end(), [](std::uint8_t v) { return v == 0; });
  }

  friend bool operator==(const TactileImage&, const TactileImage&) = default;
};

using TactileTriplet = std::array<TactileImage, kFingers>;

struct SensorParams {
  int rows = kTaxelRows;
  int cols = kTaxelCols;
  double taxel_spacing = 0.0011;  // m
  double stiffness = 1.0e4;       // N/m; 0.5 mm maps to reading ~128
  double max_force = 10.0;        // N
  std::vector<double> gain_map = std::vector<double>(kTaxels, 1.0);
  double noise_std = 0.0;                 // quantized units
  std::array<double, 2> mount_offset{};   // (row axis, col axis), m

  static SensorParams nominal() { return {}; }

  void validate() const {
    if (rows != kTaxelRows || cols != kTaxelCols)
      throw Error(ErrorCode::invalid_argument, "sensor grid must be 11x9");
    if (!(taxel_spacing > 0) || !(stiffness > 0) || !(max_force > 0))
      throw Error(ErrorCode::invalid_argument,
                  "taxel_spacing, stiffness and max_force must be positive");
    if (gain_map.size() != static_cast<std::size_t>(kTaxels))
      throw Error(ErrorCode::invalid_argument, "gain_map must hold 99 entries");
    if (!(noise_std >= 0)) throw Error(ErrorCode::invalid_argument, "noise_std must be >= 0");
  }

  /// Fingerprint of every field, stored in dataset headers.
  std::uint64_t hash() const {
    std::string s;
    s.reserve(64 + gain_map.size() * 24);
    auto add = [&s](double v) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      s += std::to_string(bits);
      s += ',';
    };
    add(rows);
    add(cols);
    add(taxel_spacing);
    add(stiffness);
    add(max_force);
    for (double g : gain_map) add(g);
    add(noise_std);
    add(mount_offset[0]);
    add(mount_offset[1]);
    return io::fnv1a(s);
  }

  friend bool operator==(const SensorParams&, const SensorParams&) = default;
};

struct Disc {
  double radius = 0.08;
};
struct RoundedRect {
  double half_x = 0.08;
  double half_y = 0.05;
  double corner_radius = 0.015;
};
struct Bar {
  double half_length = 0.08;
  double half_width = 0.02;
};

using Shape = std::variant<Disc, RoundedRect, Bar>;

inline std::string shape_name(const Shape& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Disc>) return "disc";
        else if constexpr (std::is_same_v<T, RoundedRect>) return "rounded_rect";
        else return "bar";
      },
      s);
}

namespace detail {

inline double box_sdf(double x, double y, double hx, double hy) {
  const double qx = std::abs(x) - hx;
  const double qy = std::abs(y) - hy;
  const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

}  // namespace detail

/// Rigid flat object: planar outline in its local xy plane, faces at
/// z = +-thickness/2.
struct ObjectModel {
  Shape shape = Disc{};
  double thickness = 0.008;
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();

  void validate() const {
    if (!(thickness > 0)) throw Error(ErrorCode::invalid_argument, "object thickness must be > 0");
    const bool ok = std::visit(
        [](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Disc>) return v.radius > 0;
          else if constexpr (std::is_same_v<T, RoundedRect>)
            return v.half_x > 0 && v.half_y > 0 && v.corner_radius > 0 &&
                   v.corner_radius <= std::min(v.half_x, v.half_y);
          else return v.half_length > 0 && v.half_width > 0;
        },
        shape);
    if (!ok) throw Error(ErrorCode::invalid_argument, "object shape dimensions must be > 0");
    if (!pose.matrix().allFinite()) throw Error(ErrorCode::invalid_argument, "object pose not finite");
  }

  /// Distance from (x, y) to the outline, positive inside.
  double planar_depth(double x, double y) const {
    return std::visit(
        [x, y](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Disc>) {
            return v.radius - std::hypot(x, y);
          } else if constexpr (std::is_same_v<T, RoundedRect>) {
            const double r = v.corner_radius;
            return -(detail::box_sdf(x, y, v.half_x - r, v.half_y - r) - r);
          } else {
            return -detail::box_sdf(x, y, v.half_length, v.half_width);
          }
        },
        shape);
  }

  bool contains_planar(double x, double y) const { return planar_depth(x, y) > 0; }

  /// Penetration depth of a world point: distance to the nearest surface for
  /// points inside the volume, zero outside.
  double penetration(const Eigen::Vector3d& world_point) const {
    const Eigen::Vector3d p = pose.inverse(Eigen::Isometry) * world_point;
    const double face = thickness / 2 - std::abs(p.z());
    if (face <= 0) return 0.0;
    const double side = planar_depth(p.x(), p.y());
    if (side <= 0) return 0.0;
    return std::min(face, side);
  }
};

/// Parametric three-finger layout. All lengths in meters, angles in radians.
struct HandConfig {
  double link_proximal = 0.05;
  double link_distal = 0.02;
  double finger_spacing = 0.010;    // index/middle offset along the finger axis
  double coupling_thumb = -0.6;     // distal = coupling * proximal
  double coupling_finger = -1.4;
  double pad_rest_offset = 0.0031;  // pad distance from the grasp plane at zero joint angle
  double target_depth = 0.0009;     // closure stops at this penetration
  double joint_lower = -1.0;
  double joint_upper = 1.0;
  double scan_step = 0.01;
  int bisection_iterations = 50;
  double taxel_spacing = 0.0011;    // physical pad pitch

  void validate() const {
    if (!(link_proximal > 0) || !(link_distal > 0) || !(target_depth > 0) ||
        !(joint_upper > joint_lower) || !(scan_step > 0) || bisection_iterations < 1 ||
        !(taxel_spacing > 0))
      throw Error(ErrorCode::invalid_argument, "invalid hand config");
  }

  double coupling(int finger) const { return finger == kThumb ? coupling_thumb : coupling_finger; }
};

/// Wrist pose that places the pads just inside the rim of the default disc.
inline Pose6 canonical_grasp_pose() { return Pose6{{0.078, 0.0, 0.0, 0.0, 0.0, 0.0}}; }

struct HandState {
  WristPose wrist;
  Vec6 joints{};  // (proximal, distal) per finger: thumb, index, middle
  std::array<Eigen::Isometry3d, kFingers> fingertip_frames{};
  std::array<bool, kFingers> contact{};
  std::array<double, kFingers> max_penetration{};

  bool any_contact() const { return contact[0] || contact[1] || contact[2]; }
};

namespace detail {

/// Pad frame in the hand frame for a proximal angle. Columns of the rotation
/// are the taxel row axis, the column axis, and the normal toward the object.
inline Eigen::Isometry3d pad_in_hand(const HandConfig& hc, int finger, double theta) {
  const double reach = hc.link_proximal + hc.link_distal;
  const double side = finger == kThumb ? 1.0 : -1.0;  // thumb below, fingers above
  double base_y = reach;
  if (finger == kIndex) base_y += hc.finger_spacing;
  if (finger == kMiddle) base_y -= hc.finger_spacing;
  const double distal = theta * (1.0 + hc.coupling(finger));

  const Eigen::Vector3d center(
      0.0, base_y - hc.link_proximal * std::cos(theta) - hc.link_distal * std::cos(distal),
      side * (-hc.pad_rest_offset + hc.link_proximal * std::sin(theta) +
              hc.link_distal * std::sin(distal)));
  const Eigen::Vector3d u(0.0, -std::cos(distal), side * std::sin(distal));
  const Eigen::Vector3d v(1.0, 0.0, 0.0);
  Eigen::Vector3d n = u.cross(v);
  if (n.z() * side < 0) n = -n;

  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear().col(0) = u;
  t.linear().col(1) = v;
  t.linear().col(2) = n;
  t.translation() = center;
  return t;
}

/// Taxel position in the pad frame.
inline Eigen::Vector3d taxel_point(int row, int col, double spacing, double off_row,
                                   double off_col) {
  return {(row - (kTaxelRows - 1) / 2.0) * spacing + off_row,
          (col - (kTaxelCols - 1) / 2.0) * spacing + off_col, 0.0};
}

inline double max_pad_penetration(const Eigen::Isometry3d& pad_world, const ObjectModel& object,
                                  double spacing) {
  double best = 0.0;
  for (int r = 0; r < kTaxelRows; ++r)
    for (int c = 0; c < kTaxelCols; ++c)
      best = std::max(best, object.penetration(pad_world * taxel_point(r, c, spacing, 0, 0)));
  return best;
}

}  // namespace detail

/// Closes every finger until its deepest taxel reaches the target depth or
/// the joint hits its upper limit. Returns the state even when nothing is
/// touched; callers check `any_contact()`.
inline HandState close_fingers(const WristPose& wrist, const ObjectModel& object,
                               const HandConfig& hc) {
  if (!wrist.finite()) throw Error(ErrorCode::invalid_argument, "wrist pose not finite");
  object.validate();
  hc.validate();

  HandState state;
  state.wrist = wrist;
  const Eigen::Isometry3d hand = wrist.isometry();

  for (int f = 0; f < kFingers; ++f) {
    auto depth_at = [&](double theta) {
      return detail::max_pad_penetration(hand * detail::pad_in_hand(hc, f, theta), object,
                                         hc.taxel_spacing);
    };

    // Scan from the open limit to the first bracket where the target depth is
    // reached, then bisect inside it. A full-range bisection is ill-posed: a
    // closing finger eventually passes through a thin slab.
    double theta = hc.joint_upper;
    const int n_scan = static_cast<int>(std::ceil((hc.joint_upper - hc.joint_lower) / hc.scan_step));
    double prev = hc.joint_lower;
    if (depth_at(prev) >= hc.target_depth) {
      theta = prev;
    } else {
      for (int i = 1; i <= n_scan; ++i) {
        const double cur = std::min(hc.joint_lower + i * hc.scan_step, hc.joint_upper);
        if (depth_at(cur) >= hc.target_depth) {
          double lo = prev, hi = cur;
          for (int k = 0; k < hc.bisection_iterations; ++k) {
            const double mid = 0.5 * (lo + hi);
            (depth_at(mid) < hc.target_depth ? lo : hi) = mid;
          }
          theta = hi;
          break;
        }
        prev = cur;
      }
    }

    const Eigen::Isometry3d pad = hand * detail::pad_in_hand(hc, f, theta);
    state.joints[2 * f] = theta;
    state.joints[2 * f + 1] = hc.coupling(f) * theta;
    state.fingertip_frames[f] = pad;
    state.max_penetration[f] = detail::max_pad_penetration(pad, object, hc.taxel_spacing);
    state.contact[f] = state.max_penetration[f] > 0.0;
  }
  return state;
}

/// Renders one fingertip. Reading per taxel:
/// clamp(round(255 * gain * min(k d, F) / F + noise), 0, 255).
inline TactileImage render_tactile(const Eigen::Isometry3d& fingertip_frame,
                                   const ObjectModel& object, const SensorParams& params,
                                   std::uint64_t rng_seed) {
  params.validate();
  CounterRng rng(rng_seed);
  TactileImage img;
  for (int r = 0; r < kTaxelRows; ++r) {
    for (int c = 0; c < kTaxelCols; ++c) {
      const int i = r * kTaxelCols + c;
      const Eigen::Vector3d p =
          fingertip_frame * detail::taxel_point(r, c, params.taxel_spacing,
                                                params.mount_offset[0], params.mount_offset[1]);
      const double d = object.penetration(p);
      const double force = d > 0 ? std::min(params.stiffness * d, params.max_force) : 0.0;
      double reading = 255.0 * params.gain_map[i] * force / params.max_force;
      if (params.noise_std > 0) reading += params.noise_std * rng.normal();
      img.values[i] = static_cast<std::uint8_t>(std::clamp(std::round(reading), 0.0, 255.0));
    }
  }
  return img;
}

/// Real-analogue parameterization: per-taxel gain, stiffness scale, mount
/// offset and reading noise, all controlled by one severity knob.
inline SensorParams perturb_params(const SensorParams& nominal, double severity,
                                   std::uint64_t rng_seed) {
  nominal.validate();
  if (!(severity >= 0)) throw Error(ErrorCode::invalid_argument, "severity must be >= 0");
  if (severity == 0) return nominal;
  CounterRng rng(derive_seed(rng_seed, 0x5e5u));
  SensorParams p = nominal;
  for (double& g : p.gain_map) g *= rng.uniform(1 - severity, 1 + severity);
  p.stiffness *= rng.uniform(1 - severity, 1 + severity);
  const double reach = severity * nominal.taxel_spacing;
  p.mount_offset[0] = nominal.mount_offset[0] + rng.uniform(-reach, reach);
  p.mount_offset[1] = nominal.mount_offset[1] + rng.uniform(-reach, reach);
  p.noise_std = severity * 10.0;
  return p;
}

struct HandObservation {
  HandState state;
  TactileTriplet images;
};

/// Closure followed by per-finger rendering. Empty when no finger touches.
inline std::optional<HandObservation> render_hand(const WristPose& wrist,
                                                  const ObjectModel& object,
                                                  const SensorParams& params,
                                                  const HandConfig& hc, std::uint64_t seed) {
  HandObservation obs{close_fingers(wrist, object, hc), {}};
  if (!obs.state.any_contact()) return std::nullopt;
  for (int f = 0; f < kFingers; ++f)
    obs.images[f] = render_tactile(obs.state.fingertip_frames[f], object, params,
                                   derive_seed(seed, static_cast<std::uint64_t>(f)));
  return obs;
}

}  // namespace tacrefine
