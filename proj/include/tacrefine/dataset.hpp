#pragma once

#include "tacrefine/binary_io.hpp"
#include "tacrefine/error.hpp"
#include "tacrefine/geometry.hpp"
#include "tacrefine/rng.hpp"
#include "tacrefine/tacsim.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace tacrefine {

struct DimRange {
  double lower = 0.0;
  double upper = 0.0;
  int steps = 1;

  double value(int i) const {
    return steps == 1 ? lower : lower + (upper - lower) * i / (steps - 1);
  }
  double half_range() const { return 0.5 * (upper - lower); }

  friend bool operator==(const DimRange&, const DimRange&) = default;
};

/// Sampled region of wrist pose space. Only pitch, roll, y and z vary.
struct PoseBounds {
  DimRange pitch{-0.15, 0.15, 7};
  DimRange roll{-0.15, 0.15, 7};
  DimRange y{-0.02, 0.02, 7};
  DimRange z{-0.02, 0.02, 7};
  double fixed_x = canonical_grasp_pose()[kX];
  double fixed_yaw = 0.0;

  static PoseBounds sim_default() { return {}; }
  static PoseBounds real_default() {
    PoseBounds b;
    b.pitch.steps = b.roll.steps = b.y.steps = b.z.steps = 4;
    return b;
  }

  void validate() const {
    for (const DimRange* d : {&pitch, &roll, &y, &z}) {
      if (!(d->lower <= d->upper) || d->steps < 1 || !std::isfinite(d->lower) ||
          !std::isfinite(d->upper))
        throw Error(ErrorCode::invalid_argument, "pose bounds need lower <= upper and steps >= 1");
    }
  }

  std::size_t size() const {
    return static_cast<std::size_t>(pitch.steps) * roll.steps * y.steps * z.steps;
  }

  /// Dimension ranges in {pitch, roll, y, z} order.
  std::array<DimRange, 4> dims() const { return {pitch, roll, y, z}; }

  friend bool operator==(const PoseBounds&, const PoseBounds&) = default;
};

/// R6 axis for each sampled dimension in {pitch, roll, y, z} order.
inline constexpr std::array<Axis, 4> kSampledAxes{kPitch, kRoll, kY, kZ};
inline constexpr std::array<const char*, 4> kSampledNames{"pitch", "roll", "y", "z"};

enum class DomainTag : std::uint8_t { sim = 0, real_analogue = 1 };

inline const char* to_string(DomainTag t) { return t == DomainTag::sim ? "sim" : "real_analogue"; }

struct SampleRecord {
  Pose6 pose;
  Vec6 joints{};
  TactileTriplet images{};
  DomainTag domain = DomainTag::sim;
  std::uint64_t record_id = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct PairedExample {
  SampleRecord current;
  SampleRecord target;
  Vec6 delta_x{};

  friend bool operator==(const PairedExample&, const PairedExample&) = default;
};

struct AugmentationConfig {
  double scale_lower = 0.5;
  double scale_upper = 1.0;
  double joint_lower = -0.04;
  double joint_upper = 0.04;
  bool scale_enabled = true;
  bool joint_enabled = true;

  void validate() const {
    if (!(scale_lower <= scale_upper) || !(scale_lower >= 0) || !(joint_lower <= joint_upper))
      throw Error(ErrorCode::invalid_argument, "invalid augmentation ranges");
  }
};

/// Cartesian grid, lexicographic with pitch outermost and z innermost.
inline std::vector<Pose6> sample_grid(const PoseBounds& bounds) {
  bounds.validate();
  std::vector<Pose6> out;
  out.reserve(bounds.size());
  for (int ip = 0; ip < bounds.pitch.steps; ++ip)
    for (int ir = 0; ir < bounds.roll.steps; ++ir)
      for (int iy = 0; iy < bounds.y.steps; ++iy)
        for (int iz = 0; iz < bounds.z.steps; ++iz) {
          Pose6 p;
          p[kX] = bounds.fixed_x;
          p[kY] = bounds.y.value(iy);
          p[kZ] = bounds.z.value(iz);
          p[kRoll] = bounds.roll.value(ir);
          p[kPitch] = bounds.pitch.value(ip);
          p[kYaw] = bounds.fixed_yaw;
          out.push_back(p);
        }
  return out;
}

/// A recorded dataset plus the provenance stored in its file header.
struct Dataset {
  DomainTag domain = DomainTag::sim;
  std::uint64_t seed = 0;
  std::uint64_t sensor_hash = 0;
  std::uint64_t config_hash = 0;
  PoseBounds bounds;
  std::vector<SampleRecord> records;
  std::vector<std::size_t> skipped;  // grid indices without contact; not persisted

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.domain == b.domain && a.seed == b.seed && a.sensor_hash == b.sensor_hash &&
           a.config_hash == b.config_hash && a.bounds == b.bounds && a.records == b.records;
  }
};

/// Renders one record per reachable pose; poses without contact are skipped
/// and listed in `skipped`.
inline Dataset collect(const PoseBounds& bounds, const ObjectModel& object,
                       const SensorParams& params, const HandConfig& hand, std::uint64_t seed,
                       DomainTag domain) {
  const std::vector<Pose6> poses = sample_grid(bounds);
  Dataset ds;
  ds.domain = domain;
  ds.seed = seed;
  ds.sensor_hash = params.hash();
  ds.bounds = bounds;
  ds.records.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    auto obs = render_hand(WristPose::from_pose6(poses[i]), object, params, hand,
                           derive_seed(seed, i));
    if (!obs) {
      ds.skipped.push_back(i);
      continue;
    }
    SampleRecord r;
    r.pose = poses[i];
    r.joints = obs->state.joints;
    r.images = obs->images;
    r.domain = domain;
    r.record_id = i;
    ds.records.push_back(r);
  }
  if (ds.skipped.size() * 2 > poses.size()) {
    throw Error(ErrorCode::non_contact,
                std::to_string(ds.skipped.size()) + " of " + std::to_string(poses.size()) +
                    " poses have no contact; check pose bounds");
  }
  return ds;
}

inline PairedExample make_pair(const SampleRecord& current, const SampleRecord& target) {
  return {current, target, pose_difference(target.pose, current.pose)};
}

namespace detail {

/// Keyed bijection on [0, n) built from a balanced Feistel network with cycle
/// walking.
inline std::uint64_t permute_index(std::uint64_t i, std::uint64_t n, std::uint64_t key) {
  if (n <= 1) return 0;
  int bits = 2;
  while ((std::uint64_t{1} << bits) < n) bits += 2;
  const int half = bits / 2;
  const std::uint64_t mask = (std::uint64_t{1} << half) - 1;
  std::uint64_t x = i;
  do {
    std::uint64_t l = x >> half, r = x & mask;
    for (int round = 0; round < 4; ++round) {
      const std::uint64_t f = mix64(r ^ derive_seed(key, static_cast<std::uint64_t>(round))) & mask;
      const std::uint64_t nl = r;
      r = l ^ f;
      l = nl;
    }
    x = (l << half) | r;
  } while (x >= n);
  return x;
}

}  // namespace detail

/// Stream of (current, target) index pairs over N records. Below N^2 the
/// pairs are drawn uniformly with replacement; at or above N^2 every ordered
/// pair appears once per N^2 consecutive positions in a keyed shuffled order.
/// Each position is a pure function of (seed, position).
class PairStream {
 public:
  PairStream(std::size_t n_records, std::uint64_t budget, std::uint64_t seed)
      : n_(n_records), budget_(budget), seed_(seed) {
    if (n_records < 2) throw Error(ErrorCode::invalid_argument, "pairing needs at least 2 records");
  }

  std::uint64_t size() const { return budget_; }
  bool enumerates() const { return budget_ >= n_ * n_; }

  std::pair<std::size_t, std::size_t> indices(std::uint64_t position) const {
    const std::uint64_t nn = static_cast<std::uint64_t>(n_) * n_;
    if (enumerates()) {
      const std::uint64_t epoch = position / nn;
      const std::uint64_t k = detail::permute_index(position % nn, nn, derive_seed(seed_, epoch));
      return {static_cast<std::size_t>(k / n_), static_cast<std::size_t>(k % n_)};
    }
    CounterRng rng(derive_seed(seed_, 0xfa11u, position));
    const auto a = rng.below(n_);
    const auto b = rng.below(n_);
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
  }

 private:
  std::size_t n_;
  std::uint64_t budget_;
  std::uint64_t seed_;
};

inline PairStream cross_combine(const std::vector<SampleRecord>& records, std::uint64_t pair_budget,
                                std::uint64_t seed) {
  return PairStream(records.size(), pair_budget, seed);
}

/// Materializes the first `pair_budget` examples of the stream.
inline std::vector<PairedExample> cross_combine_all(const std::vector<SampleRecord>& records,
                                                    std::uint64_t pair_budget,
                                                    std::uint64_t seed) {
  const PairStream stream = cross_combine(records, pair_budget, seed);
  std::vector<PairedExample> out;
  out.reserve(pair_budget);
  for (std::uint64_t i = 0; i < stream.size(); ++i) {
    const auto [a, b] = stream.indices(i);
    out.push_back(make_pair(records[a], records[b]));
  }
  return out;
}

/// Scales the current images by one s ~ U(scale range) and adds independent
/// U(joint range) noise to each current joint. Target and label untouched.
inline PairedExample augment(const PairedExample& example, const AugmentationConfig& config,
                             std::uint64_t seed) {
  config.validate();
  PairedExample out = example;
  CounterRng rng(seed);
  if (config.scale_enabled) {
    const double s = rng.uniform(config.scale_lower, config.scale_upper);
    for (TactileImage& img : out.current.images)
      for (std::uint8_t& v : img.values)
        v = static_cast<std::uint8_t>(std::clamp(std::round(s * v), 0.0, 255.0));
  }
  if (config.joint_enabled) {
    for (double& q : out.current.joints) q += rng.uniform(config.joint_lower, config.joint_upper);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary container: "TACD" v1.

inline constexpr std::array<char, 4> kDatasetMagic{'T', 'A', 'C', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;

enum class PayloadKind : std::uint8_t { records = 0, pairs = 1 };

namespace detail {

struct ContainerHeader {
  PayloadKind kind = PayloadKind::records;
  DomainTag domain = DomainTag::sim;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  std::uint64_t sensor_hash = 0;
  std::uint64_t config_hash = 0;
  PoseBounds bounds;
};

inline void write_header(io::Writer& w, const ContainerHeader& h) {
  w.put(kDatasetMagic);
  w.put(kDatasetVersion);
  w.put(h.kind);
  w.put(h.domain);
  w.put(h.count);
  w.put(h.seed);
  w.put(h.sensor_hash);
  w.put(h.config_hash);
  for (const DimRange& d : h.bounds.dims()) {
    w.put(d.lower);
    w.put(d.upper);
    w.put(static_cast<std::uint32_t>(d.steps));
  }
  w.put(h.bounds.fixed_x);
  w.put(h.bounds.fixed_yaw);
}

inline ContainerHeader read_header(io::Reader& r, PayloadKind expected) {
  ContainerHeader h;
  if (r.get<std::array<char, 4>>() != kDatasetMagic) r.fail(ErrorCode::format, "bad magic", 0);
  const std::size_t version_at = r.offset();
  if (const auto v = r.get<std::uint16_t>(); v != kDatasetVersion)
    r.fail(ErrorCode::version, "unsupported version " + std::to_string(v), version_at);
  const std::size_t kind_at = r.offset();
  h.kind = r.get<PayloadKind>();
  if (h.kind != expected) r.fail(ErrorCode::format, "unexpected payload kind", kind_at);
  const std::size_t domain_at = r.offset();
  h.domain = r.get<DomainTag>();
  if (h.domain != DomainTag::sim && h.domain != DomainTag::real_analogue)
    r.fail(ErrorCode::format, "unknown domain tag", domain_at);
  h.count = r.get<std::uint64_t>();
  h.seed = r.get<std::uint64_t>();
  h.sensor_hash = r.get<std::uint64_t>();
  h.config_hash = r.get<std::uint64_t>();
  std::array<DimRange*, 4> dims{&h.bounds.pitch, &h.bounds.roll, &h.bounds.y, &h.bounds.z};
  for (DimRange* d : dims) {
    d->lower = r.get<double>();
    d->upper = r.get<double>();
    d->steps = static_cast<int>(r.get<std::uint32_t>());
  }
  h.bounds.fixed_x = r.get<double>();
  h.bounds.fixed_yaw = r.get<double>();
  return h;
}

inline void write_record(io::Writer& w, const SampleRecord& rec) {
  w.put(rec.record_id);
  w.put_doubles(rec.pose.v);
  w.put_doubles(rec.joints);
  for (const TactileImage& img : rec.images) w.put_bytes(img.values);
}

inline SampleRecord read_record(io::Reader& r, DomainTag domain) {
  SampleRecord rec;
  rec.domain = domain;
  rec.record_id = r.get<std::uint64_t>();
  r.get_doubles(rec.pose.v);
  r.get_doubles(rec.joints);
  for (TactileImage& img : rec.images) r.get_bytes(img.values);
  return rec;
}

inline constexpr std::size_t kRecordBytes = 8 + 6 * 8 + 6 * 8 + kFingers * kTaxels;

inline void check_count(io::Reader& r, std::uint64_t count, std::size_t item_bytes) {
  if (count > r.remaining() / item_bytes || count * item_bytes != r.remaining()) {
    r.fail(ErrorCode::truncated,
           "record count " + std::to_string(count) + " does not match payload of " +
               std::to_string(r.remaining()) + " bytes",
           r.offset());
  }
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  for (const SampleRecord& rec : ds.records)
    if (rec.domain != ds.domain)
      throw Error(ErrorCode::domain_mismatch, "record domain differs from dataset domain");
  io::Writer w;
  detail::write_header(w, {PayloadKind::records, ds.domain, ds.records.size(), ds.seed,
                           ds.sensor_hash, ds.config_hash, ds.bounds});
  for (const SampleRecord& rec : ds.records) detail::write_record(w, rec);
  w.finish(path);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  io::Reader r(path);
  const auto h = detail::read_header(r, PayloadKind::records);
  detail::check_count(r, h.count, detail::kRecordBytes);
  Dataset ds;
  ds.domain = h.domain;
  ds.seed = h.seed;
  ds.sensor_hash = h.sensor_hash;
  ds.config_hash = h.config_hash;
  ds.bounds = h.bounds;
  ds.records.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) ds.records.push_back(detail::read_record(r, h.domain));
  r.expect_end();
  return ds;
}

/// Pair container; shares the header layout with datasets.
struct PairSet {
  DomainTag domain = DomainTag::sim;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<PairedExample> examples;

  friend bool operator==(const PairSet&, const PairSet&) = default;
};

inline void save_pairs(const PairSet& ps, const std::filesystem::path& path) {
  io::Writer w;
  detail::write_header(w, {PayloadKind::pairs, ps.domain, ps.examples.size(), ps.seed, 0,
                           ps.config_hash, PoseBounds{}});
  for (const PairedExample& ex : ps.examples) {
    if (ex.current.domain != ps.domain || ex.target.domain != ps.domain)
      throw Error(ErrorCode::domain_mismatch, "pair domain differs from container domain");
    detail::write_record(w, ex.current);
    detail::write_record(w, ex.target);
    w.put_doubles(ex.delta_x);
  }
  w.finish(path);
}

inline PairSet load_pairs(const std::filesystem::path& path) {
  io::Reader r(path);
  const auto h = detail::read_header(r, PayloadKind::pairs);
  detail::check_count(r, h.count, 2 * detail::kRecordBytes + 6 * 8);
  PairSet ps;
  ps.domain = h.domain;
  ps.seed = h.seed;
  ps.config_hash = h.config_hash;
  ps.examples.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    PairedExample ex;
    ex.current = detail::read_record(r, h.domain);
    ex.target = detail::read_record(r, h.domain);
    r.get_doubles(ex.delta_x);
    ps.examples.push_back(ex);
  }
  r.expect_end();
  return ps;
}

inline std::string format_hash(std::uint64_t h) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// One row per record; tactile payload omitted.
inline void export_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path.string());
  out << "# config_hash=" << format_hash(ds.config_hash) << '\n';
  out << "record_id,domain,x,y,z,roll,pitch,yaw,q0,q1,q2,q3,q4,q5,active_taxels\n";
  out << std::setprecision(17);
  for (const SampleRecord& r : ds.records) {
    int active = 0;
    for (const TactileImage& img : r.images)
      for (std::uint8_t v : img.values) active += v > 0;
    out << r.record_id << ',' << to_string(r.domain);
    for (double v : r.pose.v) out << ',' << v;
    for (double q : r.joints) out << ',' << q;
    out << ',' << active << '\n';
  }
}

}  // namespace tacrefine
