#pragma once

#include "tacrefine/binary_io.hpp"
#include "tacrefine/dataset.hpp"
#include "tacrefine/error.hpp"
#include "tacrefine/net.hpp"
#include "tacrefine/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

namespace tacrefine {

struct TrainConfig {
  int batch_size = 64;
  std::uint64_t steps_pretrain = 20000;
  std::uint64_t steps_finetune = 5000;
  double lr_pretrain = 1e-3;
  double lr_finetune = 1e-4;
  std::uint64_t pair_budget = 0;  // stream length per phase; 0 means steps * batch_size
  AugmentationConfig augmentation;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw Error(ErrorCode::invalid_argument, "batch_size must be >= 1");
    if (!(lr_pretrain > 0) || !(lr_finetune > 0))
      throw Error(ErrorCode::invalid_argument, "learning rates must be > 0");
    augmentation.validate();
  }

  /// Fingerprint of every field that influences the optimization trajectory.
  std::uint64_t hash() const {
    io::Writer w;
    w.put(batch_size);
    w.put(steps_pretrain);
    w.put(steps_finetune);
    w.put(lr_pretrain);
    w.put(lr_finetune);
    w.put(pair_budget);
    w.put(augmentation.scale_lower);
    w.put(augmentation.scale_upper);
    w.put(augmentation.joint_lower);
    w.put(augmentation.joint_upper);
    w.put(augmentation.scale_enabled);
    w.put(augmentation.joint_enabled);
    w.put(seed);
    return io::fnv1a(w.view());
  }
};

enum class PolicyKind : std::uint8_t { a = 0, b = 1 };

inline const char* to_string(PolicyKind k) { return k == PolicyKind::a ? "a" : "b"; }

/// Everything needed to continue a run exactly. The pair and augmentation
/// streams are counter-based and keyed by (seed, phase, position), so `step`
/// is the whole stream state.
struct TrainState {
  PolicyKind kind = PolicyKind::a;
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  PolicyParams params;
  AdamState adam;
  std::vector<double> losses;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct TrainReport {
  std::vector<double> losses;
  double wall_seconds = 0;
  std::string params_path;
  TrainConfig config;
  PolicyKind kind = PolicyKind::a;
  std::uint64_t phase_switch_step = 0;
};

inline std::uint64_t total_steps(const TrainConfig& cfg, PolicyKind kind) {
  return cfg.steps_pretrain + (kind == PolicyKind::b ? cfg.steps_finetune : 0);
}

inline TrainState start_training(const TrainConfig& cfg, PolicyKind kind) {
  cfg.validate();
  TrainState s;
  s.kind = kind;
  s.config_hash = cfg.hash();
  s.params = init_params(derive_seed(cfg.seed, 0xa11u));
  s.adam = AdamState::zeros(s.params.size());
  return s;
}

namespace detail {

inline void require_domain(const Dataset& ds, DomainTag tag, const char* role) {
  if (ds.domain != tag)
    throw Error(ErrorCode::domain_mismatch, std::string(role) + " dataset is tagged " +
                                                to_string(ds.domain) + ", expected " +
                                                to_string(tag));
  if (ds.records.size() < 2)
    throw Error(ErrorCode::invalid_argument, std::string(role) + " dataset needs >= 2 records");
  for (const SampleRecord& r : ds.records)
    if (r.domain != tag)
      throw Error(ErrorCode::domain_mismatch, std::string(role) + " dataset holds a foreign record");
}

inline Batch phase_batch(const Dataset& ds, const TrainConfig& cfg, std::uint64_t phase,
                         std::uint64_t phase_steps, std::uint64_t phase_step) {
  const auto k = static_cast<std::uint64_t>(cfg.batch_size);
  const std::uint64_t budget = cfg.pair_budget ? cfg.pair_budget : std::max<std::uint64_t>(phase_steps * k, 1);
  const PairStream stream(ds.records.size(), budget, derive_seed(cfg.seed, 0x9a1u, phase));
  std::vector<PairedExample> examples;
  examples.reserve(k);
  for (std::uint64_t i = 0; i < k; ++i) {
    const std::uint64_t position = phase_step * k + i;
    const auto [a, b] = stream.indices(position % budget);
    examples.push_back(augment(make_pair(ds.records[a], ds.records[b]), cfg.augmentation,
                               derive_seed(cfg.seed, 0xa96u, phase, position)));
  }
  return make_batch(std::span<const PairedExample>(examples));
}

}  // namespace detail

/// Advances `state` until `stop_at` total steps (or the end of the plan).
inline void run_training(TrainState& state, const Dataset& sim, const Dataset* real,
                         const TrainConfig& cfg, std::optional<std::uint64_t> stop_at = {}) {
  cfg.validate();
  if (state.config_hash != cfg.hash())
    throw Error(ErrorCode::config, "training state was produced by a different config");
  detail::require_domain(sim, DomainTag::sim, "sim");
  if (state.kind == PolicyKind::b) {
    if (!real) throw Error(ErrorCode::invalid_argument, "policy b needs a real-analogue dataset");
    if (cfg.steps_finetune > 0) detail::require_domain(*real, DomainTag::real_analogue, "real");
  }
  const std::uint64_t end = std::min(total_steps(cfg, state.kind), stop_at.value_or(~std::uint64_t{0}));
  while (state.step < end) {
    const bool pretrain = state.step < cfg.steps_pretrain;
    const Batch batch =
        pretrain ? detail::phase_batch(sim, cfg, 0, cfg.steps_pretrain, state.step)
                 : detail::phase_batch(*real, cfg, 1, cfg.steps_finetune,
                                       state.step - cfg.steps_pretrain);
    const LossAndGradient lg = backward(state.params, batch);
    AdamConfig adam;
    adam.lr = pretrain ? cfg.lr_pretrain : cfg.lr_finetune;
    optimizer_step(state.params, lg.grad, state.adam, adam);
    state.losses.push_back(lg.loss);
    ++state.step;
  }
}

inline std::pair<PolicyParams, TrainReport> train_policy(const Dataset& sim, const Dataset* real,
                                                         const TrainConfig& cfg, PolicyKind kind) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainState state = start_training(cfg, kind);
  run_training(state, sim, real, cfg);
  TrainReport rep;
  rep.losses = std::move(state.losses);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.config = cfg;
  rep.kind = kind;
  rep.phase_switch_step = cfg.steps_pretrain;
  return {std::move(state.params), std::move(rep)};
}

inline std::pair<PolicyParams, TrainReport> train_policy_a(const Dataset& sim,
                                                           const TrainConfig& cfg) {
  return train_policy(sim, nullptr, cfg, PolicyKind::a);
}

inline std::pair<PolicyParams, TrainReport> train_policy_b(const Dataset& sim, const Dataset& real,
                                                           const TrainConfig& cfg) {
  return train_policy(sim, &real, cfg, PolicyKind::b);
}

// ---------------------------------------------------------------------------
// Checkpoint file: "TACK" v1.

inline constexpr std::array<char, 4> kCheckpointMagic{'T', 'A', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

inline void save_checkpoint(const TrainState& s, const std::filesystem::path& path) {
  if (path.empty()) throw Error(ErrorCode::io, "checkpoint path is empty");
  detail::check_params(s.params);
  io::Writer w;
  w.put(kCheckpointMagic);
  w.put(kCheckpointVersion);
  w.put(s.kind);
  w.put(s.config_hash);
  w.put(s.step);
  detail::write_arch(w, s.params.arch);
  w.put(s.params.seed);
  w.put(static_cast<std::uint64_t>(s.params.values.size()));
  w.put_doubles(s.params.values);
  w.put_doubles(s.adam.m);
  w.put_doubles(s.adam.v);
  w.put(s.adam.t);
  w.put(static_cast<std::uint64_t>(s.losses.size()));
  w.put_doubles(s.losses);
  w.finish(path);
}

inline TrainState load_checkpoint(const std::filesystem::path& path) {
  if (path.empty()) throw Error(ErrorCode::io, "checkpoint path is empty");
  io::Reader r(path);
  detail::read_magic_version(r, kCheckpointMagic, kCheckpointVersion);
  TrainState s;
  const std::size_t kind_at = r.offset();
  s.kind = r.get<PolicyKind>();
  if (s.kind != PolicyKind::a && s.kind != PolicyKind::b)
    r.fail(ErrorCode::format, "unknown policy kind", kind_at);
  s.config_hash = r.get<std::uint64_t>();
  s.step = r.get<std::uint64_t>();
  const std::size_t arch_at = r.offset();
  s.params.arch = detail::read_arch(r);
  if (!(s.params.arch == Architecture{}))
    r.fail(ErrorCode::shape_mismatch, "layer-size metadata does not match this build", arch_at);
  s.params.seed = r.get<std::uint64_t>();
  const std::size_t n = Layout(s.params.arch).total;
  detail::read_values(r, s.params.values, n);
  s.adam.m.resize(n);
  s.adam.v.resize(n);
  r.get_doubles(s.adam.m);
  r.get_doubles(s.adam.v);
  s.adam.t = r.get<std::uint64_t>();
  const std::size_t losses_at = r.offset();
  const auto nl = r.get<std::uint64_t>();
  if (nl != s.step) r.fail(ErrorCode::format, "loss series length differs from step", losses_at);
  if (nl > r.remaining() / sizeof(double))
    r.fail(ErrorCode::truncated, "loss series exceeds payload", losses_at);
  s.losses.resize(nl);
  r.get_doubles(s.losses);
  r.expect_end();
  return s;
}

/// Loads a checkpoint and checks it belongs to `cfg`.
inline TrainState resume(const std::filesystem::path& path, const TrainConfig& cfg) {
  TrainState s = load_checkpoint(path);
  if (s.config_hash != cfg.hash())
    throw Error(ErrorCode::config, path.string() + ": checkpoint config hash " +
                                       format_hash(s.config_hash) + " != " +
                                       format_hash(cfg.hash()));
  return s;
}

inline void write_loss_csv(const std::vector<double>& losses, const std::filesystem::path& path,
                           std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path.string());
  out << "# config_hash=" << format_hash(config_hash) << '\n' << "step,loss\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
}

}  // namespace tacrefine
