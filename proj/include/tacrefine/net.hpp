#pragma once

#include "tacrefine/binary_io.hpp"
#include "tacrefine/dataset.hpp"
#include "tacrefine/error.hpp"
#include "tacrefine/rng.hpp"
#include "tacrefine/tacsim.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tacrefine {

/// Layer widths. Stored in parameter files and checked on load.
struct Architecture {
  int fingers = kFingers;
  int taxels = kTaxels;
  int enc_hidden = 64;
  int enc_out = 32;
  int joints = 6;
  int fusion = 128;
  int head_hidden1 = 64;
  int head_hidden2 = 32;
  int outputs = 6;

  int fusion_in() const { return 2 * fingers * enc_out + joints; }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Dense layer slot inside the flat parameter vector. The weight block is an
/// out x in column-major matrix, so W(i, j) lives at w + j * out + i.
struct DenseSlot {
  std::size_t w = 0;
  std::size_t b = 0;
  int out = 0;
  int in = 0;

  std::size_t weight_index(int i, int j) const { return w + static_cast<std::size_t>(j) * out + i; }
  std::size_t fan_sum() const { return static_cast<std::size_t>(out + in); }
};

struct Layout {
  std::array<DenseSlot, kFingers> enc1;
  std::array<DenseSlot, kFingers> enc2;
  std::size_t pe = 0;  // fingers x enc_out block, finger-major
  DenseSlot fuse, head1, head2, head3;
  std::size_t total = 0;

  explicit Layout(const Architecture& a = {}) {
    std::size_t at = 0;
    auto dense = [&at](int out, int in) {
      DenseSlot s;
      s.out = out;
      s.in = in;
      s.w = at;
      at += static_cast<std::size_t>(out) * in;
      s.b = at;
      at += out;
      return s;
    };
    for (int f = 0; f < kFingers; ++f) {
      enc1[f] = dense(a.enc_hidden, a.taxels);
      enc2[f] = dense(a.enc_out, a.enc_hidden);
    }
    pe = at;
    at += static_cast<std::size_t>(a.fingers) * a.enc_out;
    fuse = dense(a.fusion, a.fusion_in());
    head1 = dense(a.head_hidden1, a.fusion);
    head2 = dense(a.head_hidden2, a.head_hidden1);
    head3 = dense(a.outputs, a.head_hidden2);
    total = at;
  }

  std::vector<DenseSlot> dense_slots() const {
    std::vector<DenseSlot> out(enc1.begin(), enc1.end());
    out.insert(out.end(), enc2.begin(), enc2.end());
    out.insert(out.end(), {fuse, head1, head2, head3});
    return out;
  }
};

struct PolicyParams {
  Architecture arch;
  std::uint64_t seed = 0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// One partial derivative per entry of PolicyParams::values.
struct GradientSet {
  std::vector<double> values;
};

struct PolicyInput {
  TactileTriplet current{};
  TactileTriplet target{};
  Vec6 joints{};
};

inline PolicyInput to_input(const PairedExample& ex) {
  return {ex.current.images, ex.target.images, ex.current.joints};
}

/// Xavier-uniform weights, zero biases and positional encodings.
inline PolicyParams init_params(std::uint64_t seed, const Architecture& arch = {}) {
  const Layout layout(arch);
  PolicyParams p;
  p.arch = arch;
  p.seed = seed;
  p.values.assign(layout.total, 0.0);
  CounterRng rng(derive_seed(seed, 0x1417u));
  for (const DenseSlot& s : layout.dense_slots()) {
    const double a = std::sqrt(6.0 / static_cast<double>(s.fan_sum()));
    const std::size_t n = static_cast<std::size_t>(s.out) * s.in;
    for (std::size_t k = 0; k < n; ++k) p.values[s.w + k] = rng.uniform(-a, a);
  }
  return p;
}

using Matrix = Eigen::MatrixXd;
using MatMap = Eigen::Map<Matrix>;
using ConstMatMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline ConstMatMap weight(const std::vector<double>& v, const DenseSlot& s) {
  return {v.data() + s.w, s.out, s.in};
}
inline ConstVecMap bias(const std::vector<double>& v, const DenseSlot& s) {
  return {v.data() + s.b, s.out};
}

/// Column-per-example batch with images scaled to [0, 1].
struct Batch {
  std::array<Matrix, kFingers> current;
  std::array<Matrix, kFingers> target;
  Matrix joints;
  Matrix labels;  // empty when not training

  Eigen::Index size() const { return joints.cols(); }
};

inline void fill_image_column(Matrix& m, Eigen::Index col, const TactileImage& img) {
  for (int t = 0; t < kTaxels; ++t) m(t, col) = img.values[t] / 255.0;
}

inline Batch make_batch(std::span<const PolicyInput> inputs) {
  const auto k = static_cast<Eigen::Index>(inputs.size());
  Batch b;
  for (int f = 0; f < kFingers; ++f) {
    b.current[f].resize(kTaxels, k);
    b.target[f].resize(kTaxels, k);
  }
  b.joints.resize(6, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const PolicyInput& in = inputs[i];
    for (int f = 0; f < kFingers; ++f) {
      fill_image_column(b.current[f], i, in.current[f]);
      fill_image_column(b.target[f], i, in.target[f]);
    }
    for (int j = 0; j < 6; ++j) b.joints(j, i) = in.joints[j];
  }
  return b;
}

inline Batch make_batch(std::span<const PairedExample> examples) {
  std::vector<PolicyInput> inputs;
  inputs.reserve(examples.size());
  for (const PairedExample& ex : examples) inputs.push_back(to_input(ex));
  Batch b = make_batch(std::span<const PolicyInput>(inputs));
  b.labels.resize(6, b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i)
    for (int j = 0; j < 6; ++j) b.labels(j, i) = examples[i].delta_x[j];
  return b;
}

/// Activations kept for the backward pass.
struct Activations {
  std::array<Matrix, kFingers> enc_in;  // [current | target], taxels x 2K
  std::array<Matrix, kFingers> h1;      // enc_hidden x 2K
  std::array<Matrix, kFingers> h2;      // enc_out x 2K, before positional encoding
  Matrix fused_in;                      // fusion_in x K
  Matrix g, a1, a2, out;
};

namespace detail {

inline Matrix affine(const ConstMatMap& w, const ConstVecMap& b, const Matrix& x) {
  Matrix z = w * x;
  z.colwise() += b;
  return z;
}

inline void check_params(const PolicyParams& params) {
  if (params.values.size() != Layout(params.arch).total)
    throw Error(ErrorCode::shape_mismatch, "parameter count does not match architecture");
}

inline void check_batch(const PolicyParams& params, const Batch& batch) {
  check_params(params);
  const Eigen::Index k = batch.size();
  if (k < 1) throw Error(ErrorCode::invalid_argument, "batch is empty");
  for (int f = 0; f < kFingers; ++f) {
    if (batch.current[f].rows() != params.arch.taxels || batch.current[f].cols() != k ||
        batch.target[f].rows() != params.arch.taxels || batch.target[f].cols() != k)
      throw Error(ErrorCode::shape_mismatch, "image block shape mismatch");
  }
  if (batch.joints.rows() != params.arch.joints)
    throw Error(ErrorCode::shape_mismatch, "joint block shape mismatch");
}

}  // namespace detail

inline Activations forward_batch(const PolicyParams& params, const Batch& batch) {
  detail::check_batch(params, batch);
  const Architecture& a = params.arch;
  const Layout layout(a);
  const auto& v = params.values;
  const Eigen::Index k = batch.size();
  Activations act;
  act.fused_in.resize(a.fusion_in(), k);
  for (int f = 0; f < kFingers; ++f) {
    act.enc_in[f].resize(a.taxels, 2 * k);
    act.enc_in[f] << batch.current[f], batch.target[f];
    act.h1[f] = detail::affine(weight(v, layout.enc1[f]), bias(v, layout.enc1[f]), act.enc_in[f])
                    .array()
                    .tanh()
                    .matrix();
    act.h2[f] = detail::affine(weight(v, layout.enc2[f]), bias(v, layout.enc2[f]), act.h1[f])
                    .array()
                    .tanh()
                    .matrix();
    const ConstVecMap pe(v.data() + layout.pe + static_cast<std::size_t>(f) * a.enc_out, a.enc_out);
    act.fused_in.middleRows(f * a.enc_out, a.enc_out) = act.h2[f].leftCols(k).colwise() + pe;
    act.fused_in.middleRows((a.fingers + f) * a.enc_out, a.enc_out) =
        act.h2[f].rightCols(k).colwise() + pe;
  }
  act.fused_in.bottomRows(a.joints) = batch.joints;
  act.g = detail::affine(weight(v, layout.fuse), bias(v, layout.fuse), act.fused_in).array().tanh().matrix();
  act.a1 = detail::affine(weight(v, layout.head1), bias(v, layout.head1), act.g).array().tanh().matrix();
  act.a2 = detail::affine(weight(v, layout.head2), bias(v, layout.head2), act.a1).array().tanh().matrix();
  act.out = detail::affine(weight(v, layout.head3), bias(v, layout.head3), act.a2);
  return act;
}

inline Vec6 forward(const PolicyParams& params, const PolicyInput& input) {
  const Batch b = make_batch(std::span<const PolicyInput>(&input, 1));
  const Matrix out = forward_batch(params, b).out;
  Vec6 dx{};
  for (int j = 0; j < 6; ++j) dx[j] = out(j, 0);
  return dx;
}

inline double mse_loss(const Vec6& pred, const Vec6& label) {
  double s = 0;
  for (int j = 0; j < 6; ++j) s += (pred[j] - label[j]) * (pred[j] - label[j]);
  return s;
}

/// (1/K) sum of squared residual norms over the columns.
inline double batch_loss(const Matrix& pred, const Matrix& labels) {
  if (pred.cols() < 1) throw Error(ErrorCode::invalid_argument, "batch is empty");
  if (pred.rows() != labels.rows() || pred.cols() != labels.cols())
    throw Error(ErrorCode::shape_mismatch, "prediction and label shapes differ");
  return (pred - labels).squaredNorm() / static_cast<double>(pred.cols());
}

struct LossAndGradient {
  double loss = 0;
  GradientSet grad;
};

inline LossAndGradient backward(const PolicyParams& params, const Batch& batch) {
  const Activations act = forward_batch(params, batch);
  const double loss = batch_loss(act.out, batch.labels);
  if (!std::isfinite(loss)) throw Error(ErrorCode::non_finite, "loss is not finite");

  const Architecture& a = params.arch;
  const Layout layout(a);
  const auto& v = params.values;
  const Eigen::Index k = batch.size();
  LossAndGradient r;
  r.loss = loss;
  r.grad.values.assign(layout.total, 0.0);
  auto& g = r.grad.values;
  auto write = [&g](const DenseSlot& s, const Matrix& dz, const Matrix& x) {
    MatMap(g.data() + s.w, s.out, s.in) += dz * x.transpose();
    Eigen::Map<Eigen::VectorXd>(g.data() + s.b, s.out) += dz.rowwise().sum();
  };
  auto tanh_grad = [](const Matrix& upstream, const Matrix& y) -> Matrix {
    return upstream.array() * (1.0 - y.array().square());
  };

  const Matrix d_out = (2.0 / static_cast<double>(k)) * (act.out - batch.labels);
  write(layout.head3, d_out, act.a2);
  const Matrix d_z2 = tanh_grad(weight(v, layout.head3).transpose() * d_out, act.a2);
  write(layout.head2, d_z2, act.a1);
  const Matrix d_z1 = tanh_grad(weight(v, layout.head2).transpose() * d_z2, act.a1);
  write(layout.head1, d_z1, act.g);
  const Matrix d_zg = tanh_grad(weight(v, layout.head1).transpose() * d_z1, act.g);
  write(layout.fuse, d_zg, act.fused_in);
  const Matrix d_fused = weight(v, layout.fuse).transpose() * d_zg;

  for (int f = 0; f < kFingers; ++f) {
    Matrix d_h2(a.enc_out, 2 * k);
    d_h2 << d_fused.middleRows(f * a.enc_out, a.enc_out),
        d_fused.middleRows((a.fingers + f) * a.enc_out, a.enc_out);
    Eigen::Map<Eigen::VectorXd>(g.data() + layout.pe + static_cast<std::size_t>(f) * a.enc_out,
                                a.enc_out) += d_h2.rowwise().sum();
    const Matrix d_e2 = tanh_grad(d_h2, act.h2[f]);
    write(layout.enc2[f], d_e2, act.h1[f]);
    const Matrix d_e1 = tanh_grad(weight(v, layout.enc2[f]).transpose() * d_e2, act.h1[f]);
    write(layout.enc1[f], d_e1, act.enc_in[f]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline void optimizer_step(PolicyParams& params, const GradientSet& grads, AdamState& state,
                           const AdamConfig& cfg) {
  const std::size_t n = params.values.size();
  if (grads.values.size() != n || state.m.size() != n || state.v.size() != n)
    throw Error(ErrorCode::shape_mismatch, "optimizer state does not match parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = grads.values[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params.values[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Parameter file: "TACP" v1.

inline constexpr std::array<char, 4> kParamsMagic{'T', 'A', 'C', 'P'};
inline constexpr std::uint16_t kParamsVersion = 1;

namespace detail {

inline void write_arch(io::Writer& w, const Architecture& a) {
  for (int x : {a.fingers, a.taxels, a.enc_hidden, a.enc_out, a.joints, a.fusion, a.head_hidden1,
                a.head_hidden2, a.outputs})
    w.put(static_cast<std::uint32_t>(x));
}

inline Architecture read_arch(io::Reader& r) {
  Architecture a;
  for (int* x : {&a.fingers, &a.taxels, &a.enc_hidden, &a.enc_out, &a.joints, &a.fusion,
                 &a.head_hidden1, &a.head_hidden2, &a.outputs})
    *x = static_cast<int>(r.get<std::uint32_t>());
  return a;
}

inline void read_magic_version(io::Reader& r, const std::array<char, 4>& magic,
                               std::uint16_t version) {
  if (r.get<std::array<char, 4>>() != magic) r.fail(ErrorCode::format, "bad magic", 0);
  const std::size_t at = r.offset();
  if (const auto v = r.get<std::uint16_t>(); v != version)
    r.fail(ErrorCode::version, "unsupported version " + std::to_string(v), at);
}

inline void read_values(io::Reader& r, std::vector<double>& out, std::size_t expected) {
  const std::size_t at = r.offset();
  const auto n = r.get<std::uint64_t>();
  if (n != expected)
    r.fail(ErrorCode::shape_mismatch,
           "value count " + std::to_string(n) + " != expected " + std::to_string(expected), at);
  out.resize(n);
  r.get_doubles(out);
}

}  // namespace detail

inline void save_params(const PolicyParams& p, const std::filesystem::path& path,
                        std::uint64_t config_hash = 0) {
  detail::check_params(p);
  io::Writer w;
  w.put(kParamsMagic);
  w.put(kParamsVersion);
  detail::write_arch(w, p.arch);
  w.put(p.seed);
  w.put(config_hash);
  w.put(static_cast<std::uint64_t>(p.values.size()));
  w.put_doubles(p.values);
  w.finish(path);
}

/// Loads a parameter file; rejects files whose layer sizes differ from `expected`.
inline PolicyParams load_params(const std::filesystem::path& path, const Architecture& expected = {},
                                std::uint64_t* config_hash = nullptr) {
  io::Reader r(path);
  detail::read_magic_version(r, kParamsMagic, kParamsVersion);
  const std::size_t arch_at = r.offset();
  PolicyParams p;
  p.arch = detail::read_arch(r);
  if (!(p.arch == expected))
    r.fail(ErrorCode::shape_mismatch, "layer-size metadata does not match this build", arch_at);
  p.seed = r.get<std::uint64_t>();
  const auto hash = r.get<std::uint64_t>();
  if (config_hash) *config_hash = hash;
  detail::read_values(r, p.values, Layout(p.arch).total);
  r.expect_end();
  if (!p.finite()) throw Error(ErrorCode::non_finite, path.string() + ": non-finite parameter");
  return p;
}

}  // namespace tacrefine
