#pragma once

#include "tacrefine/dataset.hpp"
#include "tacrefine/error.hpp"
#include "tacrefine/metrics.hpp"
#include "tacrefine/net.hpp"
#include "tacrefine/refine.hpp"
#include "tacrefine/tacsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace tacrefine {

/// First step at which both errors are within threshold.
inline std::optional<int> steps_to_threshold(const Trajectory& traj, const MetricThresholds& t) {
  for (std::size_t s = 0; s < traj.entries.size(); ++s)
    if (t.within(traj.entries[s].dpos, traj.entries[s].drot)) return static_cast<int>(s);
  return std::nullopt;
}

struct TrialResult {
  std::string label;
  double dpos = 0;  // terminal
  double drot = 0;  // terminal
  std::optional<int> s_star;
  int steps = 0;  // iterations executed
  bool success = false;
  Termination reason = Termination::max_steps;
  std::vector<double> dpos_curve;
  std::vector<double> drot_curve;
};

/// Terminal errors come from the last entry; with stop-on-threshold that is
/// the step the loop stopped at.
inline TrialResult summarize(const Trajectory& traj, const MetricThresholds& t, std::string label) {
  if (traj.entries.empty()) throw Error(ErrorCode::invalid_argument, "empty trajectory");
  TrialResult r;
  r.label = std::move(label);
  r.dpos = traj.last().dpos;
  r.drot = traj.last().drot;
  r.s_star = steps_to_threshold(traj, t);
  r.steps = static_cast<int>(traj.entries.size()) - 1;
  r.success = t.within(r.dpos, r.drot) && r.steps <= t.max_steps;
  r.reason = traj.reason;
  for (const TrajectoryEntry& e : traj.entries) {
    r.dpos_curve.push_back(e.dpos);
    r.drot_curve.push_back(e.drot);
  }
  return r;
}

inline double success_rate(const std::vector<TrialResult>& trials, const MetricThresholds& t) {
  if (trials.empty()) throw Error(ErrorCode::invalid_argument, "no trials");
  std::size_t ok = 0;
  for (const TrialResult& r : trials) ok += t.within(r.dpos, r.drot) && r.steps <= t.max_steps;
  return static_cast<double>(ok) / static_cast<double>(trials.size());
}

/// World, sensor and controller settings for a batch of trials.
struct EvalSetting {
  ObjectModel object;
  SensorParams params = SensorParams::nominal();
  HandConfig hand;
  PoseBounds bounds = PoseBounds::sim_default();
  RefineConfig refine = [] {
    RefineConfig c;
    c.stop_on_threshold = true;
    return c;
  }();
  MetricThresholds thresholds;

  RefineConfig loop_config(std::uint64_t seed) const {
    RefineConfig c = refine;
    c.eps_pos = thresholds.eps_pos;
    c.eps_rot = thresholds.eps_rot;
    c.max_steps = thresholds.max_steps;
    c.seed = seed;
    return c;
  }
};

inline Pose6 random_pose(const PoseBounds& b, CounterRng& rng) {
  Pose6 p;
  p[kX] = b.fixed_x;
  p[kYaw] = b.fixed_yaw;
  const auto dims = b.dims();
  for (std::size_t d = 0; d < dims.size(); ++d)
    p[kSampledAxes[d]] = rng.uniform(dims[d].lower, dims[d].upper);
  return p;
}

inline bool in_contact(const Pose6& p, const ObjectModel& object, const HandConfig& hand) {
  return close_fingers(WristPose::from_pose6(p), object, hand).any_contact();
}

struct TrialScenario {
  Pose6 initial;
  Pose6 target;
};

/// Uniform (initial, target) pair with contact at both ends.
inline TrialScenario sample_scenario(const EvalSetting& s, std::uint64_t seed) {
  CounterRng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    TrialScenario sc{random_pose(s.bounds, rng), random_pose(s.bounds, rng)};
    if (in_contact(sc.initial, s.object, s.hand) && in_contact(sc.target, s.object, s.hand))
      return sc;
  }
  throw Error(ErrorCode::non_contact, "no contact pair found within pose bounds");
}

struct TrialRun {
  TrialResult result;
  Trajectory trajectory;
};

inline TrialRun run_trial(const PolicyParams& policy, const EvalSetting& s, const TrialScenario& sc,
                          std::uint64_t seed, std::string label) {
  const Demonstration demo =
      demonstrate_target(sc.target, s.object, s.params, s.hand, derive_seed(seed, 1));
  Trajectory traj = refine_loop(sc.initial, demo, policy, s.object, s.params, s.hand,
                                s.loop_config(derive_seed(seed, 2)));
  return {summarize(traj, s.thresholds, std::move(label)), std::move(traj)};
}

// ---------------------------------------------------------------------------
// Aggregates.

struct Summary {
  int trials = 0;
  double success_rate = 0;
  double reached_rate = 0;
  double mean_dpos = 0;
  double mean_drot = 0;
  double mean_steps = std::numeric_limits<double>::quiet_NaN();  // over trials that reached
  double median_steps = std::numeric_limits<double>::quiet_NaN();
};

inline Summary summarize_trials(const std::vector<TrialResult>& trials, const MetricThresholds& t) {
  Summary s;
  s.trials = static_cast<int>(trials.size());
  s.success_rate = success_rate(trials, t);
  std::vector<double> steps;
  for (const TrialResult& r : trials) {
    s.mean_dpos += r.dpos / s.trials;
    s.mean_drot += r.drot / s.trials;
    if (r.s_star) steps.push_back(*r.s_star);
  }
  s.reached_rate = static_cast<double>(steps.size()) / s.trials;
  if (!steps.empty()) {
    double sum = 0;
    for (double v : steps) sum += v;
    s.mean_steps = sum / steps.size();
  }
  // Median over all trials, counting trials that never reached as +inf.
  std::vector<double> all;
  for (const TrialResult& r : trials)
    all.push_back(r.s_star ? *r.s_star : std::numeric_limits<double>::infinity());
  std::sort(all.begin(), all.end());
  const std::size_t n = all.size();
  s.median_steps = n % 2 ? all[n / 2] : 0.5 * (all[n / 2 - 1] + all[n / 2]);
  return s;
}

/// Mean error per step; shorter trajectories hold their last value.
struct ErrorCurve {
  std::string name;
  std::vector<double> dpos;
  std::vector<double> drot;
};

inline ErrorCurve mean_curve(const std::vector<TrialResult>& trials, std::string name, int max_steps) {
  ErrorCurve c;
  c.name = std::move(name);
  c.dpos.assign(max_steps + 1, 0.0);
  c.drot.assign(max_steps + 1, 0.0);
  for (const TrialResult& r : trials) {
    for (int s = 0; s <= max_steps; ++s) {
      const std::size_t i = std::min<std::size_t>(s, r.dpos_curve.size() - 1);
      c.dpos[s] += r.dpos_curve[i] / trials.size();
      c.drot[s] += r.drot_curve[i] / trials.size();
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Policy A/B comparison.

struct ComparisonRow {
  std::string group;
  std::string policy;
  Summary summary;
};

struct Comparison {
  std::vector<ComparisonRow> rows;  // per group: a then b
  std::vector<TrialResult> trials_a;
  std::vector<TrialResult> trials_b;
  std::vector<ErrorCurve> curves;

  Summary aggregate(const std::string& policy, const MetricThresholds& t) const {
    return summarize_trials(policy == "a" ? trials_a : trials_b, t);
  }
};

inline std::string group_name(int g) {
  static const char* roman[] = {"I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X"};
  return g < 10 ? roman[g] : std::to_string(g + 1);
}

/// Each group is a fixed seeded set of R scenarios run by both policies.
inline Comparison compare_policies(const PolicyParams& a, const PolicyParams& b, const EvalSetting& s,
                                   int groups, std::uint64_t seed) {
  s.thresholds.validate();
  if (groups < 1) throw Error(ErrorCode::invalid_argument, "groups must be >= 1");
  detail::check_params(a);
  detail::check_params(b);
  Comparison cmp;
  for (int g = 0; g < groups; ++g) {
    std::vector<TrialResult> ga, gb;
    for (int r = 0; r < s.thresholds.repetitions; ++r) {
      const std::uint64_t ts = derive_seed(seed, 0xc0u, g, r);
      const TrialScenario sc = sample_scenario(s, ts);
      const std::string label = group_name(g) + "/" + std::to_string(r);
      ga.push_back(run_trial(a, s, sc, ts, label).result);
      gb.push_back(run_trial(b, s, sc, ts, label).result);
    }
    cmp.rows.push_back({group_name(g), "a", summarize_trials(ga, s.thresholds)});
    cmp.rows.push_back({group_name(g), "b", summarize_trials(gb, s.thresholds)});
    cmp.curves.push_back(mean_curve(ga, "group_" + group_name(g) + "_a", s.thresholds.max_steps));
    cmp.curves.push_back(mean_curve(gb, "group_" + group_name(g) + "_b", s.thresholds.max_steps));
    cmp.trials_a.insert(cmp.trials_a.end(), ga.begin(), ga.end());
    cmp.trials_b.insert(cmp.trials_b.end(), gb.begin(), gb.end());
  }
  return cmp;
}

// ---------------------------------------------------------------------------
// Dimension-pair matrix.

struct MatrixCell {
  std::string shape;
  int initial_dim = 0;  // index into kSampledNames
  int goal_dim = 0;
  int trials = 0;
  double success_rate = 0;
  double mean_steps = std::numeric_limits<double>::quiet_NaN();
};

struct PoseMatrix {
  std::vector<MatrixCell> cells;  // row-major over (initial_dim, goal_dim)
  std::vector<ErrorCurve> curves;

  const MatrixCell& at(int i, int j) const {
    for (const MatrixCell& c : cells)
      if (c.initial_dim == i && c.goal_dim == j) return c;
    throw Error(ErrorCode::invalid_argument, "no such cell");
  }
  double aggregate_success() const {
    double total = 0, ok = 0;
    for (const MatrixCell& c : cells) {
      total += c.trials;
      ok += c.success_rate * c.trials;
    }
    return total > 0 ? ok / total : 0.0;
  }
};

/// Initial pose at the negative extreme of dimension i, goal at the positive
/// extreme of dimension j, other sampled dimensions centered.
inline TrialScenario extreme_scenario(const PoseBounds& b, int i, int j) {
  TrialScenario sc;
  sc.initial = sc.target = Pose6{};
  for (Pose6* p : {&sc.initial, &sc.target}) {
    (*p)[kX] = b.fixed_x;
    (*p)[kYaw] = b.fixed_yaw;
    const auto dims = b.dims();
    for (std::size_t d = 0; d < dims.size(); ++d)
      (*p)[kSampledAxes[d]] = 0.5 * (dims[d].lower + dims[d].upper);
  }
  sc.initial[kSampledAxes[i]] = b.dims()[i].lower;
  sc.target[kSampledAxes[j]] = b.dims()[j].upper;
  return sc;
}

inline PoseMatrix pose_matrix_subset(const PolicyParams& policy, const EvalSetting& s,
                                     const std::vector<int>& dims, std::uint64_t seed) {
  s.thresholds.validate();
  detail::check_params(policy);
  PoseMatrix m;
  const std::string shape = shape_name(s.object.shape);
  for (int i : dims) {
    for (int j : dims) {
      const TrialScenario sc = extreme_scenario(s.bounds, i, j);
      std::vector<TrialResult> trials;
      for (int r = 0; r < s.thresholds.repetitions; ++r) {
        const std::uint64_t ts = derive_seed(seed, 0x3a7u, i, j, r);
        trials.push_back(run_trial(policy, s, sc, ts,
                                   std::string(kSampledNames[i]) + "->" + kSampledNames[j])
                             .result);
      }
      const Summary sum = summarize_trials(trials, s.thresholds);
      m.cells.push_back({shape, i, j, sum.trials, sum.success_rate, sum.mean_steps});
      m.curves.push_back(mean_curve(trials,
                                    shape + "_" + kSampledNames[i] + "_to_" + kSampledNames[j],
                                    s.thresholds.max_steps));
    }
  }
  return m;
}

inline PoseMatrix pose_matrix(const PolicyParams& policy, const EvalSetting& s, std::uint64_t seed) {
  return pose_matrix_subset(policy, s, {0, 1, 2, 3}, seed);
}

/// Roll and y pairs on each given shape.
inline std::vector<PoseMatrix> generalization_eval(const PolicyParams& policy,
                                                   const std::vector<Shape>& shapes,
                                                   const EvalSetting& s, std::uint64_t seed) {
  std::vector<PoseMatrix> out;
  for (const Shape& shape : shapes) {
    EvalSetting es = s;
    es.object.shape = shape;
    out.push_back(pose_matrix_subset(policy, es, {1, 2}, seed));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report files.

struct EvalResults {
  std::optional<Comparison> comparison;
  std::optional<PoseMatrix> matrix;
  std::vector<PoseMatrix> generalization;
  std::uint64_t config_hash = 0;
};

inline constexpr const char* kComparisonHeader =
    "group,policy,trials,success_rate,reached_rate,mean_dpos,mean_drot,mean_steps,median_steps";
inline constexpr const char* kMatrixHeader =
    "shape,initial_dim,goal_dim,trials,success_rate,mean_steps";

namespace detail {

inline std::ofstream open_report(const std::filesystem::path& path, std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path.string());
  out << "# config_hash=" << format_hash(config_hash) << '\n' << std::setprecision(17);
  return out;
}

inline void write_matrix_rows(std::ostream& out, const PoseMatrix& m) {
  for (const MatrixCell& c : m.cells)
    out << c.shape << ',' << kSampledNames[c.initial_dim] << ',' << kSampledNames[c.goal_dim] << ','
        << c.trials << ',' << c.success_rate << ',' << c.mean_steps << '\n';
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      const std::string& header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open for reading: " + path.string());
  std::string line;
  bool seen_header = false;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw Error(ErrorCode::format, path.string() + ": unexpected header");
      seen_header = true;
      continue;
    }
    auto cells = split_csv(line);
    if (cells.size() != split_csv(header).size())
      throw Error(ErrorCode::format, path.string() + ": wrong column count");
    rows.push_back(std::move(cells));
  }
  if (!seen_header) throw Error(ErrorCode::format, path.string() + ": missing header");
  return rows;
}

inline int dim_index(const std::string& name) {
  for (int d = 0; d < 4; ++d)
    if (name == kSampledNames[d]) return d;
  throw Error(ErrorCode::format, "unknown dimension " + name);
}

inline std::string fmt(double v, int prec = 3) {
  if (std::isnan(v)) return "n/a";
  if (std::isinf(v)) return "none";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace detail

inline void write_comparison_csv(const Comparison& c, const std::filesystem::path& path,
                                 std::uint64_t config_hash) {
  auto out = detail::open_report(path, config_hash);
  out << kComparisonHeader << '\n';
  for (const ComparisonRow& r : c.rows) {
    const Summary& s = r.summary;
    out << r.group << ',' << r.policy << ',' << s.trials << ',' << s.success_rate << ','
        << s.reached_rate << ',' << s.mean_dpos << ',' << s.mean_drot << ',' << s.mean_steps << ','
        << s.median_steps << '\n';
  }
}

inline std::vector<ComparisonRow> read_comparison_csv(const std::filesystem::path& path) {
  std::vector<ComparisonRow> rows;
  for (const auto& c : detail::read_csv(path, kComparisonHeader)) {
    ComparisonRow r;
    r.group = c[0];
    r.policy = c[1];
    r.summary.trials = std::stoi(c[2]);
    r.summary.success_rate = std::stod(c[3]);
    r.summary.reached_rate = std::stod(c[4]);
    r.summary.mean_dpos = std::stod(c[5]);
    r.summary.mean_drot = std::stod(c[6]);
    r.summary.mean_steps = std::stod(c[7]);
    r.summary.median_steps = std::stod(c[8]);
    rows.push_back(r);
  }
  return rows;
}

inline void write_matrix_csv(const std::vector<PoseMatrix>& ms, const std::filesystem::path& path,
                             std::uint64_t config_hash) {
  auto out = detail::open_report(path, config_hash);
  out << kMatrixHeader << '\n';
  for (const PoseMatrix& m : ms) detail::write_matrix_rows(out, m);
}

inline std::vector<MatrixCell> read_matrix_csv(const std::filesystem::path& path) {
  std::vector<MatrixCell> cells;
  for (const auto& c : detail::read_csv(path, kMatrixHeader))
    cells.push_back({c[0], detail::dim_index(c[1]), detail::dim_index(c[2]), std::stoi(c[3]),
                     std::stod(c[4]), std::stod(c[5])});
  return cells;
}

inline void write_curve_csv(const ErrorCurve& c, const std::filesystem::path& path,
                            std::uint64_t config_hash) {
  auto out = detail::open_report(path, config_hash);
  out << "step,mean_dpos,mean_drot\n";
  for (std::size_t s = 0; s < c.dpos.size(); ++s)
    out << s << ',' << c.dpos[s] << ',' << c.drot[s] << '\n';
}

/// Markdown tables built from the CSV-level data so `report` can rebuild them.
inline std::string render_markdown(const std::vector<ComparisonRow>& comparison,
                                   const std::vector<MatrixCell>& matrix,
                                   const std::vector<MatrixCell>& generalization,
                                   std::uint64_t config_hash) {
  std::ostringstream md;
  md << "# Refinement report\n\nconfig_hash: `" << format_hash(config_hash) << "`\n";
  if (!comparison.empty()) {
    md << "\n## Policy comparison\n\n"
       << "| Group | Policy | Trials | Success | Reached | dpos (mm) | drot (rad) | Steps s* |\n"
       << "|---|---|---|---|---|---|---|---|\n";
    for (const ComparisonRow& r : comparison) {
      const Summary& s = r.summary;
      md << "| " << r.group << " | " << r.policy << " | " << s.trials << " | "
         << detail::fmt(100 * s.success_rate, 0) << "% | " << detail::fmt(100 * s.reached_rate, 0)
         << "% | " << detail::fmt(1000 * s.mean_dpos, 2) << " | " << detail::fmt(s.mean_drot, 4)
         << " | " << detail::fmt(s.mean_steps, 1) << " |\n";
    }
  }
  auto table = [&md](const std::vector<MatrixCell>& cells, const std::string& title) {
    std::vector<std::string> shapes;
    for (const MatrixCell& c : cells)
      if (std::find(shapes.begin(), shapes.end(), c.shape) == shapes.end()) shapes.push_back(c.shape);
    for (const std::string& shape : shapes) {
      std::vector<int> dims;
      for (const MatrixCell& c : cells)
        if (c.shape == shape && std::find(dims.begin(), dims.end(), c.initial_dim) == dims.end())
          dims.push_back(c.initial_dim);
      md << "\n## " << title << " (" << shape << ")\n\nRows: initial at the negative extreme. "
         << "Columns: goal at the positive extreme. Cells: mean steps / success rate.\n\n| |";
      for (int j : dims) md << " +" << kSampledNames[j] << " |";
      md << "\n|---|";
      for (std::size_t k = 0; k < dims.size(); ++k) md << "---|";
      md << '\n';
      for (int i : dims) {
        md << "| -" << kSampledNames[i] << " |";
        for (int j : dims)
          for (const MatrixCell& c : cells)
            if (c.shape == shape && c.initial_dim == i && c.goal_dim == j)
              md << ' ' << detail::fmt(c.mean_steps, 1) << " / " << detail::fmt(100 * c.success_rate, 0)
                 << "% |";
        md << '\n';
      }
    }
  };
  if (!matrix.empty()) table(matrix, "Pose matrix");
  if (!generalization.empty()) table(generalization, "Generalization");
  return md.str();
}

inline void write_markdown(const std::string& md, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open for writing: " + path.string());
  out << md;
}

/// Writes comparison.csv, pose_matrix.csv, generalization.csv, curves/*.csv
/// and report.md for whichever results are present.
inline void render_report(const EvalResults& res, const std::filesystem::path& dir) {
  if (!res.comparison && !res.matrix && res.generalization.empty())
    throw Error(ErrorCode::invalid_argument, "no results to report");
  std::filesystem::create_directories(dir / "curves");
  std::vector<ComparisonRow> rows;
  std::vector<MatrixCell> cells, gen;
  std::vector<const ErrorCurve*> curves;
  if (res.comparison) {
    write_comparison_csv(*res.comparison, dir / "comparison.csv", res.config_hash);
    rows = res.comparison->rows;
    for (const ErrorCurve& c : res.comparison->curves) curves.push_back(&c);
  }
  if (res.matrix) {
    write_matrix_csv({*res.matrix}, dir / "pose_matrix.csv", res.config_hash);
    cells = res.matrix->cells;
    for (const ErrorCurve& c : res.matrix->curves) curves.push_back(&c);
  }
  if (!res.generalization.empty()) {
    write_matrix_csv(res.generalization, dir / "generalization.csv", res.config_hash);
    for (const PoseMatrix& m : res.generalization) {
      gen.insert(gen.end(), m.cells.begin(), m.cells.end());
      for (const ErrorCurve& c : m.curves) curves.push_back(&c);
    }
  }
  for (const ErrorCurve* c : curves)
    write_curve_csv(*c, dir / "curves" / (c->name + ".csv"), res.config_hash);
  write_markdown(render_markdown(rows, cells, gen, res.config_hash), dir / "report.md");
}

}  // namespace tacrefine
