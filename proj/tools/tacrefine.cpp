#include "tacrefine/tacrefine.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace tacrefine;

namespace {

struct Globals {
  std::string config_path;
  std::string workdir = ".";
  std::optional<std::uint64_t> seed;
};

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text[0] == '-')
    throw Error(ErrorCode::invalid_argument, what + " is not an unsigned integer: '" + text + "'");
  return v;
}

// Seed precedence: --seed, then TACREFINE_SEED, then the config file.
RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed) {
    cfg.seed = *g.seed;
  } else if (const char* env = std::getenv("TACREFINE_SEED"); env && *env) {
    cfg.seed = parse_u64(env, "TACREFINE_SEED");
  }
  std::cout << "seed=" << cfg.seed << '\n';
  return cfg;
}

Pose6 parse_pose(const std::string& text) {
  Pose6 p;
  std::stringstream ss(text);
  std::string cell;
  int i = 0;
  while (std::getline(ss, cell, ',')) {
    if (i >= 6) break;
    try {
      std::size_t used = 0;
      p[i] = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, "bad pose component '" + cell + "'");
    }
    ++i;
  }
  if (i != 6 || ss.rdbuf()->in_avail() > 0)
    throw Error(ErrorCode::invalid_argument, "pose needs 6 comma-separated values: '" + text + "'");
  return p;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

fs::path loss_log_path(const std::string& params_path) {
  fs::path p(params_path);
  return p.replace_extension(".loss.csv");
}

EvalSetting make_setting(const RunConfig& cfg, const std::string& domain) {
  EvalSetting s;
  s.object = cfg.object.model();
  s.params = domain == "sim" ? cfg.sensor.nominal() : cfg.real_params();
  s.hand = cfg.hand;
  s.bounds = cfg.bounds_sim;
  s.refine = cfg.refine;
  s.refine.stop_on_threshold = cfg.eval.stop_on_threshold;
  s.thresholds = cfg.eval.thresholds;
  return s;
}

void print_trajectory_summary(const Trajectory& t, const MetricThresholds& th) {
  const TrialResult r = summarize(t, th, "");
  std::cout << "termination=" << to_string(t.reason) << " steps=" << r.steps
            << " dpos=" << r.dpos << " drot=" << r.drot
            << " s_star=" << (r.s_star ? std::to_string(*r.s_star) : "none")
            << " success=" << (r.success ? 1 : 0) << '\n';
}

int cmd_gen_data(const Globals& g) {
  const RunConfig cfg = resolve_config(g);
  const std::uint64_t hash = config_hash(cfg);
  const ObjectModel object = cfg.object.model();
  auto emit = [&](const PoseBounds& bounds, const SensorParams& params, std::uint64_t seed,
                  DomainTag tag, const std::string& path) {
    Dataset ds = collect(bounds, object, params, cfg.hand, seed, tag);
    ds.config_hash = hash;
    ensure_parent(path);
    save_dataset(ds, path);
    export_csv(ds, fs::path(path).replace_extension(".csv"));
    for (std::size_t i : ds.skipped) std::cerr << "skipped pose " << i << " (no contact)\n";
    std::cout << to_string(tag) << " records=" << ds.records.size()
              << " skipped=" << ds.skipped.size() << " path=" << path << '\n';
  };
  emit(cfg.bounds_sim, cfg.sensor.nominal(), cfg.stage_seed(RunConfig::kSimData), DomainTag::sim,
       cfg.paths.sim_dataset);
  emit(cfg.bounds_real, cfg.real_params(), cfg.stage_seed(RunConfig::kRealData),
       DomainTag::real_analogue, cfg.paths.real_dataset);
  std::cout << "config_hash=" << format_hash(hash) << '\n';
  return 0;
}

struct TrainArgs {
  std::string policy;
  std::string resume_path;
  std::string checkpoint_path;
  std::optional<std::uint64_t> stop_at;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const RunConfig cfg = resolve_config(g);
  const std::uint64_t hash = config_hash(cfg);
  const PolicyKind kind = a.policy == "a" ? PolicyKind::a : PolicyKind::b;
  const TrainConfig tcfg = cfg.train_config();
  const Dataset sim = load_dataset(cfg.paths.sim_dataset);
  std::optional<Dataset> real;
  if (kind == PolicyKind::b) real = load_dataset(cfg.paths.real_dataset);

  TrainState state;
  if (!a.resume_path.empty()) {
    state = resume(a.resume_path, tcfg);
    if (state.kind != kind)
      throw Error(ErrorCode::config, "checkpoint is for policy " + std::string(to_string(state.kind)));
  } else {
    state = start_training(tcfg, kind);
  }
  run_training(state, sim, real ? &*real : nullptr, tcfg, a.stop_at);
  if (!a.checkpoint_path.empty()) {
    ensure_parent(a.checkpoint_path);
    save_checkpoint(state, a.checkpoint_path);
    std::cout << "checkpoint=" << a.checkpoint_path << " step=" << state.step << '\n';
  }
  const std::uint64_t total = total_steps(tcfg, kind);
  if (state.step < total) {
    std::cout << "stopped at step " << state.step << " of " << total << '\n';
    return 0;
  }
  const std::string& out = kind == PolicyKind::a ? cfg.paths.params_a : cfg.paths.params_b;
  ensure_parent(out);
  save_params(state.params, out, hash);
  write_loss_csv(state.losses, loss_log_path(out), hash);
  std::cout << "policy=" << to_string(kind) << " steps=" << state.step;
  if (!state.losses.empty())
    std::cout << " initial_loss=" << state.losses.front() << " final_loss=" << state.losses.back();
  std::cout << " params=" << out << '\n';
  return 0;
}

struct RefineArgs {
  std::string params;
  std::string init_pose;
  std::string target_pose;
  std::string domain = "sim";
  std::string out = "refine";
  bool pgm = false;
};

int cmd_refine(const Globals& g, const RefineArgs& a) {
  const RunConfig cfg = resolve_config(g);
  const std::uint64_t hash = config_hash(cfg);
  const PolicyParams policy = load_params(a.params);
  const EvalSetting s = make_setting(cfg, a.domain);
  const Pose6 initial = parse_pose(a.init_pose);
  const Pose6 target = a.target_pose.empty() ? canonical_grasp_pose() : parse_pose(a.target_pose);
  const std::uint64_t seed = cfg.stage_seed(RunConfig::kRefine);
  const Demonstration demo = demonstrate_target(target, s.object, s.params, s.hand, derive_seed(seed, 1));
  RefineConfig rc = cfg.refine;
  rc.seed = derive_seed(seed, 2);
  const Trajectory t = refine_loop(initial, demo, policy, s.object, s.params, s.hand, rc);
  const fs::path dir = cfg.paths.trajectories;
  fs::create_directories(dir);
  write_trajectory_csv(t, dir / (a.out + ".csv"), hash);
  if (a.pgm) write_trajectory_pgm(t, dir / (a.out + "_pgm"));
  print_trajectory_summary(t, rc.thresholds());
  return 0;
}

struct EvalArgs {
  std::string params_a;
  std::string params_b;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const RunConfig cfg = resolve_config(g);
  EvalResults res;
  res.config_hash = config_hash(cfg);
  const PolicyParams pa = load_params(a.params_a);
  const std::optional<PolicyParams> pb =
      a.params_b.empty() ? std::nullopt : std::optional<PolicyParams>(load_params(a.params_b));
  const PolicyParams& primary = pb ? *pb : pa;
  const EvalSetting s = make_setting(cfg, cfg.eval.domain);
  const std::uint64_t seed = cfg.stage_seed(RunConfig::kEval);
  if (pb) {
    res.comparison = compare_policies(pa, *pb, s, cfg.eval.groups, seed);
    for (const char* p : {"a", "b"}) {
      const Summary sum = res.comparison->aggregate(p, s.thresholds);
      std::cout << "policy=" << p << " domain=" << cfg.eval.domain << " trials=" << sum.trials
                << " success_rate=" << sum.success_rate << " mean_dpos=" << sum.mean_dpos
                << " mean_drot=" << sum.mean_drot << '\n';
    }
  }
  if (cfg.eval.pose_matrix) {
    res.matrix = pose_matrix(primary, s, seed);
    std::cout << "pose_matrix success_rate=" << res.matrix->aggregate_success() << '\n';
  }
  if (!cfg.eval.generalization_shapes.empty()) {
    std::vector<Shape> shapes;
    for (const std::string& n : cfg.eval.generalization_shapes)
      shapes.push_back(cfg.object.shape_by_name(n));
    res.generalization = generalization_eval(primary, shapes, s, seed);
    for (const PoseMatrix& m : res.generalization)
      std::cout << "generalization shape=" << m.cells.front().shape
                << " success_rate=" << m.aggregate_success() << '\n';
  }
  render_report(res, cfg.paths.reports);
  std::cout << "report=" << (fs::path(cfg.paths.reports) / "report.md").string() << '\n';
  return 0;
}

struct TrackArgs {
  std::string params;
  std::string schedule;
  std::string init_pose;
  std::string target_pose;
  int iterations = 40;
  std::string out = "track";
};

MotionSchedule load_schedule(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open schedule: " + path);
  MotionSchedule s;
  try {
    const json j = json::parse(in);
    for (const json& k : j) {
      for (const auto& [key, value] : k.items())
        if (key != "at" && key != "offset")
          throw Error(ErrorCode::config, "unknown schedule key '" + key + "'");
      MotionKey mk;
      mk.at = k.at("at").get<int>();
      const auto off = k.at("offset").get<std::vector<double>>();
      if (off.size() != 6) throw Error(ErrorCode::config, "schedule offset needs 6 values");
      std::copy(off.begin(), off.end(), mk.offset.v.begin());
      s.push_back(mk);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, path + ": " + e.what());
  }
  return s;
}

int cmd_track(const Globals& g, const TrackArgs& a) {
  const RunConfig cfg = resolve_config(g);
  const std::uint64_t hash = config_hash(cfg);
  const PolicyParams policy = load_params(a.params);
  const EvalSetting s = make_setting(cfg, "sim");
  const MotionSchedule schedule = a.schedule.empty() ? default_schedule() : load_schedule(a.schedule);
  const Pose6 target = a.target_pose.empty() ? canonical_grasp_pose() : parse_pose(a.target_pose);
  const Pose6 initial = a.init_pose.empty() ? target : parse_pose(a.init_pose);
  const std::uint64_t seed = cfg.stage_seed(RunConfig::kRefine);
  const Demonstration demo = demonstrate_target(target, s.object, s.params, s.hand, derive_seed(seed, 3));
  RefineConfig rc = cfg.refine;
  rc.max_steps = a.iterations;
  rc.stop_on_threshold = false;
  rc.seed = derive_seed(seed, 4);
  const Trajectory t = track(initial, demo, schedule, policy, s.object, s.params, s.hand, rc);
  fs::create_directories(cfg.paths.trajectories);
  write_trajectory_csv(t, fs::path(cfg.paths.trajectories) / (a.out + ".csv"), hash);
  int within = 0;
  for (const TrajectoryEntry& e : t.entries) within += e.dpos <= rc.eps_pos && e.drot <= rc.eps_rot;
  std::cout << "termination=" << to_string(t.reason) << " iterations=" << t.entries.size() - 1
            << " within_threshold=" << within << '\n';
  return 0;
}

std::uint64_t read_config_hash(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  const std::string prefix = "# config_hash=0x";
  if (std::getline(in, line) && line.rfind(prefix, 0) == 0)
    return std::stoull(line.substr(prefix.size(), 16), nullptr, 16);
  throw Error(ErrorCode::format, csv.string() + ": missing config_hash line");
}

int cmd_report(const std::string& in_dir, const std::string& out_dir) {
  const fs::path in(in_dir), out(out_dir);
  std::vector<ComparisonRow> rows;
  std::vector<MatrixCell> cells, gen;
  std::optional<std::uint64_t> hash;
  auto note_hash = [&hash](const fs::path& p) {
    const std::uint64_t h = read_config_hash(p);
    if (hash && *hash != h)
      throw Error(ErrorCode::config, p.string() + ": results come from different configs");
    hash = h;
  };
  if (fs::exists(in / "comparison.csv")) {
    rows = read_comparison_csv(in / "comparison.csv");
    note_hash(in / "comparison.csv");
  }
  if (fs::exists(in / "pose_matrix.csv")) {
    cells = read_matrix_csv(in / "pose_matrix.csv");
    note_hash(in / "pose_matrix.csv");
  }
  if (fs::exists(in / "generalization.csv")) {
    gen = read_matrix_csv(in / "generalization.csv");
    note_hash(in / "generalization.csv");
  }
  if (!hash) throw Error(ErrorCode::io, in_dir + ": no result CSVs found");
  fs::create_directories(out);
  if (!fs::exists(out) || !fs::equivalent(in, out)) {
    for (const char* name : {"comparison.csv", "pose_matrix.csv", "generalization.csv"})
      if (fs::exists(in / name)) fs::copy_file(in / name, out / name, fs::copy_options::overwrite_existing);
    if (fs::exists(in / "curves"))
      fs::copy(in / "curves", out / "curves",
               fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  }
  write_markdown(render_markdown(rows, cells, gen, *hash), out / "report.md");
  std::cout << "report=" << (out / "report.md").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile grasp refinement: data generation, training, refinement and evaluation"};
  Globals g;
  std::uint64_t seed_value = 0;
  bool print_default = false;
  app.add_flag("--print-default-config", print_default, "Print the default config and exit");
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--workdir", g.workdir, "Directory all paths are relative to");
  auto* seed_opt = app.add_option("--seed", seed_value, "Global seed (overrides TACREFINE_SEED)");
  app.require_subcommand(0, 1);

  auto* gen = app.add_subcommand("gen-data", "Render the sim and real-analogue datasets");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train policy a (sim only) or b (sim + fine-tune)");
  train->add_option("--policy", ta.policy)->required()->check(CLI::IsMember({"a", "b"}));
  train->add_option("--resume", ta.resume_path, "Continue from a checkpoint");
  train->add_option("--checkpoint", ta.checkpoint_path, "Write a checkpoint when stopping");
  train->add_option("--stop-at", ta.stop_at, "Stop after this many total steps");

  RefineArgs ra;
  auto* refine = app.add_subcommand("refine", "Run one refinement loop");
  refine->add_option("--params", ra.params)->required();
  refine->add_option("--init-pose", ra.init_pose, "x,y,z,roll,pitch,yaw")->required();
  refine->add_option("--target-pose", ra.target_pose, "x,y,z,roll,pitch,yaw (default: canonical)");
  refine->add_option("--domain", ra.domain)->check(CLI::IsMember({"sim", "real_analogue"}));
  refine->add_option("--out", ra.out, "Trajectory file stem");
  refine->add_flag("--pgm", ra.pgm, "Also write tactile images as PGM");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Compare policies and build the pose matrix");
  eval->add_option("--params-a", ea.params_a)->required();
  eval->add_option("--params-b", ea.params_b);

  TrackArgs tr;
  auto* trk = app.add_subcommand("track", "Refine against a moving object");
  trk->add_option("--params", tr.params)->required();
  trk->add_option("--schedule", tr.schedule, "JSON list of {\"at\": step, \"offset\": [6]}");
  trk->add_option("--init-pose", tr.init_pose);
  trk->add_option("--target-pose", tr.target_pose);
  trk->add_option("--iterations", tr.iterations)->check(CLI::PositiveNumber);
  trk->add_option("--out", tr.out, "Trajectory file stem");

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "Rebuild report.md from result CSVs");
  report->add_option("--in", report_in)->required();
  report->add_option("--out", report_out)->required();

  for (CLI::App* sub : {gen, train, refine, eval, trk, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << "error: code=invalid_argument message=" << e.what() << '\n';
    return 2;
  }

  try {
    if (print_default) {
      std::cout << default_config_text();
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return 2;
    }
    if (*seed_opt) g.seed = seed_value;
    fs::create_directories(g.workdir);
    fs::current_path(g.workdir);
    if (*gen) return cmd_gen_data(g);
    if (*train) return cmd_train(g, ta);
    if (*refine) return cmd_refine(g, ra);
    if (*eval) return cmd_eval(g, ea);
    if (*trk) return cmd_track(g, tr);
    if (*report) return cmd_report(report_in, report_out);
  } catch (const Error& e) {
    std::cout << "error: code=" << to_string(e.code()) << " message=" << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cout << "error: code=internal message=" << e.what() << '\n';
    return 1;
  }
  return 0;
}
