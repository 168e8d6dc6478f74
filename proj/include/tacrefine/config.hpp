#pragma once

#include "tacrefine/binary_io.hpp"
#include "tacrefine/dataset.hpp"
#include "tacrefine/error.hpp"
#include "tacrefine/eval.hpp"
#include "tacrefine/metrics.hpp"
#include "tacrefine/refine.hpp"
#include "tacrefine/tacsim.hpp"
#include "tacrefine/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace tacrefine {

using json = nlohmann::json;

struct ObjectConfig {
  std::string shape = "disc";
  double thickness = 0.008;
  Disc disc;
  RoundedRect rounded_rect;
  Bar bar;

  Shape shape_by_name(const std::string& name) const {
    if (name == "disc") return disc;
    if (name == "rounded_rect") return rounded_rect;
    if (name == "bar") return bar;
    throw Error(ErrorCode::config, "unknown shape '" + name + "'");
  }

  ObjectModel model() const {
    ObjectModel m;
    m.shape = shape_by_name(shape);
    m.thickness = thickness;
    m.validate();
    return m;
  }
};

/// Nominal sensor overrides. `gain` is applied uniformly to every taxel.
struct SensorConfig {
  double taxel_spacing = 0.0011;
  double stiffness = 1.0e4;
  double max_force = 10.0;
  double gain = 1.0;
  double noise_std = 0.0;
  double real_severity = 0.2;

  SensorParams nominal() const {
    SensorParams p;
    p.taxel_spacing = taxel_spacing;
    p.stiffness = stiffness;
    p.max_force = max_force;
    p.gain_map.assign(kTaxels, gain);
    p.noise_std = noise_std;
    p.validate();
    return p;
  }
};

struct EvalConfig {
  MetricThresholds thresholds;
  int groups = 10;
  std::string domain = "real_analogue";
  bool stop_on_threshold = true;
  bool pose_matrix = true;
  std::vector<std::string> generalization_shapes{"disc", "bar", "rounded_rect"};
};

struct PathsConfig {
  std::string sim_dataset = "data/sim.tacd";
  std::string real_dataset = "data/real.tacd";
  std::string params_a = "policy_a.tacp";
  std::string params_b = "policy_b.tacp";
  std::string reports = "reports";
  std::string trajectories = "trajectories";
};

struct RunConfig {
  std::uint64_t seed = 0;
  ObjectConfig object;
  SensorConfig sensor;
  HandConfig hand;
  PoseBounds bounds_sim = PoseBounds::sim_default();
  PoseBounds bounds_real = PoseBounds::real_default();
  TrainConfig train;
  RefineConfig refine;
  EvalConfig eval;
  PathsConfig paths;

  /// Independent sub-seeds for each pipeline stage.
  enum Stage : std::uint64_t { kSimData = 1, kRealParams, kRealData, kTrain, kEval, kRefine };
  std::uint64_t stage_seed(Stage s) const { return derive_seed(seed, s); }

  SensorParams real_params() const {
    return perturb_params(sensor.nominal(), sensor.real_severity, stage_seed(kRealParams));
  }
  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = stage_seed(kTrain);
    return t;
  }
};

namespace detail {

inline json bounds_json(const PoseBounds& b) {
  json j;
  for (std::size_t d = 0; d < 4; ++d) {
    const DimRange r = b.dims()[d];
    j[kSampledNames[d]] = {{"lower", r.lower}, {"upper", r.upper}, {"steps", r.steps}};
  }
  j["fixed_x"] = b.fixed_x;
  j["fixed_yaw"] = b.fixed_yaw;
  return j;
}

/// Typed read of a leaf; type errors name the key path.
template <typename T>
T leaf(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::config, "key '" + path + "' has the wrong type");
  }
}

inline PoseBounds bounds_from(const json& j, const std::string& path) {
  PoseBounds b;
  std::array<DimRange*, 4> dims{&b.pitch, &b.roll, &b.y, &b.z};
  for (std::size_t d = 0; d < 4; ++d) {
    const json& r = j.at(kSampledNames[d]);
    const std::string p = path + "." + kSampledNames[d];
    dims[d]->lower = leaf<double>(r.at("lower"), p + ".lower");
    dims[d]->upper = leaf<double>(r.at("upper"), p + ".upper");
    dims[d]->steps = leaf<int>(r.at("steps"), p + ".steps");
  }
  b.fixed_x = leaf<double>(j.at("fixed_x"), path + ".fixed_x");
  b.fixed_yaw = leaf<double>(j.at("fixed_yaw"), path + ".fixed_yaw");
  try {
    b.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::config, "key '" + path + "': " + e.what());
  }
  return b;
}

inline const char* type_label(const json& j) {
  if (j.is_boolean()) return "a boolean";
  if (j.is_number_integer()) return "an integer";
  if (j.is_number()) return "a number";
  if (j.is_string()) return "a string";
  if (j.is_array()) return "an array";
  if (j.is_object()) return "an object";
  return "null";
}

/// Overlays `user` on `base`. Keys absent from `base` are rejected, as are
/// leaves whose JSON type differs from the default's.
inline void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object())
    throw Error(ErrorCode::config, "key '" + (path.empty() ? std::string("<root>") : path) +
                                       "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw Error(ErrorCode::config, "unknown key '" + p + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_strict(slot, value, p);
      continue;
    }
    const bool ok = slot.is_number_integer() ? value.is_number_integer()
                    : slot.is_number()       ? value.is_number()
                                             : slot.type() == value.type();
    if (!ok)
      throw Error(ErrorCode::config, "key '" + p + "' must be " + type_label(slot) + ", got " +
                                         type_label(value));
    slot = value;
  }
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["object"] = {{"shape", c.object.shape},
                 {"thickness", c.object.thickness},
                 {"disc", {{"radius", c.object.disc.radius}}},
                 {"rounded_rect",
                  {{"half_x", c.object.rounded_rect.half_x},
                   {"half_y", c.object.rounded_rect.half_y},
                   {"corner_radius", c.object.rounded_rect.corner_radius}}},
                 {"bar", {{"half_length", c.object.bar.half_length}, {"half_width", c.object.bar.half_width}}}};
  j["sensor"] = {{"taxel_spacing", c.sensor.taxel_spacing}, {"stiffness", c.sensor.stiffness},
                 {"max_force", c.sensor.max_force},         {"gain", c.sensor.gain},
                 {"noise_std", c.sensor.noise_std},         {"real_severity", c.sensor.real_severity}};
  const HandConfig& h = c.hand;
  j["hand"] = {{"link_proximal", h.link_proximal},   {"link_distal", h.link_distal},
               {"finger_spacing", h.finger_spacing}, {"coupling_thumb", h.coupling_thumb},
               {"coupling_finger", h.coupling_finger}, {"pad_rest_offset", h.pad_rest_offset},
               {"target_depth", h.target_depth},     {"joint_lower", h.joint_lower},
               {"joint_upper", h.joint_upper},       {"scan_step", h.scan_step},
               {"bisection_iterations", h.bisection_iterations}, {"taxel_spacing", h.taxel_spacing}};
  j["bounds_sim"] = detail::bounds_json(c.bounds_sim);
  j["bounds_real"] = detail::bounds_json(c.bounds_real);
  const TrainConfig& t = c.train;
  j["train"] = {{"batch_size", t.batch_size},
                {"steps_pretrain", t.steps_pretrain},
                {"steps_finetune", t.steps_finetune},
                {"lr_pretrain", t.lr_pretrain},
                {"lr_finetune", t.lr_finetune},
                {"pair_budget", t.pair_budget},
                {"augmentation",
                 {{"scale_lower", t.augmentation.scale_lower},
                  {"scale_upper", t.augmentation.scale_upper},
                  {"joint_lower", t.augmentation.joint_lower},
                  {"joint_upper", t.augmentation.joint_upper},
                  {"scale_enabled", t.augmentation.scale_enabled},
                  {"joint_enabled", t.augmentation.joint_enabled}}}};
  j["refine"] = {{"max_steps", c.refine.max_steps},
                 {"step_clamp", c.refine.step_clamp},
                 {"eps_pos", c.refine.eps_pos},
                 {"eps_rot", c.refine.eps_rot},
                 {"stop_on_threshold", c.refine.stop_on_threshold}};
  const EvalConfig& e = c.eval;
  j["eval"] = {{"eps_pos", e.thresholds.eps_pos},
               {"eps_rot", e.thresholds.eps_rot},
               {"max_steps", e.thresholds.max_steps},
               {"repetitions", e.thresholds.repetitions},
               {"groups", e.groups},
               {"domain", e.domain},
               {"stop_on_threshold", e.stop_on_threshold},
               {"pose_matrix", e.pose_matrix},
               {"generalization_shapes", e.generalization_shapes}};
  const PathsConfig& p = c.paths;
  j["paths"] = {{"sim_dataset", p.sim_dataset}, {"real_dataset", p.real_dataset},
                {"params_a", p.params_a},       {"params_b", p.params_b},
                {"reports", p.reports},         {"trajectories", p.trajectories}};
  return j;
}

inline RunConfig from_json(const json& j) {
  using detail::leaf;
  RunConfig c;
  c.seed = leaf<std::uint64_t>(j.at("seed"), "seed");
  const json& o = j.at("object");
  c.object.shape = leaf<std::string>(o.at("shape"), "object.shape");
  c.object.thickness = leaf<double>(o.at("thickness"), "object.thickness");
  c.object.disc.radius = leaf<double>(o.at("disc").at("radius"), "object.disc.radius");
  const json& rr = o.at("rounded_rect");
  c.object.rounded_rect.half_x = leaf<double>(rr.at("half_x"), "object.rounded_rect.half_x");
  c.object.rounded_rect.half_y = leaf<double>(rr.at("half_y"), "object.rounded_rect.half_y");
  c.object.rounded_rect.corner_radius =
      leaf<double>(rr.at("corner_radius"), "object.rounded_rect.corner_radius");
  c.object.bar.half_length = leaf<double>(o.at("bar").at("half_length"), "object.bar.half_length");
  c.object.bar.half_width = leaf<double>(o.at("bar").at("half_width"), "object.bar.half_width");

  const json& s = j.at("sensor");
  for (auto [field, key] : {std::pair{&c.sensor.taxel_spacing, "taxel_spacing"},
                            {&c.sensor.stiffness, "stiffness"},
                            {&c.sensor.max_force, "max_force"},
                            {&c.sensor.gain, "gain"},
                            {&c.sensor.noise_std, "noise_std"},
                            {&c.sensor.real_severity, "real_severity"}})
    *field = leaf<double>(s.at(key), std::string("sensor.") + key);

  const json& h = j.at("hand");
  HandConfig& hc = c.hand;
  for (auto [field, key] : {std::pair{&hc.link_proximal, "link_proximal"},
                            {&hc.link_distal, "link_distal"},
                            {&hc.finger_spacing, "finger_spacing"},
                            {&hc.coupling_thumb, "coupling_thumb"},
                            {&hc.coupling_finger, "coupling_finger"},
                            {&hc.pad_rest_offset, "pad_rest_offset"},
                            {&hc.target_depth, "target_depth"},
                            {&hc.joint_lower, "joint_lower"},
                            {&hc.joint_upper, "joint_upper"},
                            {&hc.scan_step, "scan_step"},
                            {&hc.taxel_spacing, "taxel_spacing"}})
    *field = leaf<double>(h.at(key), std::string("hand.") + key);
  hc.bisection_iterations = leaf<int>(h.at("bisection_iterations"), "hand.bisection_iterations");

  c.bounds_sim = detail::bounds_from(j.at("bounds_sim"), "bounds_sim");
  c.bounds_real = detail::bounds_from(j.at("bounds_real"), "bounds_real");

  const json& t = j.at("train");
  c.train.batch_size = leaf<int>(t.at("batch_size"), "train.batch_size");
  c.train.steps_pretrain = leaf<std::uint64_t>(t.at("steps_pretrain"), "train.steps_pretrain");
  c.train.steps_finetune = leaf<std::uint64_t>(t.at("steps_finetune"), "train.steps_finetune");
  c.train.lr_pretrain = leaf<double>(t.at("lr_pretrain"), "train.lr_pretrain");
  c.train.lr_finetune = leaf<double>(t.at("lr_finetune"), "train.lr_finetune");
  c.train.pair_budget = leaf<std::uint64_t>(t.at("pair_budget"), "train.pair_budget");
  const json& a = t.at("augmentation");
  AugmentationConfig& ac = c.train.augmentation;
  ac.scale_lower = leaf<double>(a.at("scale_lower"), "train.augmentation.scale_lower");
  ac.scale_upper = leaf<double>(a.at("scale_upper"), "train.augmentation.scale_upper");
  ac.joint_lower = leaf<double>(a.at("joint_lower"), "train.augmentation.joint_lower");
  ac.joint_upper = leaf<double>(a.at("joint_upper"), "train.augmentation.joint_upper");
  ac.scale_enabled = leaf<bool>(a.at("scale_enabled"), "train.augmentation.scale_enabled");
  ac.joint_enabled = leaf<bool>(a.at("joint_enabled"), "train.augmentation.joint_enabled");

  const json& r = j.at("refine");
  c.refine.max_steps = leaf<int>(r.at("max_steps"), "refine.max_steps");
  const auto clamp = leaf<std::vector<double>>(r.at("step_clamp"), "refine.step_clamp");
  if (clamp.size() != 6) throw Error(ErrorCode::config, "key 'refine.step_clamp' needs 6 entries");
  std::copy(clamp.begin(), clamp.end(), c.refine.step_clamp.begin());
  c.refine.eps_pos = leaf<double>(r.at("eps_pos"), "refine.eps_pos");
  c.refine.eps_rot = leaf<double>(r.at("eps_rot"), "refine.eps_rot");
  c.refine.stop_on_threshold = leaf<bool>(r.at("stop_on_threshold"), "refine.stop_on_threshold");

  const json& e = j.at("eval");
  c.eval.thresholds.eps_pos = leaf<double>(e.at("eps_pos"), "eval.eps_pos");
  c.eval.thresholds.eps_rot = leaf<double>(e.at("eps_rot"), "eval.eps_rot");
  c.eval.thresholds.max_steps = leaf<int>(e.at("max_steps"), "eval.max_steps");
  c.eval.thresholds.repetitions = leaf<int>(e.at("repetitions"), "eval.repetitions");
  c.eval.groups = leaf<int>(e.at("groups"), "eval.groups");
  c.eval.domain = leaf<std::string>(e.at("domain"), "eval.domain");
  if (c.eval.domain != "sim" && c.eval.domain != "real_analogue")
    throw Error(ErrorCode::config, "key 'eval.domain' must be \"sim\" or \"real_analogue\"");
  c.eval.stop_on_threshold = leaf<bool>(e.at("stop_on_threshold"), "eval.stop_on_threshold");
  c.eval.pose_matrix = leaf<bool>(e.at("pose_matrix"), "eval.pose_matrix");
  c.eval.generalization_shapes =
      leaf<std::vector<std::string>>(e.at("generalization_shapes"), "eval.generalization_shapes");
  for (const std::string& name : c.eval.generalization_shapes) (void)c.object.shape_by_name(name);

  const json& p = j.at("paths");
  for (auto [field, key] : {std::pair{&c.paths.sim_dataset, "sim_dataset"},
                            {&c.paths.real_dataset, "real_dataset"},
                            {&c.paths.params_a, "params_a"},
                            {&c.paths.params_b, "params_b"},
                            {&c.paths.reports, "reports"},
                            {&c.paths.trajectories, "trajectories"}})
    *field = leaf<std::string>(p.at(key), std::string("paths.") + key);

  try {
    (void)c.object.model();
    (void)c.sensor.nominal();
    c.hand.validate();
    c.train.validate();
    c.refine.validate();
    c.eval.thresholds.validate();
  } catch (const Error& err) {
    throw Error(ErrorCode::config, err.what());
  }
  if (c.eval.groups < 1) throw Error(ErrorCode::config, "key 'eval.groups' must be >= 1");
  return c;
}

/// Defaults overlaid with `user`; unknown keys and type changes are errors.
inline RunConfig parse_config(const json& user) {
  json merged = to_json(RunConfig{});
  detail::merge_strict(merged, user, "");
  return from_json(merged);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config: " + path.string());
  json user;
  try {
    user = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
  return parse_config(user);
}

inline std::uint64_t config_hash(const RunConfig& c) { return io::fnv1a(to_json(c).dump()); }

inline std::string default_config_text() { return to_json(RunConfig{}).dump(2) + "\n"; }

}  // namespace tacrefine
