#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "repeatlab/common.hpp"
#include "repeatlab/experiments.hpp"
#include "repeatlab/rng.hpp"
#include "repeatlab/theory.hpp"

namespace repeatlab {

using nlohmann::json;

enum class ExperimentType {
  Run,
  GapSweep,
  InitHeatmap,
  LayerwiseLr,
  RandomLabelProbe,
  BiasRefutation,
  ScalingAblation,
  AdamClosure,
  TheoryScaling,
  VerifyLemmas,
};

inline const char* experiment_type_name(ExperimentType t) {
  switch (t) {
    case ExperimentType::Run: return "run";
    case ExperimentType::GapSweep: return "gap_sweep";
    case ExperimentType::InitHeatmap: return "init_heatmap";
    case ExperimentType::LayerwiseLr: return "layerwise_lr";
    case ExperimentType::RandomLabelProbe: return "random_label_probe";
    case ExperimentType::BiasRefutation: return "bias_refutation";
    case ExperimentType::ScalingAblation: return "scaling_ablation";
    case ExperimentType::AdamClosure: return "adam_closure";
    case ExperimentType::TheoryScaling: return "theory_scaling";
    case ExperimentType::VerifyLemmas: return "verify_lemmas";
  }
  return "?";
}

namespace cfgdetail {

inline size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string nearest_key(const std::string& key, const std::vector<std::string>& valid) {
  std::string best;
  size_t best_d = std::string::npos;
  for (const std::string& v : valid) {
    const size_t d = levenshtein(key, v);
    if (d < best_d) {
      best_d = d;
      best = v;
    }
  }
  return best;
}

// Allowed-key tree mirroring the config schema; arrays apply `element`.
struct KeyNode {
  std::map<std::string, KeyNode> children;
  const KeyNode* element = nullptr;  // for arrays of objects
  bool leaf = true;
};

inline KeyNode obj(std::map<std::string, KeyNode> ch) {
  KeyNode n;
  n.children = std::move(ch);
  n.leaf = false;
  return n;
}

inline KeyNode arr(const KeyNode* elem) {
  KeyNode n;
  n.element = elem;
  n.leaf = false;
  return n;
}

inline const KeyNode& phase_node() {
  static const KeyNode n = obj({{"size", {}}, {"duration", {}}});
  return n;
}

inline const KeyNode& schema_root() {
  static const KeyNode n = obj({
      {"experiment", obj({{"name", {}}, {"type", {}}})},
      {"task", obj({{"kind", {}}, {"d", {}}, {"k", {}}, {"teacher_seed", {}}})},
      {"model",
       obj({{"widths", {}},
            {"init", obj({{"kind", {}}, {"alpha", {}}, {"layer_scales", {}}})}})},
      {"optim", obj({{"kind", {}},
                     {"lr", {}},
                     {"layer_lrs", {}},
                     {"beta1", {}},
                     {"beta2", {}},
                     {"eps", {}},
                     {"weight_decay", {}}})},
      {"schedule", obj({{"phases", arr(&phase_node())},
                        {"batch", {}},
                        {"nested", {}},
                        {"without_replacement", {}},
                        {"auto_acc_threshold", {}},
                        {"auto_max_epochs", {}},
                        {"online_total", {}},
                        {"auto_from_total", {}},
                        {"n_phases", {}}})},
      {"interventions", obj({{"bias_removal", {}},
                             {"whiten", {}},
                             {"random_label_prephase", obj({{"size", {}}, {"duration", {}}})},
                             {"biased_online_m", {}}})},
      {"eval", obj({{"test_size", {}}, {"eval_every", {}}})},
      {"run", obj({{"max_steps", {}},
                   {"success_threshold", {}},
                   {"stop_at_threshold", {}},
                   {"loss", {}}})},
      {"seeds", obj({{"base", {}}, {"n", {}}, {"list", {}}})},
      {"sweep", obj({{"sizes", {}},
                     {"lrs", obj({{"lo", {}}, {"hi", {}}, {"points", {}}})},
                     {"first_scales", {}},
                     {"rest_scales", {}},
                     {"budget_steps", {}},
                     {"lr1", obj({{"lo", {}}, {"hi", {}}, {"points", {}}})},
                     {"lr2", obj({{"lo", {}}, {"hi", {}}, {"points", {}}})},
                     {"beta2s", {}},
                     {"prephase", obj({{"size", {}}, {"duration", {}}})},
                     {"bias_mode", {}},
                     {"biased_sources", {}},
                     {"axis", {}},
                     {"values", {}},
                     {"small_size", {}},
                     {"large_size", {}}})},
      {"theory", obj({{"d", {}},
                      {"Ns", {}},
                      {"lr", {}},
                      {"a_star", {}},
                      {"eps", {}},
                      {"trials", {}},
                      {"width_m", {}},
                      {"cap_multiplier", {}},
                      {"random_labels", {}},
                      {"use_schedule", {}},
                      {"skip_phase1", {}},
                      {"c0", {}},
                      {"delta", {}},
                      {"bernstein_C", {}}})},
      {"verify", obj({{"d", {}},
                      {"N", {}},
                      {"lr", {}},
                      {"a_star", {}},
                      {"scheduled", {}},
                      {"trials_qmono", {}},
                      {"trials_contraction", {}},
                      {"trials_drift", {}},
                      {"trials_mirror", {}},
                      {"trials_mc", {}},
                      {"anticoncentration_cells", {}}})},
  });
  return n;
}

inline void check_keys(const json& j, const KeyNode& node, const std::string& path) {
  if (node.element) {
    if (!j.is_array())
      throw ConfigError("config key '" + path + "' must be an array");
    for (size_t i = 0; i < j.size(); ++i)
      check_keys(j[i], *node.element, path + "[" + std::to_string(i) + "]");
    return;
  }
  if (node.leaf || !j.is_object()) return;
  std::vector<std::string> valid;
  for (const auto& [k, v] : node.children) valid.push_back(k);
  for (const auto& [k, v] : j.items()) {
    auto it = node.children.find(k);
    if (it == node.children.end()) {
      const std::string hint = nearest_key(k, valid);
      throw ConfigError("unknown config key '" + (path.empty() ? k : path + "." + k) + "'" +
                        (hint.empty() ? "" : "; nearest valid key is '" + hint + "'"));
    }
    // objects with declared children accept either an object or a scalar
    // (e.g. "lrs" may be a plain array); only recurse into objects/arrays.
    check_keys(v, it->second, path.empty() ? k : path + "." + k);
  }
}

inline json get_obj(const json& root, const char* key) {
  if (!root.contains(key)) return json::object();
  if (!root.at(key).is_object())
    throw ConfigError(std::string("config section '") + key + "' must be an object");
  return root.at(key);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const char* path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + path + "." + key + "' has the wrong type");
  }
}

inline std::vector<double> get_dvec(const json& j, const char* key, const char* path) {
  std::vector<double> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array())
    throw ConfigError(std::string("config key '") + path + "." + key + "' must be an array");
  for (const auto& v : j.at(key)) {
    if (!v.is_number())
      throw ConfigError(std::string("config key '") + path + "." + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::vector<long> get_lvec(const json& j, const char* key, const char* path) {
  std::vector<long> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array())
    throw ConfigError(std::string("config key '") + path + "." + key + "' must be an array");
  for (const auto& v : j.at(key)) {
    if (!v.is_number_integer())
      throw ConfigError(std::string("config key '") + path + "." + key + "' must hold integers");
    out.push_back(v.get<long>());
  }
  return out;
}

// a size is an integer count, the string "online", or a fraction of
// schedule.online_total
inline long parse_size(const json& v, long online_total, const char* path) {
  if (v.is_string()) {
    if (v.get<std::string>() == "online") return kOnline;
    throw ConfigError(std::string("config key '") + path + "' must be a count, a fraction, or \"online\"");
  }
  if (v.is_number_integer()) return v.get<long>();
  if (v.is_number_float()) {
    const double f = v.get<double>();
    if (!(f > 0.0 && f < 1.0))
      throw ConfigError(std::string("fractional size at '") + path + "' must lie in (0,1)");
    if (online_total < 1)
      throw ConfigError(std::string("fractional size at '") + path +
                        "' needs schedule.online_total");
    return std::max<long>(1, std::lround(f * static_cast<double>(online_total)));
  }
  throw ConfigError(std::string("config key '") + path + "' must be a count, a fraction, or \"online\"");
}

inline std::vector<double> parse_lr_list(const json& sweep, const char* key, const char* path) {
  std::vector<double> out;
  if (!sweep.contains(key)) return out;
  const json& v = sweep.at(key);
  if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(std::string("'") + path + "." + key + "' must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  if (v.is_object()) {
    const double lo = get_or<double>(v, "lo", 0.0, key);
    const double hi = get_or<double>(v, "hi", lo, key);
    const int points = get_or<int>(v, "points", 1, key);
    return lr_grid(lo, hi, points);
  }
  throw ConfigError(std::string("'") + path + "." + key + "' must be an array or {lo,hi,points}");
}

}  // namespace cfgdetail

struct TheorySection {
  int d = 16;
  std::vector<long> Ns = {16, 64, 256, 1024};
  double lr = 0.1;
  double a_star = 0.2;  // ignored when use_schedule
  bool use_schedule = false;
  double eps = 0.01;
  long trials = 200;
  long width_m = 1L << 20;
  long cap_multiplier = 100;
  bool random_labels = false;
  bool skip_phase1 = false;
  TheoryConstants consts;
};

struct VerifySection {
  int d = 16;
  long N = 64;
  double lr = 0.1;
  double a_star = 0.2;
  bool scheduled = false;
  long trials_qmono = 10000;
  long trials_contraction = 1000;
  long trials_drift = 2000;
  long trials_mirror = 200;
  long trials_mc = 10000;
  // (d, N) anti-concentration cells
  std::vector<std::pair<int, long>> anticoncentration_cells = {{10, 40}, {50, 200}};
};

struct SweepSection {
  std::vector<long> sizes;
  std::vector<double> lrs;
  std::vector<double> first_scales, rest_scales;
  long budget_steps = 500;
  std::vector<double> lr1, lr2;
  std::vector<double> beta2s = {0.8, 0.9, 0.95, 0.999};
  RandomPrephase prephase;
  BiasMode bias_mode = BiasMode::MeanZero;
  std::vector<long> biased_sources;
  ScalingAxis axis = ScalingAxis::Width;
  std::vector<long> values;
  long small_size = 0;
  long large_size = 0;
};

struct ResolvedConfig {
  std::string name = "experiment";
  ExperimentType type = ExperimentType::Run;
  RunConfig base;
  uint64_t base_seed = 1;
  std::vector<uint64_t> seeds;
  SweepSection sweep;
  TheorySection theory;
  VerifySection verify;
  json echo;  // fully-resolved form, written to meta.json
};

namespace cfgdetail {

inline ExperimentType parse_experiment_type(const std::string& s) {
  static const std::map<std::string, ExperimentType> m = {
      {"run", ExperimentType::Run},
      {"gap_sweep", ExperimentType::GapSweep},
      {"init_heatmap", ExperimentType::InitHeatmap},
      {"layerwise_lr", ExperimentType::LayerwiseLr},
      {"random_label_probe", ExperimentType::RandomLabelProbe},
      {"bias_refutation", ExperimentType::BiasRefutation},
      {"scaling_ablation", ExperimentType::ScalingAblation},
      {"adam_closure", ExperimentType::AdamClosure},
      {"theory_scaling", ExperimentType::TheoryScaling},
      {"verify_lemmas", ExperimentType::VerifyLemmas}};
  auto it = m.find(s);
  if (it == m.end()) {
    std::vector<std::string> valid;
    for (const auto& [k, v] : m) valid.push_back(k);
    throw ConfigError("unknown experiment.type '" + s + "'; nearest valid value is '" +
                      nearest_key(s, valid) + "'");
  }
  return it->second;
}

inline InitKind parse_init_kind(const std::string& s) {
  static const std::map<std::string, InitKind> m = {
      {"default-uniform", InitKind::DefaultUniform},
      {"gaussian", InitKind::Gaussian},
      {"alpha-scaled", InitKind::AlphaScaled},
      {"mup", InitKind::MuP},
      {"per-layer-constants", InitKind::PerLayerConstants}};
  auto it = m.find(s);
  if (it == m.end()) {
    std::vector<std::string> valid;
    for (const auto& [k, v] : m) valid.push_back(k);
    throw ConfigError("unknown init.kind '" + s + "'; nearest valid value is '" +
                      nearest_key(s, valid) + "'");
  }
  return it->second;
}

inline BiasMode parse_bias_mode(const std::string& s) {
  static const std::map<std::string, BiasMode> m = {{"mean-zero", BiasMode::MeanZero},
                                                    {"label-balance", BiasMode::LabelBalance},
                                                    {"class-conditional", BiasMode::ClassConditional},
                                                    {"antipodal", BiasMode::Antipodal}};
  auto it = m.find(s);
  if (it == m.end()) {
    std::vector<std::string> valid;
    for (const auto& [k, v] : m) valid.push_back(k);
    throw ConfigError("unknown bias mode '" + s + "'; nearest valid value is '" +
                      nearest_key(s, valid) + "'");
  }
  return it->second;
}

inline const char* bias_mode_name(BiasMode m) {
  switch (m) {
    case BiasMode::MeanZero: return "mean-zero";
    case BiasMode::LabelBalance: return "label-balance";
    case BiasMode::ClassConditional: return "class-conditional";
    case BiasMode::Antipodal: return "antipodal";
  }
  return "?";
}

inline Phase parse_phase(const json& p, long online_total, const std::string& path) {
  Phase ph;
  if (!p.contains("size")) throw ConfigError("phase at '" + path + "' needs a size");
  ph.size = parse_size(p.at("size"), online_total, path.c_str());
  if (!p.contains("duration")) {
    ph.dur = Phase::Dur::Auto;
    return ph;
  }
  const json& d = p.at("duration");
  if (d.is_string()) {
    if (d.get<std::string>() != "auto")
      throw ConfigError("phase duration at '" + path + "' must be \"auto\", {steps}, or {epochs}");
    ph.dur = Phase::Dur::Auto;
  } else if (d.is_number_integer()) {
    ph.dur = Phase::Dur::Steps;
    ph.amount = d.get<long>();
  } else if (d.is_object()) {
    if (d.contains("steps") == d.contains("epochs"))
      throw ConfigError("phase duration at '" + path + "' needs exactly one of steps/epochs");
    if (d.contains("steps")) {
      ph.dur = Phase::Dur::Steps;
      ph.amount = d.at("steps").get<long>();
    } else {
      ph.dur = Phase::Dur::Epochs;
      ph.amount = d.at("epochs").get<long>();
    }
  } else {
    throw ConfigError("phase duration at '" + path + "' must be \"auto\", {steps}, or {epochs}");
  }
  return ph;
}

}  // namespace cfgdetail

// Apply one dotted-key override; the value is parsed as JSON when possible and
// treated as a string otherwise.
inline void apply_override(json& root, const std::string& dotted, const std::string& value) {
  if (dotted.empty() || dotted.back() == '.') throw ConfigError("bad --set key '" + dotted + "'");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  json* cur = &root;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("bad --set key '" + dotted + "'");
    cur = &(*cur)[parts[i]];
    if (!cur->is_object() && !cur->is_null())
      throw ConfigError("--set key '" + dotted + "' descends into a non-object");
  }
  if (parts.back().empty()) throw ConfigError("bad --set key '" + dotted + "'");
  (*cur)[parts.back()] = parsed;
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  return j;
}

// Parse + default + validate a config document and echo the resolved form.
inline ResolvedConfig resolve_config(json doc) {
  using namespace cfgdetail;
  check_keys(doc, schema_root(), "");

  ResolvedConfig rc;
  const json exp = get_obj(doc, "experiment");
  rc.name = get_or<std::string>(exp, "name", "experiment", "experiment");
  rc.type = parse_experiment_type(get_or<std::string>(exp, "type", "run", "experiment"));

  // task
  {
    const json t = get_obj(doc, "task");
    const std::string kind = get_or<std::string>(t, "kind", "parity", "task");
    const int d = get_or<int>(t, "d", 14, "task");
    const int k = get_or<int>(t, "k", 4, "task");
    if (kind == "parity") {
      rc.base.task = TaskSpec::parity(d, k);
    } else if (kind == "sim") {
      rc.base.task = TaskSpec::sim(d, k, get_or<uint64_t>(t, "teacher_seed", 7, "task"));
    } else {
      throw ConfigError("unknown task.kind '" + kind + "'; valid values are 'parity' and 'sim'");
    }
  }

  // model
  {
    const json m = get_obj(doc, "model");
    if (m.contains("widths")) {
      rc.base.widths.clear();
      for (long w : get_lvec(m, "widths", "model")) rc.base.widths.push_back(static_cast<int>(w));
    }
    const json init = get_obj(m, "init");
    rc.base.init.kind =
        parse_init_kind(get_or<std::string>(init, "kind", "default-uniform", "model.init"));
    rc.base.init.alpha = get_or<double>(init, "alpha", 1.0, "model.init");
    rc.base.init.layer_scales = get_dvec(init, "layer_scales", "model.init");
  }

  // optim
  {
    const json o = get_obj(doc, "optim");
    const std::string kind = get_or<std::string>(o, "kind", "sgd", "optim");
    if (kind == "sgd")
      rc.base.optim.kind = OptKind::Sgd;
    else if (kind == "adamw")
      rc.base.optim.kind = OptKind::AdamW;
    else
      throw ConfigError("unknown optim.kind '" + kind + "'; valid values are 'sgd' and 'adamw'");
    rc.base.optim.lr = get_or<double>(o, "lr", 0.1, "optim");
    rc.base.optim.layer_lrs = get_dvec(o, "layer_lrs", "optim");
    rc.base.optim.beta1 = get_or<double>(o, "beta1", 0.9, "optim");
    rc.base.optim.beta2 = get_or<double>(o, "beta2", 0.999, "optim");
    rc.base.optim.eps = get_or<double>(o, "eps", 1e-8, "optim");
    rc.base.optim.weight_decay = get_or<double>(o, "weight_decay", 0.0, "optim");
  }

  // schedule
  long online_total = 0;
  {
    const json s = get_obj(doc, "schedule");
    online_total = get_or<long>(s, "online_total", 0, "schedule");
    rc.base.schedule.batch = get_or<long>(s, "batch", 128, "schedule");
    rc.base.schedule.nested = get_or<bool>(s, "nested", true, "schedule");
    rc.base.schedule.without_replacement =
        get_or<bool>(s, "without_replacement", false, "schedule");
    rc.base.schedule.auto_acc_threshold = get_or<double>(s, "auto_acc_threshold", 0.75, "schedule");
    rc.base.schedule.auto_max_epochs = get_or<long>(s, "auto_max_epochs", 50, "schedule");
    const long auto_total = get_or<long>(s, "auto_from_total", 0, "schedule");
    if (auto_total > 0) {
      rc.base.schedule.phases =
          auto_phases(auto_total, get_or<int>(s, "n_phases", 6, "schedule"));
      Phase online;
      online.size = kOnline;
      online.dur = Phase::Dur::Steps;
      online.amount = auto_total;
      rc.base.schedule.phases.push_back(online);
    } else if (s.contains("phases")) {
      rc.base.schedule.phases.clear();
      const json& ph = s.at("phases");
      for (size_t i = 0; i < ph.size(); ++i)
        rc.base.schedule.phases.push_back(
            parse_phase(ph[i], online_total, "schedule.phases[" + std::to_string(i) + "]"));
    }
  }

  // interventions
  {
    const json iv = get_obj(doc, "interventions");
    const std::string mode = get_or<std::string>(iv, "bias_removal", "none", "interventions");
    if (mode != "none") rc.base.bias_removal = parse_bias_mode(mode);
    rc.base.whiten_inputs = get_or<bool>(iv, "whiten", false, "interventions");
    if (iv.contains("random_label_prephase")) {
      const json pp = iv.at("random_label_prephase");
      RandomPrephase rp;
      rp.size = get_or<long>(pp, "size", 0, "interventions.random_label_prephase");
      rp.duration = get_or<long>(pp, "duration", 0, "interventions.random_label_prephase");
      rc.base.random_label_prephase = rp;
    }
    const long m = get_or<long>(iv, "biased_online_m", 0, "interventions");
    if (m > 0) rc.base.biased_online_m = m;
  }

  // eval + run
  {
    const json e = get_obj(doc, "eval");
    rc.base.eval.test_size = get_or<long>(e, "test_size", 0, "eval");
    rc.base.eval.eval_every = get_or<long>(e, "eval_every", 10, "eval");
    const json r = get_obj(doc, "run");
    rc.base.max_steps = get_or<long>(r, "max_steps", 100000, "run");
    rc.base.success_threshold = get_or<double>(r, "success_threshold", 0.99, "run");
    rc.base.stop_at_threshold = get_or<bool>(r, "stop_at_threshold", true, "run");
    const std::string loss = get_or<std::string>(r, "loss", "mse", "run");
    if (loss == "mse")
      rc.base.loss = LossKind::Mse;
    else if (loss == "correlation")
      rc.base.loss = LossKind::Correlation;
    else
      throw ConfigError("unknown run.loss '" + loss + "'; valid values are 'mse' and 'correlation'");
  }

  // seeds
  {
    const json s = get_obj(doc, "seeds");
    rc.base_seed = get_or<uint64_t>(s, "base", 1, "seeds");
    if (s.contains("list")) {
      for (const auto& v : s.at("list")) rc.seeds.push_back(v.get<uint64_t>());
      if (rc.seeds.empty()) throw ConfigError("seeds.list must be non-empty when present");
    } else {
      const long n = get_or<long>(s, "n", 1, "seeds");
      if (n < 1) throw ConfigError("seeds.n must be >= 1");
      for (long i = 0; i < n; ++i)
        rc.seeds.push_back(derive_seed(rc.base_seed, "seed", static_cast<uint64_t>(i)));
    }
  }

  // sweep
  {
    const json s = get_obj(doc, "sweep");
    if (s.contains("sizes")) {
      for (const auto& v : s.at("sizes"))
        rc.sweep.sizes.push_back(parse_size(v, online_total, "sweep.sizes"));
    }
    rc.sweep.lrs = parse_lr_list(s, "lrs", "sweep");
    rc.sweep.first_scales = get_dvec(s, "first_scales", "sweep");
    rc.sweep.rest_scales = get_dvec(s, "rest_scales", "sweep");
    rc.sweep.budget_steps = get_or<long>(s, "budget_steps", 500, "sweep");
    rc.sweep.lr1 = parse_lr_list(s, "lr1", "sweep");
    rc.sweep.lr2 = parse_lr_list(s, "lr2", "sweep");
    if (s.contains("beta2s")) rc.sweep.beta2s = get_dvec(s, "beta2s", "sweep");
    if (s.contains("prephase")) {
      const json pp = s.at("prephase");
      rc.sweep.prephase.size = get_or<long>(pp, "size", 0, "sweep.prephase");
      rc.sweep.prephase.duration = get_or<long>(pp, "duration", 0, "sweep.prephase");
    }
    rc.sweep.bias_mode =
        parse_bias_mode(get_or<std::string>(s, "bias_mode", "mean-zero", "sweep"));
    rc.sweep.biased_sources = get_lvec(s, "biased_sources", "sweep");
    const std::string axis = get_or<std::string>(s, "axis", "width", "sweep");
    if (axis == "width")
      rc.sweep.axis = ScalingAxis::Width;
    else if (axis == "depth")
      rc.sweep.axis = ScalingAxis::Depth;
    else if (axis == "task_dim")
      rc.sweep.axis = ScalingAxis::TaskDim;
    else
      throw ConfigError("unknown sweep.axis '" + axis +
                        "'; valid values are 'width', 'depth', 'task_dim'");
    rc.sweep.values = get_lvec(s, "values", "sweep");
    if (s.contains("small_size"))
      rc.sweep.small_size = parse_size(s.at("small_size"), online_total, "sweep.small_size");
    if (s.contains("large_size"))
      rc.sweep.large_size = parse_size(s.at("large_size"), online_total, "sweep.large_size");
  }

  // theory
  {
    const json t = get_obj(doc, "theory");
    rc.theory.d = get_or<int>(t, "d", 16, "theory");
    if (t.contains("Ns")) rc.theory.Ns = get_lvec(t, "Ns", "theory");
    rc.theory.lr = get_or<double>(t, "lr", 0.1, "theory");
    rc.theory.a_star = get_or<double>(t, "a_star", 0.2, "theory");
    rc.theory.use_schedule = get_or<bool>(t, "use_schedule", false, "theory");
    rc.theory.eps = get_or<double>(t, "eps", 0.01, "theory");
    rc.theory.trials = get_or<long>(t, "trials", 200, "theory");
    rc.theory.width_m = get_or<long>(t, "width_m", 1L << 20, "theory");
    rc.theory.cap_multiplier = get_or<long>(t, "cap_multiplier", 100, "theory");
    rc.theory.random_labels = get_or<bool>(t, "random_labels", false, "theory");
    rc.theory.skip_phase1 = get_or<bool>(t, "skip_phase1", false, "theory");
    rc.theory.consts.c0 = get_or<double>(t, "c0", rc.theory.consts.c0, "theory");
    rc.theory.consts.delta = get_or<double>(t, "delta", rc.theory.consts.delta, "theory");
    rc.theory.consts.bernstein_C = get_or<double>(t, "bernstein_C", 1.0, "theory");
    rc.theory.consts.random_labels = rc.theory.random_labels;
  }

  // verify
  {
    const json v = get_obj(doc, "verify");
    rc.verify.d = get_or<int>(v, "d", 16, "verify");
    rc.verify.N = get_or<long>(v, "N", 64, "verify");
    rc.verify.lr = get_or<double>(v, "lr", 0.1, "verify");
    rc.verify.a_star = get_or<double>(v, "a_star", 0.2, "verify");
    rc.verify.scheduled = get_or<bool>(v, "scheduled", false, "verify");
    rc.verify.trials_qmono = get_or<long>(v, "trials_qmono", 10000, "verify");
    rc.verify.trials_contraction = get_or<long>(v, "trials_contraction", 1000, "verify");
    rc.verify.trials_drift = get_or<long>(v, "trials_drift", 2000, "verify");
    rc.verify.trials_mirror = get_or<long>(v, "trials_mirror", 200, "verify");
    rc.verify.trials_mc = get_or<long>(v, "trials_mc", 10000, "verify");
    if (v.contains("anticoncentration_cells")) {
      rc.verify.anticoncentration_cells.clear();
      for (const auto& cell : v.at("anticoncentration_cells")) {
        if (!cell.is_array() || cell.size() != 2)
          throw ConfigError("verify.anticoncentration_cells entries must be [d, N] pairs");
        rc.verify.anticoncentration_cells.emplace_back(cell[0].get<int>(), cell[1].get<long>());
      }
    }
  }

  if (rc.base.schedule.phases.empty()) {
    if (rc.type == ExperimentType::Run || rc.type == ExperimentType::RandomLabelProbe) {
      // default: pure online training for the full step budget
      Phase online;
      online.size = kOnline;
      online.dur = Phase::Dur::Steps;
      online.amount = rc.base.max_steps;
      rc.base.schedule.phases.push_back(online);
    } else {
      // sweep recipes install their own phases per arm; theory and verify
      // ignore the schedule entirely. Keep a placeholder so the base passes
      // validation without forcing an online batch size.
      rc.base.schedule.phases.push_back(Phase{1, Phase::Dur::Steps, 0});
    }
  }
  rc.base.validate();
  rc.theory.consts.validate();

  // resolved echo
  json& e = rc.echo;
  e["experiment"] = {{"name", rc.name}, {"type", experiment_type_name(rc.type)}};
  {
    json t;
    t["kind"] = rc.base.task.kind == TaskKind::Parity ? "parity" : "sim";
    t["d"] = rc.base.task.d;
    t["k"] = rc.base.task.k;
    if (rc.base.task.kind == TaskKind::Parity) t["support"] = rc.base.task.support;
    e["task"] = t;
  }
  e["model"] = {{"widths", rc.base.widths},
                {"init",
                 {{"kind", init_kind_name(rc.base.init.kind)},
                  {"alpha", rc.base.init.alpha},
                  {"layer_scales", rc.base.init.layer_scales}}}};
  e["optim"] = {{"kind", rc.base.optim.kind == OptKind::Sgd ? "sgd" : "adamw"},
                {"lr", rc.base.optim.lr},
                {"layer_lrs", rc.base.optim.layer_lrs},
                {"beta1", rc.base.optim.beta1},
                {"beta2", rc.base.optim.beta2},
                {"eps", rc.base.optim.eps},
                {"weight_decay", rc.base.optim.weight_decay}};
  {
    json phases = json::array();
    for (const Phase& ph : rc.base.schedule.phases) {
      json p;
      p["size"] = ph.size == kOnline ? json("online") : json(ph.size);
      switch (ph.dur) {
        case Phase::Dur::Steps: p["duration"] = {{"steps", ph.amount}}; break;
        case Phase::Dur::Epochs: p["duration"] = {{"epochs", ph.amount}}; break;
        case Phase::Dur::Auto: p["duration"] = "auto"; break;
      }
      phases.push_back(p);
    }
    e["schedule"] = {{"phases", phases},
                     {"batch", rc.base.schedule.batch},
                     {"nested", rc.base.schedule.nested},
                     {"without_replacement", rc.base.schedule.without_replacement},
                     {"auto_acc_threshold", rc.base.schedule.auto_acc_threshold},
                     {"auto_max_epochs", rc.base.schedule.auto_max_epochs}};
  }
  {
    json iv;
    iv["bias_removal"] =
        rc.base.bias_removal ? cfgdetail::bias_mode_name(*rc.base.bias_removal) : "none";
    iv["whiten"] = rc.base.whiten_inputs;
    if (rc.base.random_label_prephase)
      iv["random_label_prephase"] = {{"size", rc.base.random_label_prephase->size},
                                     {"duration", rc.base.random_label_prephase->duration}};
    if (rc.base.biased_online_m) iv["biased_online_m"] = *rc.base.biased_online_m;
    e["interventions"] = iv;
  }
  e["eval"] = {{"test_size", rc.base.test_size()}, {"eval_every", rc.base.eval.eval_every}};
  e["run"] = {{"max_steps", rc.base.max_steps},
              {"success_threshold", rc.base.success_threshold},
              {"stop_at_threshold", rc.base.stop_at_threshold},
              {"loss", rc.base.loss == LossKind::Mse ? "mse" : "correlation"}};
  e["seeds"] = {{"base", rc.base_seed}, {"list", rc.seeds}};
  e["sweep"] = {{"sizes", rc.sweep.sizes},
                {"lrs", rc.sweep.lrs},
                {"first_scales", rc.sweep.first_scales},
                {"rest_scales", rc.sweep.rest_scales},
                {"budget_steps", rc.sweep.budget_steps},
                {"lr1", rc.sweep.lr1},
                {"lr2", rc.sweep.lr2},
                {"beta2s", rc.sweep.beta2s},
                {"prephase",
                 {{"size", rc.sweep.prephase.size}, {"duration", rc.sweep.prephase.duration}}},
                {"bias_mode", cfgdetail::bias_mode_name(rc.sweep.bias_mode)},
                {"biased_sources", rc.sweep.biased_sources},
                {"axis", rc.sweep.axis == ScalingAxis::Width
                             ? "width"
                             : rc.sweep.axis == ScalingAxis::Depth ? "depth" : "task_dim"},
                {"values", rc.sweep.values},
                {"small_size", rc.sweep.small_size},
                {"large_size", rc.sweep.large_size}};
  e["theory"] = {{"d", rc.theory.d},
                 {"Ns", rc.theory.Ns},
                 {"lr", rc.theory.lr},
                 {"a_star", rc.theory.a_star},
                 {"use_schedule", rc.theory.use_schedule},
                 {"eps", rc.theory.eps},
                 {"trials", rc.theory.trials},
                 {"width_m", rc.theory.width_m},
                 {"cap_multiplier", rc.theory.cap_multiplier},
                 {"random_labels", rc.theory.random_labels},
                 {"skip_phase1", rc.theory.skip_phase1},
                 {"c0", rc.theory.consts.c0},
                 {"delta", rc.theory.consts.delta},
                 {"bernstein_C", rc.theory.consts.bernstein_C}};
  {
    json cells = json::array();
    for (const auto& [cd, cn] : rc.verify.anticoncentration_cells)
      cells.push_back(json::array({cd, cn}));
    e["verify"] = {{"d", rc.verify.d},
                   {"N", rc.verify.N},
                   {"lr", rc.verify.lr},
                   {"a_star", rc.verify.a_star},
                   {"scheduled", rc.verify.scheduled},
                   {"trials_qmono", rc.verify.trials_qmono},
                   {"trials_contraction", rc.verify.trials_contraction},
                   {"trials_drift", rc.verify.trials_drift},
                   {"trials_mirror", rc.verify.trials_mirror},
                   {"trials_mc", rc.verify.trials_mc},
                   {"anticoncentration_cells", cells}};
  }
  return rc;
}

inline ResolvedConfig parse_config(const std::string& path,
                                   const std::vector<std::string>& overrides) {
  json doc = read_json_file(path);
  for (const std::string& ov : overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + ov + "'");
    apply_override(doc, ov.substr(0, eq), ov.substr(eq + 1));
  }
  return resolve_config(std::move(doc));
}

}  // namespace repeatlab
