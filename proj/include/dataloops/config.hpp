#pragma once

// Flat `key = value` run configuration.  Every accepted key is listed in
// config_keys() with its default; `#` starts a comment.  Mixture
// specifications use the open family density.<name>.{weights,means,variances}.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dataloops/io.hpp"
#include "dataloops/suite.hpp"

namespace dataloops {

struct KeySpec {
  const char* key;
  const char* default_value;
  const char* help;
};

inline const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", "0", "global seed; every random stream derives from it"},
      {"schedule.kind", "linear", "noise schedule (sigma(t) = t)"},
      {"schedule.sigma_min", "0.002", "smallest noise level used by samplers"},
      {"schedule.sigma_max", "80", "noise level at the horizon T"},
      {"benchmark.components", "8", "ring components"},
      {"benchmark.radius", "2", "ring radius"},
      {"benchmark.component_std", "0.1", "per-component standard deviation"},
      {"benchmark.samples", "2000", "dataset size before the clean/corrupt split"},
      {"benchmark.clean_fraction", "0.1", "fraction kept clean"},
      {"benchmark.contraction", "0.5", "corruption: x -> contraction * x + jitter * z"},
      {"benchmark.jitter", "0.05", "corruption jitter standard deviation"},
      {"annotation.method", "fixed_sigma", "fixed_sigma | per_sample"},
      {"annotation.epsilon", "0.05", "confusion slack in (0, 0.5)"},
      {"annotation.t_min", "0.05", "first candidate time"},
      {"annotation.t_max", "80", "last candidate time"},
      {"annotation.t_count", "32", "number of log-spaced candidate times"},
      {"annotation.noise_draws", "16", "noise draws per point (fitting and per-sample queries)"},
      {"annotation.features", "linear", "linear | quadratic classifier features"},
      {"annotation.holdout", "0.2", "validation fraction of the classifier data"},
      {"annotation.iterations", "300", "gradient steps per logistic fit"},
      {"annotation.learning_rate", "0.5", "logistic regression step size"},
      {"annotation.l2", "0.0001", "logistic regression L2 penalty"},
      {"model.hidden", "64,64,64", "hidden layer widths"},
      {"model.output", "direct", "direct | skip"},
      {"model.sigma_data", "1", "data scale used by input/output scalings"},
      {"train.steps", "20000", "loop-0 optimizer steps"},
      {"train.batch", "128", "batch size"},
      {"train.optimizer", "adam", "sgd | adam"},
      {"train.learning_rate", "0.001", "step size"},
      {"train.clip_norm", "10", "gradient norm clip (0 disables)"},
      {"train.ema_halflife", "1000", "parameter EMA half-life in steps (0 disables)"},
      {"train.weight_cap", "1000000", "cap on the ambient loss weight"},
      {"train.anchor_margin", "0.001", "training times satisfy t >= t_anchor * (1 + margin)"},
      {"train.time_sampling", "log_uniform", "uniform | log_uniform"},
      {"loop.L", "1", "number of restoration loops"},
      {"loop.rho", "2", "trust rate > 1, or inf"},
      {"loop.restore_source", "original", "original | previous"},
      {"loop.k", "1", "posterior draws per noisy sample"},
      {"loop.clean_duplication", "auto", "auto (= k > 1) | true | false"},
      {"loop.later_steps_fraction", "0.5", "training steps of loops >= 1 relative to loop 0"},
      {"sampler.kind", "sde_euler", "restoration sampler: ode_heun | sde_euler"},
      {"sampler.nfe", "35", "denoiser evaluations per restoration"},
      {"sampler.spacing", "edm_polynomial", "edm_polynomial | uniform"},
      {"sampler.spacing_exponent", "7", "exponent of the polynomial spacing"},
      {"sampler.sde_form", "variance_exploding", "variance_exploding | stylized"},
      {"eval.truth", "10000", "held-out true samples for SW2"},
      {"eval.generated", "10000", "generated samples for SW2"},
      {"eval.projections", "256", "SW2 projections"},
      {"eval.generation_kind", "ode_heun", "generation sampler for SW2"},
      {"eval.generation_nfe", "35", "generation evaluations"},
      {"eval.conditional", "200", "noisy samples used for the conditional metrics"},
      {"eval.conditional_mc", "4", "posterior draws per conditional sample"},
      {"eval.buckets", "8", "loss-profile buckets"},
      {"eval.bucket_draws", "4", "noise draws per point and bucket"},
      {"eval.profile", "500", "clean points for the loss profile"},
      {"eval.truth_density", "", "density name for the held-out truth (empty: the benchmark ring)"},
      {"suite.seeds", "10", "seeds of the reference study"},
      {"suite.rhos", "1.4142135623730951,2,4,inf", "trust rates compared"},
      {"suite.chain_loops", "3", "loops per finite trust rate"},
      {"suite.madness_loops", "4", "loops for rho = inf"},
      {"suite.base_rho", "2", "trust rate of the k and loss-profile comparisons"},
      {"suite.k_variant", "4", "k compared against k = 1"},
      {"report.timing", "true", "write wall-clock seconds (false: 0, for byte-identical reports)"},
  };
  return keys;
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string nearest_key(std::string_view key) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& k : config_keys()) {
    const std::size_t d = edit_distance(key, k.key);
    if (d < best_d) {
      best_d = d;
      best = k.key;
    }
  }
  return best;
}

namespace detail {

template <class Fn>
auto config_section(const char* section, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("config section '") + section + "': " + e.what());
  }
}

}  // namespace detail

class RunConfig {
 public:
  static RunConfig parse(std::istream& is, const std::string& source = "config") {
    RunConfig c;
    c.merge(is, source);
    c.validate();
    return c;
  }

  // Adds the keys of another file; a key may appear once per file.  Call
  // validate() afterwards.
  void merge(std::istream& is, const std::string& source) {
    std::map<std::string, int> seen;
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
      ++n;
      const auto hash = line.find('#');
      const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      const std::string at = source + " line " + std::to_string(n);
      if (eq == std::string::npos) throw FormatError(at + ": expected 'key = value', got '" + body + "'");
      const std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
      if (seen.count(key))
        throw FormatError(at + ": key '" + key + "' already given on line " + std::to_string(seen[key]));
      seen[key] = n;
      set(key, value, at);
    }
  }

  static RunConfig load(const std::string& path) {
    auto f = open_in(path);
    return parse(f, path);
  }

  static bool known(const std::string& key) {
    if (is_density_key(key)) return true;
    return std::any_of(config_keys().begin(), config_keys().end(), [&](const KeySpec& k) { return key == k.key; });
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "override") {
    if (!known(key))
      throw FormatError(where + ": unknown key '" + key + "' (did you mean '" + nearest_key(key) + "'?)");
    values_[key] = value;
    where_[key] = where;
  }

  std::string get(const std::string& key) const {
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    for (const auto& k : config_keys())
      if (key == k.key) return k.default_value;
    throw FormatError("no such config key '" + key + "'");
  }

  double get_double(const std::string& key) const { return parse_double(get(key), origin(key)); }
  long long get_int(const std::string& key) const { return parse_int(get(key), origin(key)); }
  std::size_t get_count(const std::string& key) const {
    const long long v = get_int(key);
    if (v < 0) throw FormatError(origin(key) + ": must be >= 0");
    return static_cast<std::size_t>(v);
  }
  bool get_bool(const std::string& key) const {
    const std::string v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw FormatError(origin(key) + ": expected true or false, got '" + v + "'");
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }

  Schedule schedule() const {
    return detail::config_section("schedule", [&] {
      return Schedule(get_double("schedule.sigma_min"), get_double("schedule.sigma_max"),
                      schedule_kind_from_string(get("schedule.kind")));
    });
  }

  SamplerConfig sampler() const {
    return detail::config_section("sampler", [&] {
      SamplerConfig s;
      s.kind = sampler_kind_from_string(get("sampler.kind"));
      s.nfe = static_cast<int>(get_int("sampler.nfe"));
      s.spacing = step_spacing_from_string(get("sampler.spacing"));
      s.spacing_exponent = get_double("sampler.spacing_exponent");
      s.sde_form = sde_form_from_string(get("sampler.sde_form"));
      detail::check_config(s);
      return s;
    });
  }

  AnnotationConfig annotation() const {
    return detail::config_section("annotation", [&] {
      AnnotationConfig a;
      a.method = annotation_method_from_string(get("annotation.method"));
      a.epsilon = get_double("annotation.epsilon");
      a.t_grid = log_spaced(get_double("annotation.t_min"), get_double("annotation.t_max"), get_count("annotation.t_count"));
      a.noise_draws = get_count("annotation.noise_draws");
      a.features = feature_map_from_string(get("annotation.features"));
      a.holdout = get_double("annotation.holdout");
      a.iterations = get_count("annotation.iterations");
      a.learning_rate = get_double("annotation.learning_rate");
      a.l2 = get_double("annotation.l2");
      a.validate();
      return a;
    });
  }

  TrainConfig train() const {
    return detail::config_section("train", [&] {
      TrainConfig t;
      t.steps = get_count("train.steps");
      t.batch = get_count("train.batch");
      t.optimizer = optimizer_from_string(get("train.optimizer"));
      t.learning_rate = get_double("train.learning_rate");
      t.clip_norm = get_double("train.clip_norm");
      t.ema_halflife = get_double("train.ema_halflife");
      t.weight_cap = get_double("train.weight_cap");
      t.anchor_margin = get_double("train.anchor_margin");
      t.time_sampling = time_sampling_from_string(get("train.time_sampling"));
      return t;
    });
  }

  LoopConfig loop() const {
    return detail::config_section("loop", [&] {
      LoopConfig l;
      l.loops = static_cast<int>(get_int("loop.L"));
      l.rho = parse_rho(get("loop.rho"));
      l.restore_source = restore_source_from_string(get("loop.restore_source"));
      l.k = get_count("loop.k");
      const std::string dup = get("loop.clean_duplication");
      if (dup != "auto") l.clean_duplication = get_bool("loop.clean_duplication");
      l.later_steps_fraction = get_double("loop.later_steps_fraction");
      l.model.hidden.clear();
      for (auto w : split(get("model.hidden"), ',')) l.model.hidden.push_back(static_cast<int>(parse_int(w, origin("model.hidden"))));
      l.model.output = output_from_string(get("model.output"));
      l.model.sigma_data = get_double("model.sigma_data");
      l.train = train();
      l.sampler = sampler();
      l.seed = seed();
      l.validate();
      return l;
    });
  }

  BenchmarkConfig benchmark() const {
    return detail::config_section("benchmark", [&] {
      BenchmarkConfig b;
      b.components = static_cast<int>(get_int("benchmark.components"));
      b.radius = get_double("benchmark.radius");
      b.component_std = get_double("benchmark.component_std");
      b.samples = get_count("benchmark.samples");
      b.clean_fraction = get_double("benchmark.clean_fraction");
      b.contraction = get_double("benchmark.contraction");
      b.jitter = get_double("benchmark.jitter");
      b.validate();
      return b;
    });
  }

  // Everything the reference study and `loop run` need.
  SuiteConfig suite() const {
    return detail::config_section("suite", [&] {
      SuiteConfig s;
      s.benchmark = benchmark();
      s.annotation = annotation();
      s.loop = loop();
      s.rhos.clear();
      for (auto r : split(get("suite.rhos"), ',')) s.rhos.push_back(parse_rho(trim(r)));
      s.chain_loops = static_cast<int>(get_int("suite.chain_loops"));
      s.madness_loops = static_cast<int>(get_int("suite.madness_loops"));
      s.base_rho = parse_rho(get("suite.base_rho"));
      s.k_variant = get_count("suite.k_variant");
      s.eval_truth = get_count("eval.truth");
      s.eval_generated = get_count("eval.generated");
      s.eval_projections = get_count("eval.projections");
      s.generation_kind = sampler_kind_from_string(get("eval.generation_kind"));
      s.generation_nfe = static_cast<int>(get_int("eval.generation_nfe"));
      s.eval_conditional = get_count("eval.conditional");
      s.eval_conditional_mc = get_count("eval.conditional_mc");
      s.eval_buckets = get_count("eval.buckets");
      s.eval_bucket_draws = get_count("eval.bucket_draws");
      s.eval_profile = get_count("eval.profile");
      const Schedule sch = schedule();
      s.sigma_min = sch.sigma_min();
      s.sigma_max = sch.sigma_max();
      const std::string truth = get("eval.truth_density");
      if (!truth.empty()) s.truth_density = density(truth);
      return s;
    });
  }

  std::vector<std::string> density_names() const {
    std::vector<std::string> names;
    for (const auto& [k, v] : values_)
      if (is_density_key(k)) {
        const std::string name = k.substr(8, k.rfind('.') - 8);
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
      }
    return names;
  }

  // weights: w1,w2,...  means: m1;m2;... with each m a comma list  variances: v1,v2,...
  GaussianMixture density(const std::string& name) const {
    const std::string base = "density." + name + ".";
    for (const char* part : {"weights", "means", "variances"})
      if (!values_.count(base + part)) throw FormatError("density '" + name + "' is missing '" + base + part + "'");
    const std::string wk = base + "weights", mk = base + "means", vk = base + "variances";
    std::vector<double> w, v;
    std::vector<Point> means;
    for (auto s : split(get(wk), ',')) w.push_back(parse_double(s, origin(wk)));
    for (auto s : split(get(vk), ',')) v.push_back(parse_double(s, origin(vk)));
    for (auto m : split(get(mk), ';')) {
      const auto coords = split(m, ',');
      Point p(static_cast<Eigen::Index>(coords.size()));
      for (std::size_t j = 0; j < coords.size(); ++j) p[static_cast<Eigen::Index>(j)] = parse_double(coords[j], origin(mk));
      means.push_back(p);
    }
    try {
      return GaussianMixture(std::move(w), std::move(means), std::move(v));
    } catch (const std::exception& e) {
      throw FormatError("density '" + name + "': " + e.what());
    }
  }

  // Every key with its effective value, defaults included.
  std::string dump() const {
    std::ostringstream os;
    for (const auto& k : config_keys()) os << k.key << " = " << get(k.key) << '\n';
    for (const auto& [k, v] : values_)
      if (is_density_key(k)) os << k << " = " << v << '\n';
    return os.str();
  }

  void validate() const {
    schedule();
    suite();
    get_bool("report.timing");
    get_count("suite.seeds");
    for (const auto& n : density_names()) density(n);
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> where_;

  static bool is_density_key(const std::string& key) {
    if (key.rfind("density.", 0) != 0) return false;
    const auto dot = key.rfind('.');
    if (dot <= 8) return false;
    const std::string part = key.substr(dot + 1);
    return part == "weights" || part == "means" || part == "variances";
  }

  std::string origin(const std::string& key) const {
    if (auto it = where_.find(key); it != where_.end()) return it->second + " (" + key + ")";
    return "default for " + key;
  }

};

}  // namespace dataloops
