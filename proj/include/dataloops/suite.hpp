#pragma once

// One seed of the reference-benchmark study: a shared loop 0, then loop
// chains for several trust rates, a k=4 variant, and the rho=inf probe.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "dataloops/benchmark.hpp"
#include "dataloops/dataloop.hpp"

namespace dataloops {

struct SuiteConfig {
  BenchmarkConfig benchmark;
  AnnotationConfig annotation = [] {
    AnnotationConfig a;
    a.features = FeatureMap::quadratic;
    return a;
  }();
  LoopConfig loop = [] {
    LoopConfig c;
    c.train.steps = 20000;
    c.train.optimizer = Optimizer::adam;
    c.train.learning_rate = 1e-3;
    c.train.ema_halflife = 1000;
    c.train.time_sampling = TimeSampling::log_uniform;
    return c;
  }();
  std::vector<double> rhos{std::sqrt(2.0), 2.0, 4.0, std::numeric_limits<double>::infinity()};
  int chain_loops = 3;       // loops per finite rho
  int madness_loops = 4;     // loops for rho = inf
  double base_rho = 2.0;     // rho of the k comparison and the loss profile
  std::size_t k_variant = 4;
  std::size_t eval_truth = 10000;
  std::size_t eval_generated = 10000;
  std::size_t eval_profile = 500;
  std::size_t eval_conditional = 200;
  std::size_t eval_conditional_mc = 4;
  std::size_t eval_projections = 256;
  std::size_t eval_buckets = 8;
  std::size_t eval_bucket_draws = 4;
  SamplerKind generation_kind = SamplerKind::ode_heun;
  int generation_nfe = 35;
  double sigma_min = 0.002, sigma_max = 80.0;
  std::optional<GaussianMixture> truth_density;  // unset: the benchmark ring
};

struct SuiteResult {
  std::uint64_t seed = 0;
  double anchor = 0.0;                      // fixed annotation time (mean anchor for per-sample)
  LoopReport loop0;
  std::map<double, std::vector<LoopReport>> chains;  // rho -> reports for loops 1..
  LoopReport k_variant;                     // loop 1 at base_rho with k = k_variant
  double seconds = 0.0;
};

inline EvalSpec suite_eval_spec(const SuiteConfig& cfg, const NoisyDataset& d0, std::uint64_t seed) {
  EvalSpec ev;
  ev.seed = seed;
  Rng held = Rng::derive(seed, "held-out");
  const GaussianMixture truth = cfg.truth_density ? *cfg.truth_density : ring_mixture(cfg.benchmark);
  if (truth.dim() != d0.dim) throw DomainError("truth density dimension does not match the dataset");
  ev.truth = truth.sample(cfg.eval_truth, held);
  ev.profile_clean = truth.sample(cfg.eval_profile, held);
  ev.generated = cfg.eval_generated;
  ev.projections = cfg.eval_projections;
  ev.generation.kind = cfg.generation_kind;
  ev.generation.nfe = cfg.generation_nfe;
  ev.conditional_mc = cfg.eval_conditional_mc;
  ev.conditional_sampler = cfg.loop.sampler;
  ev.buckets = cfg.eval_buckets;
  ev.bucket_draws = cfg.eval_bucket_draws;
  ev.conditional.dim = d0.dim;
  for (const auto& s : d0.samples)
    if (!s.is_clean() && s.clean_ref && ev.conditional.size() < cfg.eval_conditional) ev.conditional.samples.push_back(s);
  return ev;
}

struct SuiteData {
  NoisyDataset d0;
  double anchor = 0.0;
};

inline SuiteData suite_dataset(const SuiteConfig& cfg, const Schedule& schedule, std::uint64_t seed) {
  Rng data_rng = Rng::derive(seed, "benchmark");
  const BenchmarkData b = make_benchmark(cfg.benchmark, data_rng);
  Rng ann_rng = Rng::derive(seed, "annotate");
  const AnnotatedBenchmark ab = annotate_benchmark(b, schedule, cfg.annotation, ann_rng);
  double mean = 0.0;
  for (const auto& a : ab.annotations) mean += a.t;
  return {ab.dataset, ab.annotations.empty() ? 0.0 : mean / static_cast<double>(ab.annotations.size())};
}

inline SuiteResult run_suite_seed(const SuiteConfig& cfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const Schedule schedule(cfg.sigma_min, cfg.sigma_max);
  const SuiteData data = suite_dataset(cfg, schedule, seed);
  const EvalSpec ev = suite_eval_spec(cfg, data.d0, seed);
  LoopConfig base = cfg.loop;
  base.seed = seed;
  SuiteResult out;
  out.seed = seed;
  out.anchor = data.anchor;
  const LoopState s0 = first_loop(base, data.d0, schedule, &ev);
  out.loop0 = s0.report;
  for (double rho : cfg.rhos) {
    LoopConfig c = base;
    c.rho = rho;
    const int loops = std::isinf(rho) ? cfg.madness_loops : cfg.chain_loops;
    LoopState st = s0;
    for (int l = 1; l <= loops; ++l) {
      st = next_loop(st, data.d0, c, &ev);
      out.chains[rho].push_back(st.report);
    }
  }
  LoopConfig kc = base;
  kc.rho = cfg.base_rho;
  kc.k = cfg.k_variant;
  out.k_variant = next_loop(s0, data.d0, kc, &ev).report;
  out.seconds = seconds_since(t0);
  return out;
}

}  // namespace dataloops
