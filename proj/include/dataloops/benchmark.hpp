#pragma once

// The reference toy problem: an eight-Gaussian ring, a small clean subset,
// and a corrupted majority whose points are pulled halfway to the origin.

#include <cmath>
#include <numbers>

#include "dataloops/annotation.hpp"
#include "dataloops/densities.hpp"

namespace dataloops {

struct BenchmarkConfig {
  int components = 8;
  double radius = 2.0;
  double component_std = 0.1;
  std::size_t samples = 2000;
  double clean_fraction = 0.1;
  double contraction = 0.5;  // corrupted point = contraction * x + jitter * N(0, I)
  double jitter = 0.05;

  void validate() const {
    if (components < 1) throw DomainError("benchmark needs at least one component");
    if (!(radius >= 0.0) || !(component_std > 0.0)) throw DomainError("benchmark radius/std out of range");
    if (samples < 2) throw DomainError("benchmark needs at least 2 samples");
    if (!(clean_fraction > 0.0 && clean_fraction < 1.0)) throw DomainError("clean fraction must lie in (0, 1)");
    if (!(jitter >= 0.0)) throw DomainError("jitter must be >= 0");
  }
};

inline GaussianMixture ring_mixture(int components, double radius, double component_std) {
  std::vector<double> w(static_cast<std::size_t>(components), 1.0 / components);
  std::vector<Point> means;
  for (int k = 0; k < components; ++k) {
    const double a = 2.0 * std::numbers::pi * k / components;
    Point m(2);
    m << radius * std::cos(a), radius * std::sin(a);
    means.push_back(m);
  }
  return GaussianMixture(std::move(w), std::move(means),
                         std::vector<double>(static_cast<std::size_t>(components), component_std * component_std));
}

inline GaussianMixture ring_mixture(const BenchmarkConfig& cfg) {
  return ring_mixture(cfg.components, cfg.radius, cfg.component_std);
}

struct BenchmarkData {
  SampleMatrix clean;
  SampleMatrix corrupt;
  SampleMatrix corrupt_refs;  // the uncorrupted ancestors of `corrupt`
};

inline BenchmarkData make_benchmark(const BenchmarkConfig& cfg, Rng& rng) {
  cfg.validate();
  const GaussianMixture truth = ring_mixture(cfg);
  const SampleMatrix x = truth.sample(cfg.samples, rng);
  const auto n_clean = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::llround(cfg.clean_fraction * static_cast<double>(cfg.samples))));
  BenchmarkData b;
  b.clean = x.topRows(n_clean);
  b.corrupt_refs = x.bottomRows(x.rows() - n_clean);
  b.corrupt.resize(b.corrupt_refs.rows(), 2);
  for (Eigen::Index i = 0; i < b.corrupt.rows(); ++i)
    b.corrupt.row(i) = cfg.contraction * b.corrupt_refs.row(i) + cfg.jitter * rng.normal_vector(2).transpose();
  return b;
}

struct AnnotatedBenchmark {
  NoisyDataset dataset;
  TimeClassifier classifier;
  std::vector<Annotation> annotations;  // one per corrupted sample
};

// Classifier fit, annotation (fixed or per sample) and noising, all from one rng.
inline AnnotatedBenchmark annotate_benchmark(const BenchmarkData& b, const Schedule& schedule,
                                             const AnnotationConfig& cfg, Rng& rng) {
  AnnotatedBenchmark out;
  out.classifier = train_time_classifier(b.clean, b.corrupt, schedule, cfg, rng);
  std::vector<double> times;
  if (cfg.method == AnnotationMethod::fixed_sigma) {
    const Annotation a = annotate_fixed(out.classifier, cfg, schedule);
    out.annotations.assign(static_cast<std::size_t>(b.corrupt.rows()), a);
  } else {
    for (Eigen::Index i = 0; i < b.corrupt.rows(); ++i)
      out.annotations.push_back(annotate_per_sample(out.classifier, b.corrupt.row(i).transpose(), schedule, cfg, rng));
  }
  for (const auto& a : out.annotations) times.push_back(a.t);
  out.dataset = build_noisy_dataset(b.clean, b.corrupt, times, schedule, rng, b.corrupt_refs);
  return out;
}

}  // namespace dataloops
