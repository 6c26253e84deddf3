#pragma once

// Turning a clean collection and a corrupted collection into an anchored
// dataset.  A logistic classifier is fitted at each candidate time to tell
// noised clean points from noised corrupted points; a corrupted point is
// trusted at the first time where the classifier can no longer tell.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dataloops/dataset.hpp"
#include "dataloops/random.hpp"
#include "dataloops/schedule.hpp"

namespace dataloops {

enum class AnnotationMethod { fixed_sigma, per_sample };
enum class FeatureMap { linear, quadratic };

inline std::string_view to_string(AnnotationMethod m) { return m == AnnotationMethod::fixed_sigma ? "fixed_sigma" : "per_sample"; }
inline std::string_view to_string(FeatureMap f) { return f == FeatureMap::linear ? "linear" : "quadratic"; }

inline AnnotationMethod annotation_method_from_string(std::string_view s) {
  if (s == "fixed_sigma" || s == "fixed") return AnnotationMethod::fixed_sigma;
  if (s == "per_sample" || s == "per-sample") return AnnotationMethod::per_sample;
  throw FormatError("unknown annotation method '" + std::string(s) + "' (expected: fixed_sigma, per_sample)");
}

inline FeatureMap feature_map_from_string(std::string_view s) {
  if (s == "linear") return FeatureMap::linear;
  if (s == "quadratic") return FeatureMap::quadratic;
  throw FormatError("unknown feature map '" + std::string(s) + "' (expected: linear, quadratic)");
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (n == 0 || !(lo > 0.0) || !(hi >= lo)) throw DomainError("log_spaced needs n >= 1 and 0 < lo <= hi");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? lo : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) / static_cast<double>(n - 1));
  v.back() = hi;
  return v;
}

struct AnnotationConfig {
  double epsilon = 0.05;
  std::vector<double> t_grid = log_spaced(0.05, 80.0, 32);
  AnnotationMethod method = AnnotationMethod::fixed_sigma;
  std::size_t noise_draws = 16;     // noised copies per point, for fitting and for per-sample queries
  FeatureMap features = FeatureMap::linear;
  double holdout = 0.2;             // fraction of source points kept for validation
  std::size_t iterations = 300;     // full-batch gradient steps per time
  double learning_rate = 0.5;
  double l2 = 1e-4;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw DomainError("annotation epsilon must lie in (0, 0.5)");
    if (t_grid.empty()) throw DomainError("annotation time grid is empty");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
      if (!(t_grid[i] > t_grid[i - 1])) throw DomainError("annotation time grid must be increasing");
    if (noise_draws == 0) throw DomainError("annotation needs noise_draws >= 1");
    if (!(holdout > 0.0 && holdout < 1.0)) throw DomainError("holdout fraction must lie in (0, 1)");
  }
};

inline Eigen::VectorXd feature_vector(const Point& x, FeatureMap map) {
  if (map == FeatureMap::linear) return x;
  const Eigen::Index d = x.size();
  Eigen::VectorXd f(d + d * (d + 1) / 2);
  f.head(d) = x;
  Eigen::Index k = d;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) f[k++] = x[i] * x[j];
  return f;
}

struct LogisticModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;

  // P(clean | x).
  double predict(const Point& x, FeatureMap map) const {
    const Eigen::VectorXd f = ((feature_vector(x, map) - feature_mean).array() / feature_scale.array()).matrix();
    const double z = weights.dot(f) + bias;
    return 1.0 / (1.0 + std::exp(-z));
  }
};

struct TimeClassifier {
  Eigen::Index dim = 0;
  FeatureMap features = FeatureMap::linear;
  std::vector<double> t_grid;
  std::vector<LogisticModel> models;
  std::vector<double> accuracy;     // class-balanced held-out accuracy
  std::vector<double> accuracy_se;

  double predict(const Point& x, std::size_t grid_index) const { return models.at(grid_index).predict(x, features); }
};

namespace detail {

// Class-weighted logistic regression by full-batch gradient descent on
// standardised features.
inline LogisticModel fit_logistic(const Eigen::MatrixXd& f, const Eigen::VectorXd& y, const AnnotationConfig& cfg) {
  const Eigen::Index n = f.rows(), p = f.cols();
  LogisticModel m;
  m.feature_mean = f.colwise().mean().transpose();
  m.feature_scale = ((f.rowwise() - m.feature_mean.transpose()).array().square().colwise().mean().sqrt()).transpose();
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(m.feature_scale[j] > 1e-12)) m.feature_scale[j] = 1.0;
  const Eigen::MatrixXd z =
      ((f.rowwise() - m.feature_mean.transpose()).array().rowwise() / m.feature_scale.transpose().array()).matrix();
  const double pos = y.sum(), neg = static_cast<double>(n) - pos;
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = y[i] > 0.5 ? 0.5 / pos : 0.5 / neg;
  m.weights = Eigen::VectorXd::Zero(p);
  m.bias = 0.0;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Eigen::ArrayXd logits = (z * m.weights).array() + m.bias;
    const Eigen::ArrayXd prob = 1.0 / (1.0 + (-logits).exp());
    const Eigen::VectorXd r = (w.array() * (prob - y.array())).matrix();
    m.weights -= cfg.learning_rate * (z.transpose() * r + cfg.l2 * m.weights);
    m.bias -= cfg.learning_rate * r.sum();
  }
  return m;
}

}  // namespace detail

// Fits one classifier per grid time: clean points (label 1) vs corrupted
// points (label 0), each noised to sigma(t).  The split into fitting and
// validation points is made once, on the source points.
inline TimeClassifier train_time_classifier(const SampleMatrix& clean, const SampleMatrix& corrupt,
                                            const Schedule& schedule, const AnnotationConfig& cfg, Rng& rng) {
  cfg.validate();
  if (clean.rows() < 2 || corrupt.rows() < 2) throw DomainError("classifier needs at least 2 points per class");
  if (clean.cols() != corrupt.cols()) throw DomainError("clean and corrupt samples differ in dimension");
  const Eigen::Index d = clean.cols();
  for (double t : cfg.t_grid) schedule.sigma(t);

  auto split = [&](Eigen::Index n) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    const auto hold = std::clamp<std::size_t>(static_cast<std::size_t>(std::round(cfg.holdout * static_cast<double>(n))), 1,
                                              idx.size() - 1);
    return std::pair{std::vector<std::size_t>(idx.begin() + static_cast<long>(hold), idx.end()),
                     std::vector<std::size_t>(idx.begin(), idx.begin() + static_cast<long>(hold))};
  };
  const auto [clean_fit, clean_val] = split(clean.rows());
  const auto [corrupt_fit, corrupt_val] = split(corrupt.rows());

  TimeClassifier tc;
  tc.dim = d;
  tc.features = cfg.features;
  tc.t_grid = cfg.t_grid;
  const Eigen::Index p = feature_vector(Point::Zero(d), cfg.features).size();

  auto noised_features = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, double sigma,
                             Eigen::MatrixXd& f, Eigen::VectorXd& y) {
    const auto rows = static_cast<Eigen::Index>((a.size() + b.size()) * cfg.noise_draws);
    f.resize(rows, p);
    y.resize(rows);
    Eigen::Index r = 0;
    for (int cls = 1; cls >= 0; --cls) {
      const auto& src = cls == 1 ? clean : corrupt;
      for (std::size_t i : cls == 1 ? a : b) {
        for (std::size_t k = 0; k < cfg.noise_draws; ++k, ++r) {
          const Point x = src.row(static_cast<Eigen::Index>(i)).transpose() + sigma * rng.normal_vector(d);
          f.row(r) = feature_vector(x, cfg.features).transpose();
          y[r] = cls;
        }
      }
    }
  };

  for (double t : cfg.t_grid) {
    const double sigma = schedule.sigma(t);
    Eigen::MatrixXd f, fv;
    Eigen::VectorXd y, yv;
    noised_features(clean_fit, corrupt_fit, sigma, f, y);
    noised_features(clean_val, corrupt_val, sigma, fv, yv);
    LogisticModel m = detail::fit_logistic(f, y, cfg);
    double hit1 = 0, n1 = 0, hit0 = 0, n0 = 0;
    for (Eigen::Index r = 0; r < fv.rows(); ++r) {
      const Eigen::VectorXd z = ((fv.row(r).transpose() - m.feature_mean).array() / m.feature_scale.array()).matrix();
      const bool says_clean = m.weights.dot(z) + m.bias >= 0.0;
      if (yv[r] > 0.5) {
        n1 += 1;
        hit1 += says_clean;
      } else {
        n0 += 1;
        hit0 += !says_clean;
      }
    }
    const double a1 = hit1 / n1, a0 = hit0 / n0;
    // Validation points are counted per source point: the noise draws of one
    // point are not independent evidence.
    const double s1 = static_cast<double>(clean_val.size()), s0 = static_cast<double>(corrupt_val.size());
    tc.models.push_back(std::move(m));
    tc.accuracy.push_back(0.5 * (a1 + a0));
    tc.accuracy_se.push_back(0.5 * std::sqrt(a1 * (1 - a1) / s1 + a0 * (1 - a0) / s0));
  }
  return tc;
}

struct Annotation {
  double t = 0.0;
  bool fell_back_to_horizon = false;  // no grid time qualified
};

// Smallest grid time whose validation accuracy is <= 1/2 + epsilon.
inline Annotation annotate_fixed(const TimeClassifier& tc, const AnnotationConfig& cfg, const Schedule& schedule) {
  for (std::size_t i = 0; i < tc.t_grid.size(); ++i)
    if (tc.accuracy[i] <= 0.5 + cfg.epsilon) return {tc.t_grid[i], false};
  return {schedule.horizon(), true};
}

// Smallest grid time at which the noised point, averaged over noise draws,
// looks clean with probability >= 1/2 - epsilon.
inline Annotation annotate_per_sample(const TimeClassifier& tc, const Point& y, const Schedule& schedule,
                                      const AnnotationConfig& cfg, Rng& rng) {
  if (y.size() != tc.dim) throw DomainError("sample dimension does not match the classifier");
  for (std::size_t i = 0; i < tc.t_grid.size(); ++i) {
    const double sigma = schedule.sigma(tc.t_grid[i]);
    double mean = 0.0;
    for (std::size_t k = 0; k < cfg.noise_draws; ++k) mean += tc.predict(y + sigma * rng.normal_vector(tc.dim), i);
    mean /= static_cast<double>(cfg.noise_draws);
    if (mean >= 0.5 - cfg.epsilon) return {tc.t_grid[i], false};
  }
  return {schedule.horizon(), true};
}

// Clean points enter at anchor 0 (clean_ref = themselves); corrupted point i
// is noised to anchor times[i].  corrupt_refs, when given, are the
// uncorrupted ancestors and become clean_ref.
inline NoisyDataset build_noisy_dataset(const SampleMatrix& clean, const SampleMatrix& corrupt,
                                        const std::vector<double>& times, const Schedule& schedule, Rng& rng,
                                        const std::optional<SampleMatrix>& corrupt_refs = std::nullopt,
                                        std::string provenance = "loop 0") {
  if (static_cast<Eigen::Index>(times.size()) != corrupt.rows())
    throw DomainError("need one annotation time per corrupted sample (got " + std::to_string(times.size()) + " for " +
                      std::to_string(corrupt.rows()) + ")");
  if (corrupt_refs && corrupt_refs->rows() != corrupt.rows()) throw DomainError("one clean reference per corrupted sample");
  NoisyDataset d;
  d.dim = clean.rows() ? clean.cols() : corrupt.cols();
  d.provenance = std::move(provenance);
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    const Point x = clean.row(i).transpose();
    d.samples.push_back({x, 0.0, x});
  }
  for (Eigen::Index i = 0; i < corrupt.rows(); ++i) {
    const double t = times[static_cast<std::size_t>(i)];
    NoisySample s{schedule.add_noise(corrupt.row(i).transpose(), 0.0, t, rng), t, std::nullopt};
    if (corrupt_refs) s.clean_ref = corrupt_refs->row(i).transpose();
    d.samples.push_back(std::move(s));
  }
  d.validate(schedule);
  return d;
}

}  // namespace dataloops
