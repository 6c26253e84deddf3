#pragma once

// Isotropic Gaussian mixtures on R^d with closed-form noising, score,
// posterior mean and sampling.  These are the analytic ground truths for
// the whole library: p_0 / q_0 of the theory bench, targets of the toy
// benchmark, and oracles for the learned denoisers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <vector>

#include "dataloops/random.hpp"
#include "dataloops/schedule.hpp"
#include "dataloops/types.hpp"

namespace dataloops {

class GaussianMixture {
 public:
  GaussianMixture() = default;

  GaussianMixture(std::vector<double> weights, std::vector<Point> means, std::vector<double> variances)
      : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
    validate();
  }

  static GaussianMixture gaussian(const Point& mean, double variance) {
    return GaussianMixture({1.0}, {mean}, {variance});
  }

  static GaussianMixture point_mass(const Point& at) { return gaussian(at, 0.0); }

  // Empirical distribution: uniform weights on point masses at the rows.
  static GaussianMixture empirical(const SampleMatrix& rows) {
    const auto n = static_cast<std::size_t>(rows.rows());
    std::vector<Point> means;
    means.reserve(n);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) means.emplace_back(rows.row(i).transpose());
    return GaussianMixture(std::vector<double>(n, 1.0 / static_cast<double>(n)), std::move(means),
                           std::vector<double>(n, 0.0));
  }

  Eigen::Index dim() const { return means_.front().size(); }
  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Point>& means() const { return means_; }
  const std::vector<double>& variances() const { return variances_; }

  double max_variance() const { return *std::max_element(variances_.begin(), variances_.end()); }

  // p_0 convolved with N(0, sigma^2 I).
  GaussianMixture noised(double sigma) const {
    check_sigma(sigma);
    GaussianMixture out = *this;
    for (double& v : out.variances_) v += sigma * sigma;
    return out;
  }

  GaussianMixture noised(const Schedule& schedule, double t) const { return noised(schedule.sigma(t)); }

  double log_density(const Point& x, double sigma = 0.0) const {
    check_sigma(sigma);
    check_point(x);
    require_density(sigma);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(size());
    for (std::size_t k = 0; k < size(); ++k) {
      terms[k] = log_component(k, x, sigma);
      best = std::max(best, terms[k]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
  }

  double density(const Point& x, double sigma = 0.0) const { return std::exp(log_density(x, sigma)); }

  // grad_x log p_sigma(x).
  Point score(const Point& x, double sigma = 0.0) const {
    check_sigma(sigma);
    check_point(x);
    require_density(sigma);
    const std::vector<double> r = responsibilities(x, sigma);
    Point g = Point::Zero(x.size());
    for (std::size_t k = 0; k < size(); ++k) {
      if (r[k] == 0.0) continue;
      g -= r[k] * (x - means_[k]) / (variances_[k] + sigma * sigma);
    }
    return g;
  }

  // E[X_0 | X_0 + sigma Z = x], computed per component and averaged with the
  // posterior component probabilities.  Does not go through the score.
  Point posterior_mean(const Point& x, double sigma = 0.0) const {
    check_sigma(sigma);
    check_point(x);
    if (size() == 1) return component_posterior_mean(0, x, sigma);
    require_density(sigma);
    const std::vector<double> r = responsibilities(x, sigma);
    Point m = Point::Zero(x.size());
    for (std::size_t k = 0; k < size(); ++k) {
      if (r[k] != 0.0) m += r[k] * component_posterior_mean(k, x, sigma);
    }
    return m;
  }

  // Posterior component probabilities at noise level sigma.
  std::vector<double> responsibilities(const Point& x, double sigma) const {
    std::vector<double> r(size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < size(); ++k) {
      r[k] = log_component(k, x, sigma);
      best = std::max(best, r[k]);
    }
    double total = 0.0;
    for (double& v : r) {
      v = std::exp(v - best);
      total += v;
    }
    for (double& v : r) v /= total;
    return r;
  }

  SampleMatrix sample(std::size_t n, Rng& rng) const {
    if (n == 0) throw DomainError("sample count must be >= 1");
    std::vector<double> cumulative(size());
    std::partial_sum(weights_.begin(), weights_.end(), cumulative.begin());
    SampleMatrix out(static_cast<Eigen::Index>(n), dim());
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.uniform() * cumulative.back();
      std::size_t k = static_cast<std::size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      k = std::min(k, size() - 1);
      const double sd = std::sqrt(variances_[k]);
      for (Eigen::Index j = 0; j < dim(); ++j) {
        const double z = rng.normal();
        out(static_cast<Eigen::Index>(i), j) = means_[k][j] + sd * z;
      }
    }
    return out;
  }

  // Lipschitz constant of a 1-D density, approximated by the max of |p'| on a
  // dense grid spanning 8 standard deviations of the widest component.
  double lipschitz_1d(std::size_t points = 20001) const {
    if (dim() != 1) throw DomainError("lipschitz_1d requires a 1-D mixture");
    for (double v : variances_)
      if (!(v > 0.0)) throw DomainError("lipschitz_1d requires positive component variances");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    const double reach = 8.0 * std::sqrt(max_variance());
    for (const Point& m : means_) {
      lo = std::min(lo, m[0] - reach);
      hi = std::max(hi, m[0] + reach);
    }
    double best = 0.0;
    for (std::size_t i = 0; i < points; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
      double deriv = 0.0;
      for (std::size_t k = 0; k < size(); ++k) {
        const double v = variances_[k];
        const double d = x - means_[k][0];
        deriv -= weights_[k] * std::exp(-0.5 * d * d / v) / std::sqrt(2.0 * std::numbers::pi * v) * d / v;
      }
      best = std::max(best, std::abs(deriv));
    }
    return best;
  }

 private:
  void validate() const {
    if (weights_.empty()) throw DomainError("mixture needs at least one component");
    if (weights_.size() != means_.size() || weights_.size() != variances_.size())
      throw DomainError("mixture weights, means and variances must have equal length");
    const Eigen::Index d = means_.front().size();
    if (d < 1) throw DomainError("mixture dimension must be >= 1");
    double total = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      if (!(weights_[k] >= 0.0)) throw DomainError("mixture weights must be nonnegative");
      if (!(variances_[k] >= 0.0) || !std::isfinite(variances_[k]))
        throw DomainError("mixture variances must be finite and >= 0");
      if (means_[k].size() != d) throw DomainError("mixture means must share one dimension");
      if (!means_[k].allFinite()) throw DomainError("mixture means must be finite");
      total += weights_[k];
    }
    if (std::abs(total - 1.0) > 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << "mixture weights must sum to 1 (got " << total << ")";
      throw DomainError(os.str());
    }
  }

  static void check_sigma(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("noise level must be finite and >= 0");
  }

  void check_point(const Point& x) const {
    if (x.size() != dim()) throw DomainError("point dimension does not match the mixture");
  }

  void require_density(double sigma) const {
    for (std::size_t k = 0; k < size(); ++k) {
      if (weights_[k] > 0.0 && variances_[k] + sigma * sigma == 0.0)
        throw DomainError("mixture has a point-mass component at this noise level; density undefined");
    }
  }

  double log_component(std::size_t k, const Point& x, double sigma) const {
    if (weights_[k] == 0.0) return -std::numeric_limits<double>::infinity();
    const double s2 = variances_[k] + sigma * sigma;
    const double d = static_cast<double>(x.size());
    return std::log(weights_[k]) - 0.5 * (x - means_[k]).squaredNorm() / s2 -
           0.5 * d * std::log(2.0 * std::numbers::pi * s2);
  }

  Point component_posterior_mean(std::size_t k, const Point& x, double sigma) const {
    const double v = variances_[k];
    const double s2 = v + sigma * sigma;
    if (v == 0.0 || s2 == 0.0) return means_[k];
    return means_[k] + (v / s2) * (x - means_[k]);
  }

  std::vector<double> weights_;
  std::vector<Point> means_;
  std::vector<double> variances_;
};

}  // namespace dataloops
