#pragma once

// Closed-form denoiser built directly from an anchored dataset.
//
// At time t every sample with t_i < t contributes a Gaussian kernel of
// variance s_i^2 = sigma^2(t) - sigma^2(t_i), giving the anchored density
//   p_hat_t(x) = (1/M) sum_i N(x; x_i, s_i^2 I).
// The denoiser is Tweedie applied to it, h = x + sigma^2(t) grad log p_hat_t,
// which expands to a responsibility-weighted sum of per-sample ambient
// corrections (x_i - (1 - alpha_i) x) / alpha_i with alpha_i = s_i^2 / sigma^2.

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "dataloops/dataset.hpp"
#include "dataloops/schedule.hpp"

namespace dataloops {

class EmpiricalDenoiser {
 public:
  EmpiricalDenoiser(NoisyDataset data, Schedule schedule) : data_(std::move(data)), schedule_(schedule) {
    data_.validate(schedule_);
  }

  Eigen::Index dim() const { return data_.dim; }
  const Schedule& schedule() const { return schedule_; }
  const NoisyDataset& data() const { return data_; }

  SampleMatrix denoise(const SampleMatrix& x, const Eigen::VectorXd& t) const {
    SampleMatrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = denoise_point(x.row(i).transpose(), t[i]).transpose();
    return out;
  }

  Point denoise_point(const Point& x, double t) const {
    const double s2 = square(schedule_.sigma(t));
    std::vector<double> logw(data_.size(), -std::numeric_limits<double>::infinity());
    double best = -std::numeric_limits<double>::infinity();
    const double d = static_cast<double>(data_.dim);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const auto& s = data_.samples[i];
      if (!(s.t_anchor < t)) continue;
      const double v = s2 - square(schedule_.sigma(s.t_anchor));
      logw[i] = -0.5 * (x - s.x).squaredNorm() / v - 0.5 * d * std::log(2.0 * std::numbers::pi * v);
      best = std::max(best, logw[i]);
    }
    if (!std::isfinite(best)) throw DomainError("no dataset sample is usable at time " + std::to_string(t));
    double total = 0.0;
    Point acc = Point::Zero(x.size());
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(logw[i])) continue;
      const auto& s = data_.samples[i];
      const double w = std::exp(logw[i] - best);
      const double alpha = schedule_.alpha(t, s.t_anchor);
      acc += w * (s.x - x) / alpha;
      total += w;
    }
    return x + acc / total;
  }

  // log p_hat_t(x), exposed for finite-difference checks of the score.
  double log_density(const Point& x, double t) const {
    const double s2 = square(schedule_.sigma(t));
    const double d = static_cast<double>(data_.dim);
    std::vector<double> terms;
    for (const auto& s : data_.samples) {
      if (!(s.t_anchor < t)) continue;
      const double v = s2 - square(schedule_.sigma(s.t_anchor));
      terms.push_back(-0.5 * (x - s.x).squaredNorm() / v - 0.5 * d * std::log(2.0 * std::numbers::pi * v));
    }
    if (terms.empty()) throw DomainError("no dataset sample is usable at time " + std::to_string(t));
    const double best = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double v : terms) acc += std::exp(v - best);
    return best + std::log(acc / static_cast<double>(terms.size()));
  }

 private:
  static double square(double v) { return v * v; }

  NoisyDataset data_;
  Schedule schedule_;
};

}  // namespace dataloops
