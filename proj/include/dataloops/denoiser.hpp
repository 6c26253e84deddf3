#pragma once

// The denoiser contract h(x, t) ~ E[X_0 | X_t = x] and the ambient loss that
// trains it from samples anchored at t_anchor > 0.

#include <concepts>

#include "dataloops/densities.hpp"
#include "dataloops/schedule.hpp"
#include "dataloops/types.hpp"

namespace dataloops {

// Batched evaluation: row i of x is evaluated at diffusion time t[i].
template <class D>
concept Denoiser = requires(const D& d, const SampleMatrix& x, const Eigen::VectorXd& t) {
  { d.denoise(x, t) } -> std::convertible_to<SampleMatrix>;
  { d.dim() } -> std::convertible_to<Eigen::Index>;
  { d.schedule() } -> std::convertible_to<Schedule>;
};

template <Denoiser D>
Point denoise_one(const D& d, const Point& x, double t) {
  SampleMatrix row = x.transpose();
  Eigen::VectorXd ts = Eigen::VectorXd::Constant(1, t);
  return d.denoise(row, ts).row(0).transpose();
}

// Exact posterior mean of a known mixture; the reference denoiser.
class AnalyticDenoiser {
 public:
  AnalyticDenoiser(GaussianMixture target, Schedule schedule)
      : target_(std::move(target)), schedule_(schedule) {}

  Eigen::Index dim() const { return target_.dim(); }
  const Schedule& schedule() const { return schedule_; }
  const GaussianMixture& target() const { return target_; }

  SampleMatrix denoise(const SampleMatrix& x, const Eigen::VectorXd& t) const {
    SampleMatrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out.row(i) = target_.posterior_mean(x.row(i).transpose(), schedule_.sigma(t[i])).transpose();
    }
    return out;
  }

 private:
  GaussianMixture target_;
  Schedule schedule_;
};

// w(t, t_a) * || alpha(t, t_a) * pred + (1 - alpha(t, t_a)) * x_t - x_anchor ||^2
//
// Minimised over pred by E[X_0 | X_t = x_t] even though only x_anchor (a draw
// from p_{t_a}) is available as target.
inline double ambient_loss(const Point& pred, const Point& x_t, const Point& x_anchor, double t, double t_anchor,
                           const Schedule& schedule) {
  const double a = schedule.alpha(t, t_anchor);
  const double w = schedule.weight(t, t_anchor);
  return w * (a * pred + (1.0 - a) * x_t - x_anchor).squaredNorm();
}

// Gradient of ambient_loss with respect to pred.
inline Point ambient_loss_grad(const Point& pred, const Point& x_t, const Point& x_anchor, double t,
                               double t_anchor, const Schedule& schedule) {
  const double a = schedule.alpha(t, t_anchor);
  const double w = schedule.weight(t, t_anchor);
  return 2.0 * w * a * (a * pred + (1.0 - a) * x_t - x_anchor);
}

}  // namespace dataloops
