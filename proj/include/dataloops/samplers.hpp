#pragma once

// Reverse-time integrators driven by a denoiser or an analytic score.
//
// ode_heun integrates the probability-flow ODE dx/dsigma = (x - h(x, sigma)) / sigma
// with Heun's second-order method.  sde_euler runs Euler-Maruyama on either
//   variance_exploding: dX = -d(sigma^2) grad log p dt + sqrt(d(sigma^2)) dB   (reverse time)
//   stylized:           dX = -grad log p_tau dtau + sqrt(2) dB                  (reverse time)
// Both accept per-row start/end times so that a whole dataset with mixed
// anchors can be restored in one batched pass.
//
// NFE budget: with t_end > 0 Heun takes nfe/2 steps and Euler-Maruyama nfe
// steps.  With t_end == 0 the grid stops at sigma_min and one extra denoiser
// call maps the state to sigma = 0 (Heun: (nfe-1)/2 steps + 1, EM: nfe-1 + 1).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "dataloops/dataset.hpp"
#include "dataloops/denoiser.hpp"
#include "dataloops/densities.hpp"
#include "dataloops/parallel.hpp"
#include "dataloops/random.hpp"

namespace dataloops {

enum class SamplerKind { ode_heun, sde_euler };
enum class StepSpacing { edm_polynomial, uniform };
enum class SdeForm { variance_exploding, stylized };

inline std::string_view to_string(SamplerKind k) { return k == SamplerKind::ode_heun ? "ode_heun" : "sde_euler"; }
inline std::string_view to_string(StepSpacing s) { return s == StepSpacing::uniform ? "uniform" : "edm_polynomial"; }

inline SamplerKind sampler_kind_from_string(std::string_view s) {
  if (s == "ode_heun") return SamplerKind::ode_heun;
  if (s == "sde_euler") return SamplerKind::sde_euler;
  throw FormatError("unknown sampler '" + std::string(s) + "' (expected: ode_heun, sde_euler)");
}

inline StepSpacing step_spacing_from_string(std::string_view s) {
  if (s == "edm_polynomial") return StepSpacing::edm_polynomial;
  if (s == "uniform") return StepSpacing::uniform;
  throw FormatError("unknown step spacing '" + std::string(s) + "' (expected: edm_polynomial, uniform)");
}

inline std::string_view to_string(SdeForm f) { return f == SdeForm::stylized ? "stylized" : "variance_exploding"; }

inline SdeForm sde_form_from_string(std::string_view s) {
  if (s == "variance_exploding") return SdeForm::variance_exploding;
  if (s == "stylized") return SdeForm::stylized;
  throw FormatError("unknown SDE form '" + std::string(s) + "' (expected: variance_exploding, stylized)");
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::sde_euler;
  int nfe = 35;
  double t_start = 0.0;
  double t_end = 0.0;
  StepSpacing spacing = StepSpacing::edm_polynomial;
  double spacing_exponent = 7.0;
  SdeForm sde_form = SdeForm::variance_exploding;
};

// Noise levels visited between sigma(t_start) and sigma(t_end) (or sigma_min
// when t_end is below it), inclusive, with `intervals` steps.
inline std::vector<double> sigma_grid(double sigma_hi, double sigma_lo, int intervals, StepSpacing spacing,
                                      double exponent = 7.0) {
  std::vector<double> g(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(intervals);
    if (spacing == StepSpacing::uniform) {
      g[static_cast<std::size_t>(i)] = sigma_hi + u * (sigma_lo - sigma_hi);
    } else {
      const double a = std::pow(sigma_hi, 1.0 / exponent), b = std::pow(sigma_lo, 1.0 / exponent);
      g[static_cast<std::size_t>(i)] = std::pow(a + u * (b - a), exponent);
    }
  }
  g.front() = sigma_hi;
  g.back() = sigma_lo;
  return g;
}

namespace detail {

struct RowPlan {
  std::vector<double> sigmas;  // empty: nothing to do
  bool to_zero = false;        // finish with one denoiser call to sigma = 0
};

inline RowPlan plan_row(const Schedule& schedule, double t_start, double t_end, const SamplerConfig& cfg,
                        int evals_per_step) {
  if (!(t_end <= t_start)) throw DomainError("sampler needs t_end <= t_start");
  RowPlan plan;
  if (t_end == t_start) return plan;
  const double hi = schedule.sigma(t_start);
  const double lo = std::max(schedule.sigma(t_end), schedule.sigma_min());
  plan.to_zero = t_end == 0.0;
  if (!(hi > lo)) {
    // Start already at or below the floor; only the final denoise remains.
    if (plan.to_zero) plan.sigmas = {hi};
    return plan;
  }
  const int budget = plan.to_zero ? cfg.nfe - 1 : cfg.nfe;
  const int intervals = std::max(1, budget / evals_per_step);
  plan.sigmas = sigma_grid(hi, lo, intervals, cfg.spacing, cfg.spacing_exponent);
  return plan;
}

inline void check_config(const SamplerConfig& cfg) {
  if (cfg.nfe < 2) throw DomainError("sampler nfe must be >= 2");
}

inline void require_finite(const SampleMatrix& x, std::size_t step) {
  if (!x.allFinite()) throw DomainError("non-finite sampler state at step " + std::to_string(step));
}

}  // namespace detail

// Score of a known mixture; the analytic score source.
class MixtureScore {
 public:
  MixtureScore(GaussianMixture gm, Schedule schedule) : gm_(std::move(gm)), schedule_(schedule) {}
  const Schedule& schedule() const { return schedule_; }
  Eigen::Index dim() const { return gm_.dim(); }
  // Same quantity as GaussianMixture::score, evaluated for all rows at once.
  SampleMatrix score(const SampleMatrix& x, const Eigen::VectorXd& t) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    const std::size_t k = gm_.size();
    Eigen::ArrayXd sig2(n);
    for (Eigen::Index i = 0; i < n; ++i) sig2[i] = schedule_.sigma(t[i]) * schedule_.sigma(t[i]);
    Eigen::ArrayXXd logc(n, static_cast<Eigen::Index>(k));
    for (std::size_t c = 0; c < k; ++c) {
      const auto col = static_cast<Eigen::Index>(c);
      if (gm_.weights()[c] == 0.0) {
        logc.col(col).setConstant(-std::numeric_limits<double>::infinity());
        continue;
      }
      const Eigen::ArrayXd v = gm_.variances()[c] + sig2;
      if ((v <= 0.0).any()) throw DomainError("mixture has a point-mass component at this noise level; density undefined");
      const Eigen::ArrayXd sq = (x.rowwise() - gm_.means()[c].transpose()).rowwise().squaredNorm().array();
      logc.col(col) = std::log(gm_.weights()[c]) - 0.5 * sq / v -
                      0.5 * static_cast<double>(d) * (2.0 * std::numbers::pi * v).log();
    }
    const Eigen::ArrayXd best = logc.rowwise().maxCoeff();
    Eigen::ArrayXXd r = (logc.colwise() - best).exp();
    const Eigen::ArrayXd total = r.rowwise().sum();
    r.colwise() /= total;
    SampleMatrix out = SampleMatrix::Zero(n, d);
    for (std::size_t c = 0; c < k; ++c) {
      const auto col = static_cast<Eigen::Index>(c);
      const Eigen::ArrayXd coef = r.col(col) / (gm_.variances()[c] + sig2);
      for (Eigen::Index j = 0; j < d; ++j)
        out.col(j).array() += coef * (gm_.means()[c][j] - x.col(j).array());
    }
    return out;
  }

 private:
  GaussianMixture gm_;
  Schedule schedule_;
};

// Tweedie inversion of a denoiser: score = (h(x, t) - x) / sigma^2(t).
template <Denoiser D>
class DenoiserScore {
 public:
  explicit DenoiserScore(const D& d) : d_(d) {}
  const Schedule& schedule() const { return d_.schedule(); }
  Eigen::Index dim() const { return d_.dim(); }
  SampleMatrix score(const SampleMatrix& x, const Eigen::VectorXd& t) const {
    SampleMatrix h = d_.denoise(x, t);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double s = schedule().sigma(t[i]);
      h.row(i) = (h.row(i) - x.row(i)) / (s * s);
    }
    return h;
  }

 private:
  const D& d_;
};

template <class S>
concept ScoreSource = requires(const S& s, const SampleMatrix& x, const Eigen::VectorXd& t) {
  { s.score(x, t) } -> std::convertible_to<SampleMatrix>;
  { s.schedule() } -> std::convertible_to<Schedule>;
};

// Deterministic Heun integration of every row from t_start[i] to t_end[i].
template <Denoiser D>
SampleMatrix ode_heun(const D& den, SampleMatrix x, const Eigen::VectorXd& t_start, const Eigen::VectorXd& t_end,
                      const SamplerConfig& cfg) {
  detail::check_config(cfg);
  const Schedule& schedule = den.schedule();
  const Eigen::Index n = x.rows();
  std::vector<detail::RowPlan> plans(static_cast<std::size_t>(n));
  std::size_t steps = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    plans[static_cast<std::size_t>(i)] = detail::plan_row(schedule, t_start[i], t_end[i], cfg, 2);
    const auto& p = plans[static_cast<std::size_t>(i)];
    if (!p.sigmas.empty()) steps = std::max(steps, p.sigmas.size() - 1 + (p.to_zero ? 1 : 0));
  }
  parallel_for_chunks(static_cast<std::size_t>(n), 512, [&](std::size_t begin, std::size_t end) {
    const auto rows = static_cast<Eigen::Index>(end - begin);
    SampleMatrix xs = x.middleRows(static_cast<Eigen::Index>(begin), rows);
    Eigen::VectorXd tc(rows), tn(rows);
    for (std::size_t k = 0; k < steps; ++k) {
      // Rows whose plan is exhausted are evaluated at their last level and left unchanged.
      std::vector<int> mode(static_cast<std::size_t>(rows));  // 0 idle, 1 heun, 2 final denoise
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& p = plans[begin + static_cast<std::size_t>(r)];
        const std::size_t intervals = p.sigmas.empty() ? 0 : p.sigmas.size() - 1;
        const double last = p.sigmas.empty() ? schedule.sigma(t_start[static_cast<Eigen::Index>(begin) + r]) : p.sigmas.back();
        if (k < intervals) {
          mode[static_cast<std::size_t>(r)] = 1;
          tc[r] = schedule.time_of(p.sigmas[k]);
          tn[r] = schedule.time_of(p.sigmas[k + 1]);
        } else {
          mode[static_cast<std::size_t>(r)] = (k == intervals && p.to_zero) ? 2 : 0;
          tc[r] = tn[r] = schedule.time_of(std::max(last, schedule.sigma_min()));
        }
      }
      const SampleMatrix h1 = den.denoise(xs, tc);
      SampleMatrix d1(rows, xs.cols()), xe = xs;
      for (Eigen::Index r = 0; r < rows; ++r) {
        const int m = mode[static_cast<std::size_t>(r)];
        if (m == 2) {
          xe.row(r) = h1.row(r);
          continue;
        }
        if (m == 0) continue;
        const double s = schedule.sigma(tc[r]), sn = schedule.sigma(tn[r]);
        d1.row(r) = (xs.row(r) - h1.row(r)) / s;
        xe.row(r) = xs.row(r) + (sn - s) * d1.row(r);
      }
      const SampleMatrix h2 = den.denoise(xe, tn);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const int m = mode[static_cast<std::size_t>(r)];
        if (m == 2) {
          xs.row(r) = xe.row(r);
        } else if (m == 1) {
          const double s = schedule.sigma(tc[r]), sn = schedule.sigma(tn[r]);
          const auto d2 = (xe.row(r) - h2.row(r)) / sn;
          xs.row(r) = xs.row(r) + (sn - s) * 0.5 * (d1.row(r) + d2);
        }
      }
      detail::require_finite(xs, k);
    }
    x.middleRows(static_cast<Eigen::Index>(begin), rows) = xs;
  });
  return x;
}

template <Denoiser D>
Point ode_heun(const D& den, const Point& x_start, const SamplerConfig& cfg) {
  SampleMatrix x = x_start.transpose();
  return ode_heun(den, x, Eigen::VectorXd::Constant(1, cfg.t_start), Eigen::VectorXd::Constant(1, cfg.t_end), cfg)
      .row(0)
      .transpose();
}

// Euler-Maruyama; row i draws its noise from rngs[i].
template <ScoreSource S>
SampleMatrix sde_euler(const S& source, SampleMatrix x, const Eigen::VectorXd& t_start, const Eigen::VectorXd& t_end,
                       const SamplerConfig& cfg, std::vector<Rng>& rngs) {
  detail::check_config(cfg);
  if (rngs.size() != static_cast<std::size_t>(x.rows())) throw DomainError("sde_euler needs one random stream per row");
  const Schedule& schedule = source.schedule();
  const Eigen::Index n = x.rows();
  std::vector<detail::RowPlan> plans(static_cast<std::size_t>(n));
  std::size_t steps = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    plans[static_cast<std::size_t>(i)] = detail::plan_row(schedule, t_start[i], t_end[i], cfg, 1);
    const auto& p = plans[static_cast<std::size_t>(i)];
    if (!p.sigmas.empty()) steps = std::max(steps, p.sigmas.size() - 1 + (p.to_zero ? 1 : 0));
  }
  parallel_for_chunks(static_cast<std::size_t>(n), 512, [&](std::size_t begin, std::size_t end) {
    const auto rows = static_cast<Eigen::Index>(end - begin);
    SampleMatrix xs = x.middleRows(static_cast<Eigen::Index>(begin), rows);
    Eigen::VectorXd tc(rows);
    std::vector<int> mode(static_cast<std::size_t>(rows));
    for (std::size_t k = 0; k < steps; ++k) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& p = plans[begin + static_cast<std::size_t>(r)];
        const std::size_t intervals = p.sigmas.empty() ? 0 : p.sigmas.size() - 1;
        const double last = p.sigmas.empty() ? schedule.sigma(t_start[static_cast<Eigen::Index>(begin) + r]) : p.sigmas.back();
        if (k < intervals) {
          mode[static_cast<std::size_t>(r)] = 1;
          tc[r] = schedule.time_of(p.sigmas[k]);
        } else {
          mode[static_cast<std::size_t>(r)] = (k == intervals && p.to_zero) ? 2 : 0;
          tc[r] = schedule.time_of(std::max(last, schedule.sigma_min()));
        }
      }
      const SampleMatrix g = source.score(xs, tc);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const int m = mode[static_cast<std::size_t>(r)];
        if (m == 0) continue;
        const auto& p = plans[begin + static_cast<std::size_t>(r)];
        const double s = schedule.sigma(tc[r]);
        if (m == 2) {
          xs.row(r) += s * s * g.row(r);  // Tweedie to sigma = 0
          continue;
        }
        const double sn = p.sigmas[k + 1];
        Rng& rng = rngs[begin + static_cast<std::size_t>(r)];
        double drift = 0.0, diffusion = 0.0;
        if (cfg.sde_form == SdeForm::variance_exploding) {
          drift = s * s - sn * sn;
          diffusion = std::sqrt(drift);
        } else {
          drift = schedule.time_of(s) - schedule.time_of(sn);
          diffusion = std::sqrt(2.0 * drift);
        }
        for (Eigen::Index c = 0; c < xs.cols(); ++c) xs(r, c) += drift * g(r, c) + diffusion * rng.normal();
      }
      detail::require_finite(xs, k);
    }
    x.middleRows(static_cast<Eigen::Index>(begin), rows) = xs;
  });
  return x;
}

template <ScoreSource S>
Point sde_euler(const S& source, const Point& x_start, const SamplerConfig& cfg, Rng& rng) {
  std::vector<Rng> rngs{rng};
  SampleMatrix x = x_start.transpose();
  Point out = sde_euler(source, x, Eigen::VectorXd::Constant(1, cfg.t_start), Eigen::VectorXd::Constant(1, cfg.t_end),
                        cfg, rngs)
                  .row(0)
                  .transpose();
  rng = rngs.front();
  return out;
}

// Runs the reverse process for each row from t_from[i] down to t_to[i] with
// the configured sampler kind.
template <Denoiser D>
SampleMatrix reverse_rows(const D& den, const SampleMatrix& x, const Eigen::VectorXd& t_from,
                          const Eigen::VectorXd& t_to, const SamplerConfig& cfg, std::vector<Rng>& rngs) {
  if (cfg.kind == SamplerKind::ode_heun) return ode_heun(den, x, t_from, t_to, cfg);
  return sde_euler(DenoiserScore<D>(den), x, t_from, t_to, cfg, rngs);
}

// Draws from p_theta(x_{t_target} | x_{t_anchor}) by starting the reverse
// process at the sample itself.  The result is re-anchored at t_target.
template <Denoiser D>
NoisySample posterior_sample(const D& den, const NoisySample& sample, double t_target, const SamplerConfig& cfg,
                             Rng& rng) {
  if (!(t_target < sample.t_anchor) || t_target < 0.0)
    throw DomainError("posterior_sample needs 0 <= t_target < t_anchor");
  std::vector<Rng> rngs{rng};
  SampleMatrix x = sample.x.transpose();
  SampleMatrix y = reverse_rows(den, x, Eigen::VectorXd::Constant(1, sample.t_anchor),
                                Eigen::VectorXd::Constant(1, t_target), cfg, rngs);
  rng = rngs.front();
  return NoisySample{y.row(0).transpose(), t_target, sample.clean_ref};
}

// Unconditional generation: start from N(0, sigma_max^2 I) at T and integrate to 0.
template <Denoiser D>
SampleMatrix generate(const D& den, std::size_t n, const SamplerConfig& cfg, std::uint64_t seed) {
  const Schedule& schedule = den.schedule();
  const double T = schedule.horizon();
  SampleMatrix x(static_cast<Eigen::Index>(n), den.dim());
  std::vector<Rng> rngs;
  rngs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    rngs.push_back(Rng::derive(seed, "generate", {i}));
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(static_cast<Eigen::Index>(i), c) = schedule.sigma(T) * rngs.back().normal();
  }
  return reverse_rows(den, x, Eigen::VectorXd::Constant(x.rows(), T), Eigen::VectorXd::Zero(x.rows()), cfg, rngs);
}

}  // namespace dataloops
