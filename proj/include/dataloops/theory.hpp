#pragma once

// Error bounds for learning p_t from clean samples alone (A), from clean plus
// biased samples (B) and from clean plus transformed biased samples (C); the
// mixture TV identity behind C; and a Gaussian test bench for the claim that
// "noise to t' then run the reverse process back to t" never moves a
// distribution further from p_t in KL.
//
// Hidden constants in the bounds are all 1.

#include <cmath>
#include <string>
#include <vector>

#include "dataloops/densities.hpp"
#include "dataloops/grid.hpp"
#include "dataloops/samplers.hpp"

namespace dataloops {

struct BoundParams {
  double n1 = 0.0;  // clean count
  double n2 = 0.0;  // biased count
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double delta = 0.1;
  double sigma_t = 1.0;
  double dtv0 = 0.0;

  void validate() const {
    if (!(n1 >= 0.0) || !(n2 >= 0.0) || n1 + n2 == 0.0) throw DomainError("counts must be >= 0 and not both zero");
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
    if (!(sigma_t > 0.0)) throw DomainError("sigma_t must be positive");
    if (!(dtv0 >= 0.0 && dtv0 <= 1.0)) throw DomainError("dtv0 must lie in [0, 1]");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw DomainError("Lipschitz constants must be >= 0");
  }
};

// 1/n1 + 1/(s^2 n1) + sqrt((ln n1 + ln(1 v lambda1) + ln(2/delta)) / (s^2 n1))
inline double bound_alg_a(const BoundParams& p) {
  p.validate();
  if (p.n1 < 1.0) throw DomainError("algorithm A needs n1 >= 1");
  const double s2 = p.sigma_t * p.sigma_t;
  const double logs = std::log(p.n1) + std::log(std::max(1.0, p.lambda1)) + std::log(2.0 / p.delta);
  return 1.0 / p.n1 + 1.0 / (s2 * p.n1) + std::sqrt(logs / (s2 * p.n1));
}

// Same shape over N = n1 + n2 with the count-weighted Lipschitz constant, plus
// the bias n2 / (s N) * dtv0.  Written out separately from bound_alg_a.
inline double bound_alg_b(const BoundParams& p) {
  p.validate();
  const double total = p.n1 + p.n2;
  const double lam = (p.n1 / total) * p.lambda1 + (p.n2 / total) * p.lambda2;
  const double var = p.sigma_t * p.sigma_t;
  const double log_terms = std::log(total) + std::log(std::max(1.0, lam)) + std::log(2.0 / p.delta);
  const double estimation = 1.0 / total + 1.0 / (var * total) + std::sqrt(log_terms / (var * total));
  return estimation + p.n2 / (p.sigma_t * total) * p.dtv0;
}

inline bool prefers_b(const BoundParams& p) { return bound_alg_b(p) <= bound_alg_a(p); }

struct AlgorithmCGain {
  double bound_b = 0.0;
  double bound_c = 0.0;
};

// Algorithm C replaces dtv0 in the bias by factor * dtv0.
inline AlgorithmCGain algorithm_c_gain(const BoundParams& p, double contraction_factor) {
  if (!(contraction_factor >= 0.0 && contraction_factor <= 1.0))
    throw DomainError("contraction factor must lie in [0, 1]");
  BoundParams c = p;
  c.dtv0 = contraction_factor * p.dtv0;
  return {bound_alg_b(p), bound_alg_b(c)};
}

struct MixtureTv {
  double direct = 0.0;  // tv(p, n1/N p + n2/N q) on the grid
  double scaled = 0.0;  // n2/N tv(p, q)
};

inline MixtureTv mixture_tv(const GridDensity& p, const GridDensity& q, double n1, double n2) {
  GridDensity::require_same_grid(p, q);
  if (!(n1 >= 0.0) || !(n2 >= 0.0) || n1 + n2 == 0.0) throw DomainError("counts must be >= 0 and not both zero");
  const double total = n1 + n2;
  const GridDensity mixed = GridDensity::mix(p, n1 / total, q, n2 / total);
  return {tv_distance(p, mixed), n2 / total * tv_distance(p, q)};
}

// ---------------------------------------------------------------------------
// Gaussian bench.  p_0 = N(0, v), so p_tau = N(0, v + tau^2) and the reverse
// drift is linear; a Gaussian input stays Gaussian and its moments follow
//   VE:        dm/ds = -2 tau m / (v + tau^2),  dV/ds = -4 tau V / (v + tau^2) + 2 tau
//   stylized:  dm/ds =     -m  / (v + tau^2),  dV/ds = -2 V / (v + tau^2) + 2
// with s the elapsed reverse time (tau = t' - s).

struct GaussianPath {
  std::vector<double> tau;
  std::vector<double> mean;
  std::vector<double> var;
};

inline GaussianPath gaussian_moment_path(double p0_var, double m_start, double v_start, double t_prime, double t,
                                         int resolution, SdeForm form) {
  if (!(p0_var > 0.0) || !(v_start > 0.0)) throw DomainError("variances must be positive");
  if (!(t_prime >= t) || !(t >= 0.0)) throw DomainError("need 0 <= t <= t'");
  if (resolution < 1) throw DomainError("resolution must be >= 1");
  auto rhs = [&](double tau, double m, double v, double& dm, double& dv) {
    const double pv = p0_var + tau * tau;
    if (form == SdeForm::variance_exploding) {
      dm = -2.0 * tau * m / pv;
      dv = -4.0 * tau * v / pv + 2.0 * tau;
    } else {
      dm = -m / pv;
      dv = -2.0 * v / pv + 2.0;
    }
  };
  GaussianPath path;
  const double h = (t_prime - t) / resolution;
  double m = m_start, v = v_start;
  path.tau.push_back(t_prime);
  path.mean.push_back(m);
  path.var.push_back(v);
  for (int i = 0; i < resolution; ++i) {
    const double tau = t_prime - h * i;
    double k1m, k1v, k2m, k2v, k3m, k3v, k4m, k4v;
    rhs(tau, m, v, k1m, k1v);
    rhs(tau - 0.5 * h, m + 0.5 * h * k1m, v + 0.5 * h * k1v, k2m, k2v);
    rhs(tau - 0.5 * h, m + 0.5 * h * k2m, v + 0.5 * h * k2v, k3m, k3v);
    rhs(tau - h, m + h * k3m, v + h * k3v, k4m, k4v);
    m += h / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m);
    v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    if (!(v > 0.0)) throw DomainError("moment ODE variance left (0, inf)");
    path.tau.push_back(i + 1 == resolution ? t : tau - h);
    path.mean.push_back(m);
    path.var.push_back(v);
  }
  return path;
}

// KL(N(m1, v1) || N(m2, v2)) in one dimension.
inline double gaussian_kl(double m1, double v1, double m2, double v2) {
  return 0.5 * (v1 / v2 + (m1 - m2) * (m1 - m2) / v2 - 1.0 + std::log(v2 / v1));
}

struct Lemma2Result {
  double kl_q_t = 0.0;
  double kl_rho_t = 0.0;
  double contraction_ratio = 0.0;  // kl_rho_t / kl_q_t (0 when kl_q_t == 0)
  double rho_mean = 0.0;
  double rho_var = 0.0;
};

// q_t = N(q0_mean, q0_var + t^2) is noised to t' and carried back to t by
// the reverse dynamics driven by the scores of p.
inline Lemma2Result lemma2_gaussian(double p0_var, double q0_mean, double q0_var, double t, double t_prime,
                                    int resolution, SdeForm form = SdeForm::variance_exploding) {
  if (!(p0_var > 0.0) || !(q0_var > 0.0)) throw DomainError("variances must be positive");
  const double qv = q0_var + t * t;
  const GaussianPath path =
      gaussian_moment_path(p0_var, q0_mean, qv + t_prime * t_prime - t * t, t_prime, t, resolution, form);
  Lemma2Result r;
  r.kl_q_t = gaussian_kl(q0_mean, qv, 0.0, p0_var + t * t);
  r.rho_mean = path.mean.back();
  r.rho_var = path.var.back();
  r.kl_rho_t = gaussian_kl(r.rho_mean, r.rho_var, 0.0, p0_var + t * t);
  r.contraction_ratio = r.kl_q_t > 0.0 ? r.kl_rho_t / r.kl_q_t : 0.0;
  return r;
}

struct MomentEstimate {
  double mean = 0.0, mean_se = 0.0;
  double var = 0.0, var_se = 0.0;
};

inline MomentEstimate sample_moments(const Eigen::VectorXd& x) {
  const double n = static_cast<double>(x.size());
  MomentEstimate e;
  e.mean = x.mean();
  const Eigen::ArrayXd c = x.array() - e.mean;
  const double m2 = c.square().mean(), m4 = c.square().square().mean();
  e.var = m2 * n / (n - 1.0);
  e.mean_se = std::sqrt(e.var / n);
  e.var_se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
  return e;
}

// The same experiment by simulation: `paths` Euler-Maruyama trajectories with
// the analytic score of p, `steps` uniform steps from t' down to t.
inline MomentEstimate lemma2_monte_carlo(double p0_var, double q0_mean, double q0_var, double t, double t_prime,
                                         std::size_t paths, int steps, SdeForm form, std::uint64_t seed) {
  const Schedule schedule(std::min(1e-3, 0.5 * t), std::max(80.0, t_prime));
  const MixtureScore source(GaussianMixture::gaussian(Point::Zero(1), p0_var), schedule);
  const double start_sd = std::sqrt(q0_var + t_prime * t_prime);
  SampleMatrix x(static_cast<Eigen::Index>(paths), 1);
  std::vector<Rng> rngs;
  rngs.reserve(paths);
  for (std::size_t i = 0; i < paths; ++i) {
    rngs.push_back(Rng::derive(seed, "lemma2", {i}));
    x(static_cast<Eigen::Index>(i), 0) = q0_mean + start_sd * rngs.back().normal();
  }
  SamplerConfig cfg;
  cfg.kind = SamplerKind::sde_euler;
  cfg.nfe = steps;
  cfg.spacing = StepSpacing::uniform;
  cfg.sde_form = form;
  const auto n = static_cast<Eigen::Index>(paths);
  const SampleMatrix out =
      sde_euler(source, x, Eigen::VectorXd::Constant(n, t_prime), Eigen::VectorXd::Constant(n, t), cfg, rngs);
  return sample_moments(out.col(0));
}

struct DpiResult {
  double tv_before = 0.0;
  double tv_after = 0.0;
};

// Pushes samples of p_t and q_t through "noise to t', reverse VE SDE with the
// true scores of p back to t" and compares kernel-smoothed TV before/after.
inline DpiResult dpi_check(const GaussianMixture& p0, const GaussianMixture& q0, double t, double t_prime,
                           std::size_t samples, std::uint64_t seed, int steps = 200) {
  if (p0.dim() != 1 || q0.dim() != 1) throw DomainError("dpi_check works on 1-D mixtures");
  if (!(t > 0.0) || !(t_prime >= t)) throw DomainError("need 0 < t <= t'");
  const Schedule schedule(std::min(1e-3, 0.5 * t), std::max(80.0, t_prime));
  const MixtureScore source(p0, schedule);
  const GaussianMixture pt = p0.noised(t), qt = q0.noised(t);
  const GridSpec spec = GridSpec::covering({&pt, &qt}, 1024);

  auto draw = [&](const GaussianMixture& m, std::string_view tag) {
    Rng rng = Rng::derive(seed, tag);
    return m.sample(samples, rng);
  };
  auto channel = [&](SampleMatrix x, std::string_view tag) {
    if (t_prime == t) return x;
    const auto n = x.rows();
    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(n));
    const double extra = std::sqrt(t_prime * t_prime - t * t);
    for (Eigen::Index i = 0; i < n; ++i) {
      rngs.push_back(Rng::derive(seed, tag, {static_cast<std::uint64_t>(i)}));
      x(i, 0) += extra * rngs.back().normal();
    }
    SamplerConfig cfg;
    cfg.kind = SamplerKind::sde_euler;
    cfg.nfe = steps;
    cfg.spacing = StepSpacing::uniform;
    return sde_euler(source, x, Eigen::VectorXd::Constant(n, t_prime), Eigen::VectorXd::Constant(n, t), cfg, rngs);
  };
  auto bandwidth = [&](const SampleMatrix& a, const SampleMatrix& b) {  // Silverman's rule, pooled
    const double sd = std::sqrt(0.5 * (sample_moments(a.col(0)).var + sample_moments(b.col(0)).var));
    return 1.06 * sd * std::pow(static_cast<double>(samples), -0.2);
  };
  const SampleMatrix xp = draw(pt, "dpi-p"), xq = draw(qt, "dpi-q");
  const SampleMatrix yp = channel(xp, "dpi-channel-p"), yq = channel(xq, "dpi-channel-q");
  // One bandwidth for both sides so smoothing cannot favour either.
  const double h = bandwidth(xp, xq);
  DpiResult r;
  r.tv_before = tv_distance(GridDensity::from_samples(xp, spec, h), GridDensity::from_samples(xq, spec, h));
  r.tv_after = tv_distance(GridDensity::from_samples(yp, spec, h), GridDensity::from_samples(yq, spec, h));
  return r;
}

}  // namespace dataloops
