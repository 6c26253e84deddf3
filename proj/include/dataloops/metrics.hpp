#pragma once

// Evaluation statistics: sliced Wasserstein-2 (the toy analogue of FID),
// conditional restoration error, and the loss-vs-noise profile.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dataloops/dataset.hpp"
#include "dataloops/denoiser.hpp"
#include "dataloops/parallel.hpp"
#include "dataloops/random.hpp"
#include "dataloops/samplers.hpp"

namespace dataloops {

// Squared W2 between two 1-D empirical measures, by integrating the squared
// gap between their quantile functions (exact for unequal sizes).
inline double w2_squared_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("W2 needs two nonempty sample sets");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double u = 0.0, acc = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na, next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    const double gap = a[i] - b[j];
    acc += (next - u) * gap * gap;
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return acc;
}

// Square root of the mean squared 1-D W2 over random unit directions.  In one
// dimension the exact W2 is returned and no directions are drawn.
inline double sliced_w2(const SampleMatrix& a, const SampleMatrix& b, std::size_t projections, Rng& rng) {
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("sliced_w2 needs two nonempty sample sets");
  if (a.cols() != b.cols()) throw DomainError("sliced_w2 sample sets differ in dimension");
  auto column = [](const SampleMatrix& m, const Eigen::VectorXd& dir) {
    const Eigen::VectorXd p = m * dir;
    return std::vector<double>(p.data(), p.data() + p.size());
  };
  if (a.cols() == 1) {
    const Eigen::VectorXd e = Eigen::VectorXd::Ones(1);
    return std::sqrt(w2_squared_1d(column(a, e), column(b, e)));
  }
  if (projections == 0) throw DomainError("sliced_w2 needs at least one projection");
  std::vector<Eigen::VectorXd> dirs;
  dirs.reserve(projections);
  for (std::size_t k = 0; k < projections; ++k) {
    Eigen::VectorXd v = rng.normal_vector(a.cols());
    while (v.norm() == 0.0) v = rng.normal_vector(a.cols());
    dirs.push_back(v.normalized());
  }
  std::vector<double> per(projections);
  parallel_for_chunks(projections, 16, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) per[k] = w2_squared_1d(column(a, dirs[k]), column(b, dirs[k]));
  });
  double total = 0.0;
  for (double v : per) total += v;
  return std::sqrt(total / static_cast<double>(projections));
}

struct ConditionalEstimate {
  double mse = 0.0;
  NoisyDataset restored;  // first posterior draw of every noisy sample with a reference, anchored at 0
};

// Monte Carlo posterior mean E[X_0 | x, t_anchor] per sample from `mc`
// reverse-process draws, then the mean squared distance to clean_ref.
// Samples already at anchor 0 contribute ||x - clean_ref||^2 directly.
template <Denoiser D>
ConditionalEstimate conditional_estimate(const D& den, const NoisyDataset& data, std::size_t mc,
                                         const SamplerConfig& cfg, std::uint64_t seed) {
  if (mc == 0) throw DomainError("conditional_mse needs mc >= 1");
  std::vector<std::size_t> noisy;
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    if (!s.clean_ref) continue;
    ++counted;
    if (s.t_anchor == 0.0) {
      total += (s.x - *s.clean_ref).squaredNorm();
    } else {
      noisy.push_back(i);
    }
  }
  if (counted == 0) throw DomainError("no sample carries a clean reference");
  ConditionalEstimate est;
  est.restored.dim = data.dim;
  est.restored.provenance = data.provenance + " (posterior draws)";
  if (!noisy.empty()) {
    const auto rows = static_cast<Eigen::Index>(noisy.size() * mc);
    SampleMatrix x(rows, data.dim);
    Eigen::VectorXd from(rows), to = Eigen::VectorXd::Zero(rows);
    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(rows));
    for (std::size_t n = 0; n < noisy.size(); ++n) {
      for (std::size_t r = 0; r < mc; ++r) {
        const auto row = static_cast<Eigen::Index>(n * mc + r);
        x.row(row) = data.samples[noisy[n]].x.transpose();
        from[row] = data.samples[noisy[n]].t_anchor;
        rngs.push_back(Rng::derive(seed, "cond-mse", {noisy[n], r}));
      }
    }
    const SampleMatrix draws = reverse_rows(den, x, from, to, cfg, rngs);
    for (std::size_t n = 0; n < noisy.size(); ++n) {
      Point mean = Point::Zero(data.dim);
      for (std::size_t r = 0; r < mc; ++r) mean += draws.row(static_cast<Eigen::Index>(n * mc + r)).transpose();
      mean /= static_cast<double>(mc);
      const auto& ref = *data.samples[noisy[n]].clean_ref;
      total += (mean - ref).squaredNorm();
      est.restored.samples.push_back({draws.row(static_cast<Eigen::Index>(n * mc)).transpose(), 0.0, ref});
    }
  }
  est.mse = total / static_cast<double>(counted);
  return est;
}

template <Denoiser D>
double conditional_mse(const D& den, const NoisyDataset& data, std::size_t mc, const SamplerConfig& cfg,
                       std::uint64_t seed) {
  return conditional_estimate(den, data, mc, cfg, seed).mse;
}

// sliced_w2 between a (restored) dataset's points and a reference set.
inline double conditional_distributional(const NoisyDataset& restored, const SampleMatrix& reference,
                                         std::size_t projections, Rng& rng) {
  return sliced_w2(restored.points(), reference, projections, rng);
}

// Log-spaced noise levels, one per bucket, covering [sigma_lo, sigma_hi].
inline std::vector<double> bucket_sigmas(double sigma_lo, double sigma_hi, std::size_t buckets) {
  if (buckets < 2) throw DomainError("loss profile needs at least 2 buckets");
  std::vector<double> s(buckets);
  for (std::size_t b = 0; b < buckets; ++b)
    s[b] = std::exp(std::log(sigma_lo) + (std::log(sigma_hi) - std::log(sigma_lo)) * static_cast<double>(b) /
                                             static_cast<double>(buckets - 1));
  return s;
}

// Mean ||h(x + sigma eps, t(sigma)) - x||^2 per bucket.  The noise depends only
// on (seed, bucket, row, draw), so two denoisers see identical inputs.
template <Denoiser D>
std::vector<double> loss_profile(const D& den, const SampleMatrix& clean, const std::vector<double>& sigmas,
                                 std::size_t draws, std::uint64_t seed) {
  if (clean.rows() == 0) throw DomainError("loss profile needs evaluation points");
  if (draws == 0) throw DomainError("loss profile needs draws >= 1");
  const Schedule& schedule = den.schedule();
  std::vector<double> out;
  for (std::size_t b = 0; b < sigmas.size(); ++b) {
    const auto rows = static_cast<Eigen::Index>(static_cast<std::size_t>(clean.rows()) * draws);
    SampleMatrix x(rows, clean.cols());
    for (Eigen::Index i = 0; i < clean.rows(); ++i) {
      for (std::size_t r = 0; r < draws; ++r) {
        Rng rng = Rng::derive(seed, "loss-profile", {b, static_cast<std::uint64_t>(i), r});
        const auto row = static_cast<Eigen::Index>(static_cast<std::size_t>(i) * draws + r);
        x.row(row) = clean.row(i) + sigmas[b] * rng.normal_vector(clean.cols()).transpose();
      }
    }
    const Eigen::VectorXd t = Eigen::VectorXd::Constant(rows, schedule.time_of(sigmas[b]));
    const SampleMatrix h = den.denoise(x, t);
    double acc = 0.0;
    for (Eigen::Index row = 0; row < rows; ++row)
      acc += (h.row(row) - clean.row(row / static_cast<Eigen::Index>(draws))).squaredNorm();
    out.push_back(acc / static_cast<double>(rows));
  }
  return out;
}

struct LoopReport {
  int loop = 0;
  double sw2 = 0.0;
  double cond_mse = 0.0;
  double cond_sw2 = 0.0;
  std::vector<double> bucket_loss;
  std::size_t dataset_size = 0;
  std::uint64_t seed = 0;
  double seconds = 0.0;
};

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// CSV: loop, sw2, cond_mse, cond_sw2, bucket_<i>_loss..., seed, seconds
inline void write_report_csv(std::ostream& os, const std::vector<LoopReport>& rows, bool with_timing = true) {
  const std::size_t buckets = rows.empty() ? 0 : rows.front().bucket_loss.size();
  os << "loop,sw2,cond_mse,cond_sw2";
  for (std::size_t b = 0; b < buckets; ++b) os << ",bucket_" << b << "_loss";
  os << ",seed,seconds\n";
  for (const auto& r : rows) {
    if (r.bucket_loss.size() != buckets) throw DomainError("report rows disagree on the bucket count");
    os << r.loop << ',' << format_double(r.sw2) << ',' << format_double(r.cond_mse) << ',' << format_double(r.cond_sw2);
    for (double v : r.bucket_loss) os << ',' << format_double(v);
    os << ',' << r.seed << ',' << (with_timing ? format_double(r.seconds) : std::string("0")) << '\n';
  }
}

}  // namespace dataloops
