#pragma once

// Shared helpers for the test binaries: random fixtures and a few oracles
// written without touching the library's own formulas.

#include <cmath>
#include <numbers>
#include <vector>

#include "dataloops/densities.hpp"
#include "dataloops/random.hpp"

namespace testing_support {

using dataloops::GaussianMixture;
using dataloops::Point;
using dataloops::Rng;

inline GaussianMixture random_mixture(Rng& rng, int dim, int max_components = 4, double min_var = 0.05) {
  const int k = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_components)));
  std::vector<double> w(static_cast<std::size_t>(k));
  double total = 0.0;
  for (auto& v : w) total += (v = 0.2 + rng.uniform());
  for (auto& v : w) v /= total;
  std::vector<Point> means;
  std::vector<double> vars;
  for (int i = 0; i < k; ++i) {
    Point m(dim);
    for (int a = 0; a < dim; ++a) m[a] = rng.uniform(-3.0, 3.0);
    means.push_back(m);
    vars.push_back(rng.uniform(min_var, 1.5));
  }
  // Renormalise exactly so the weights pass the 1e-12 check.
  double s = 0.0;
  for (double v : w) s += v;
  w.back() += 1.0 - s;
  return GaussianMixture(w, means, vars);
}

// Standard normal CDF.
inline double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Density of a 1-D mixture at x, written out term by term.
inline double mixture_pdf_1d(const std::vector<double>& w, const std::vector<double>& mu,
                             const std::vector<double>& var, double x) {
  double p = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    p += w[k] * std::exp(-0.5 * (x - mu[k]) * (x - mu[k]) / var[k]) / std::sqrt(2.0 * std::numbers::pi * var[k]);
  return p;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  s2 /= static_cast<double>(v.size() - 1);
  return {m, std::sqrt(s2 / static_cast<double>(v.size()))};
}

}  // namespace testing_support

namespace testing_support {

// Sample variance and its standard error via the fourth central moment.
inline MeanSe variance_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double m2 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d2 = (x - m) * (x - m);
    m2 += d2;
    m4 += d2 * d2;
  }
  const double n = static_cast<double>(v.size());
  m2 /= n;
  m4 /= n;
  return {m2, std::sqrt(std::max(m4 - m2 * m2, 0.0) / n)};
}

}  // namespace testing_support
