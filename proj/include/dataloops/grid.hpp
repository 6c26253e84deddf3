#pragma once

// Densities tabulated on a regular 1-D or 2-D grid, with trapezoid-rule
// integration.  Used to compute TV and KL between analytic mixtures and
// between kernel-smoothed sample sets.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "dataloops/densities.hpp"
#include "dataloops/types.hpp"

namespace dataloops {

struct GridSpec {
  int dim = 1;
  std::array<double, 2> lower{0.0, 0.0};
  std::array<double, 2> upper{1.0, 1.0};
  std::size_t points = 4096;  // per axis

  std::size_t size() const { return dim == 1 ? points : points * points; }
  double step(int axis) const {
    return (upper[axis] - lower[axis]) / static_cast<double>(points - 1);
  }
  double coord(int axis, std::size_t i) const {
    return lower[axis] + step(axis) * static_cast<double>(i);
  }

  bool operator==(const GridSpec&) const = default;

  static constexpr std::size_t default_points(int dim) { return dim == 1 ? 4096 : 256; }

  // Bounds covering every mixture's means padded by 8 standard deviations of
  // the widest component among all of them.
  static GridSpec covering(std::initializer_list<const GaussianMixture*> mixtures, std::size_t points = 0) {
    GridSpec spec;
    spec.dim = static_cast<int>((*mixtures.begin())->dim());
    if (spec.dim > 2) throw DomainError("grid densities support d in {1, 2}");
    spec.points = points == 0 ? default_points(spec.dim) : points;
    double widest = 0.0;
    for (const auto* m : mixtures) {
      if (m->dim() != spec.dim) throw DomainError("mixtures on one grid must share a dimension");
      widest = std::max(widest, m->max_variance());
    }
    const double reach = 8.0 * std::sqrt(std::max(widest, 1e-12));
    for (int a = 0; a < spec.dim; ++a) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto* m : mixtures) {
        for (const Point& mu : m->means()) {
          lo = std::min(lo, mu[a] - reach);
          hi = std::max(hi, mu[a] + reach);
        }
      }
      spec.lower[static_cast<std::size_t>(a)] = lo;
      spec.upper[static_cast<std::size_t>(a)] = hi;
    }
    return spec;
  }
};

class GridDensity {
 public:
  GridDensity(GridSpec spec, std::vector<double> values) : spec_(spec), values_(std::move(values)) {
    if (spec_.points < 2) throw DomainError("grid needs at least 2 points per axis");
    if (values_.size() != spec_.size()) throw DomainError("grid value count does not match the grid");
    for (double v : values_)
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("grid density values must be finite and >= 0");
  }

  static GridDensity evaluate(const GaussianMixture& gm, const GridSpec& spec) {
    if (gm.dim() != spec.dim) throw DomainError("mixture and grid dimensions differ");
    std::vector<double> values(spec.size());
    Point x(spec.dim);
    if (spec.dim == 1) {
      for (std::size_t i = 0; i < spec.points; ++i) {
        x[0] = spec.coord(0, i);
        values[i] = gm.density(x);
      }
    } else {
      for (std::size_t i = 0; i < spec.points; ++i) {
        x[0] = spec.coord(0, i);
        for (std::size_t j = 0; j < spec.points; ++j) {
          x[1] = spec.coord(1, j);
          values[i * spec.points + j] = gm.density(x);
        }
      }
    }
    return GridDensity(spec, std::move(values));
  }

  // Kernel density estimate from samples: linear binning onto the grid
  // followed by a separable Gaussian convolution with the given bandwidth.
  // Mass falling outside the grid is dropped.
  static GridDensity from_samples(const SampleMatrix& samples, const GridSpec& spec, double bandwidth) {
    if (samples.cols() != spec.dim) throw DomainError("sample and grid dimensions differ");
    if (samples.rows() == 0) throw DomainError("cannot smooth an empty sample set");
    if (!(bandwidth > 0.0)) throw DomainError("bandwidth must be positive");
    std::vector<double> counts(spec.size(), 0.0);
    const double w = 1.0 / static_cast<double>(samples.rows());
    const auto n = spec.points;
    auto locate = [&](int axis, double v, std::size_t& i0, double& frac) {
      const double u = (v - spec.lower[static_cast<std::size_t>(axis)]) / spec.step(axis);
      if (!(u >= 0.0) || u > static_cast<double>(n - 1)) return false;
      i0 = std::min(static_cast<std::size_t>(u), n - 2);
      frac = u - static_cast<double>(i0);
      return true;
    };
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
      std::size_t i0 = 0, j0 = 0;
      double fi = 0.0, fj = 0.0;
      if (!locate(0, samples(r, 0), i0, fi)) continue;
      if (spec.dim == 1) {
        counts[i0] += w * (1.0 - fi);
        counts[i0 + 1] += w * fi;
      } else {
        if (!locate(1, samples(r, 1), j0, fj)) continue;
        counts[i0 * n + j0] += w * (1.0 - fi) * (1.0 - fj);
        counts[(i0 + 1) * n + j0] += w * fi * (1.0 - fj);
        counts[i0 * n + j0 + 1] += w * (1.0 - fi) * fj;
        counts[(i0 + 1) * n + j0 + 1] += w * fi * fj;
      }
    }
    for (int axis = 0; axis < spec.dim; ++axis) {
      const double h = spec.step(axis);
      const auto half = static_cast<long>(std::ceil(5.0 * bandwidth / h));
      std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
      for (long k = -half; k <= half; ++k) {
        const double z = static_cast<double>(k) * h / bandwidth;
        kernel[static_cast<std::size_t>(k + half)] =
            std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * bandwidth);
      }
      counts = convolve_axis(counts, spec, axis, kernel, half);
    }
    return GridDensity(spec, std::move(counts));
  }

  const GridSpec& spec() const { return spec_; }
  const std::vector<double>& values() const { return values_; }

  // Trapezoid-rule integral of f(value_index) over the grid.
  template <class F>
  double integrate(F&& f) const {
    const std::size_t n = spec_.points;
    auto edge = [n](std::size_t i) { return (i == 0 || i + 1 == n) ? 0.5 : 1.0; };
    double acc = 0.0;
    if (spec_.dim == 1) {
      for (std::size_t i = 0; i < n; ++i) acc += edge(i) * f(i);
      return acc * spec_.step(0);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) acc += edge(i) * edge(j) * f(i * n + j);
    return acc * spec_.step(0) * spec_.step(1);
  }

  double mass() const {
    return integrate([this](std::size_t i) { return values_[i]; });
  }

  GridDensity normalized() const {
    const double m = mass();
    if (!(m > 0.0)) throw DomainError("cannot normalize a grid density with zero mass");
    std::vector<double> v = values_;
    for (double& x : v) x /= m;
    return GridDensity(spec_, std::move(v));
  }

  // Pointwise convex combination wa * a + wb * b on a shared grid.
  static GridDensity mix(const GridDensity& a, double wa, const GridDensity& b, double wb) {
    require_same_grid(a, b);
    std::vector<double> v(a.values_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = wa * a.values_[i] + wb * b.values_[i];
    return GridDensity(a.spec_, std::move(v));
  }

  static void require_same_grid(const GridDensity& a, const GridDensity& b) {
    if (!(a.spec_ == b.spec_)) throw DomainError("grid densities live on different grids");
  }

 private:
  static std::vector<double> convolve_axis(const std::vector<double>& in, const GridSpec& spec, int axis,
                                           const std::vector<double>& kernel, long half) {
    const auto n = static_cast<long>(spec.points);
    std::vector<double> out(in.size(), 0.0);
    const long lines = spec.dim == 1 ? 1 : n;
    for (long line = 0; line < lines; ++line) {
      auto at = [&](long i) -> std::size_t {
        if (spec.dim == 1) return static_cast<std::size_t>(i);
        return axis == 0 ? static_cast<std::size_t>(i * n + line) : static_cast<std::size_t>(line * n + i);
      };
      for (long i = 0; i < n; ++i) {
        const double v = in[at(i)];
        if (v == 0.0) continue;
        const long lo = std::max(0L, i - half), hi = std::min(n - 1, i + half);
        for (long j = lo; j <= hi; ++j) out[at(j)] += v * kernel[static_cast<std::size_t>(j - i + half)];
      }
    }
    return out;
  }

  GridSpec spec_;
  std::vector<double> values_;
};

// 0.5 * integral |a - b|.
inline double tv_distance(const GridDensity& a, const GridDensity& b) {
  GridDensity::require_same_grid(a, b);
  const auto& va = a.values();
  const auto& vb = b.values();
  const double tv = 0.5 * a.integrate([&](std::size_t i) { return std::abs(va[i] - vb[i]); });
  return std::clamp(tv, 0.0, 1.0);
}

// integral a log(a / b), floored at 0 (quadrature can dip a hair below).
inline double kl_divergence(const GridDensity& a, const GridDensity& b) {
  GridDensity::require_same_grid(a, b);
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i] > 0.0 && !(vb[i] > 0.0))
      throw DomainError("KL undefined: second density vanishes where the first is positive");
  }
  const double kl = a.integrate([&](std::size_t i) { return va[i] > 0.0 ? va[i] * std::log(va[i] / vb[i]) : 0.0; });
  return std::max(kl, 0.0);
}

}  // namespace dataloops
