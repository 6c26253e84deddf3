#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <string_view>

#include "dataloops/random.hpp"
#include "dataloops/types.hpp"

namespace dataloops {

enum class ScheduleKind { linear };

inline std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear: return "linear";
  }
  return "linear";
}

inline ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "linear") return ScheduleKind::linear;
  throw FormatError("unknown schedule kind '" + std::string(s) + "' (expected: linear)");
}

// Noise schedule sigma(t) on the diffusion time axis [0, T].
//
// The linear kind is the EDM convention sigma(t) = t, so T = sigma_max.
// sigma_min is never part of the schedule itself; samplers use it as the
// smallest noise level they integrate down to.
class Schedule {
 public:
  Schedule() = default;
  Schedule(double sigma_min, double sigma_max, ScheduleKind kind = ScheduleKind::linear)
      : kind_(kind), sigma_min_(sigma_min), sigma_max_(sigma_max) {
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max) || !std::isfinite(sigma_max)) {
      std::ostringstream os;
      os << "invalid schedule: need 0 < sigma_min < sigma_max, got sigma_min=" << sigma_min
         << " sigma_max=" << sigma_max;
      throw DomainError(os.str());
    }
  }

  ScheduleKind kind() const { return kind_; }
  double sigma_min() const { return sigma_min_; }
  double sigma_max() const { return sigma_max_; }
  double horizon() const { return sigma_max_; }

  double sigma(double t) const {
    check_time(t);
    return t;
  }

  // Inverse of sigma().
  double time_of(double sigma) const {
    if (!(sigma >= 0.0) || sigma > sigma_max_) {
      std::ostringstream os;
      os << "noise level " << sigma << " outside [0, " << sigma_max_ << "]";
      throw DomainError(os.str());
    }
    return sigma;
  }

  // (sigma^2(t) - sigma^2(t_anchor)) / sigma^2(t): the share of the noise at
  // time t that was added on top of a sample anchored at t_anchor.
  double alpha(double t, double t_anchor) const {
    check_usable(t, t_anchor);
    const double s2 = square(sigma(t));
    return (s2 - square(sigma(t_anchor))) / s2;
  }

  // sigma^4(t) / (sigma^2(t) - sigma^2(t_anchor))^2 == 1 / alpha^2.
  double weight(double t, double t_anchor) const {
    check_usable(t, t_anchor);
    const double s2 = square(sigma(t));
    const double gap = s2 - square(sigma(t_anchor));
    return (s2 * s2) / (gap * gap);
  }

  // x + sqrt(sigma^2(t) - sigma^2(t_anchor)) * eps, eps ~ N(0, I).
  Point add_noise(const Point& x, double t_anchor, double t, Rng& rng) const {
    if (t_anchor > t) {
      std::ostringstream os;
      os << "cannot add noise backwards: t_anchor=" << t_anchor << " > t=" << t;
      throw DomainError(os.str());
    }
    const double extra = std::sqrt(square(sigma(t)) - square(sigma(t_anchor)));
    if (extra == 0.0) return x;
    return x + extra * rng.normal_vector(x.size());
  }

  bool operator==(const Schedule&) const = default;

 private:
  static double square(double v) { return v * v; }

  void check_time(double t) const {
    if (!(t >= 0.0) || t > sigma_max_) {
      std::ostringstream os;
      os << "diffusion time " << t << " outside [0, " << sigma_max_ << "]";
      throw DomainError(os.str());
    }
  }

  void check_usable(double t, double t_anchor) const {
    check_time(t);
    check_time(t_anchor);
    if (!(t_anchor < t)) {
      std::ostringstream os;
      os << "sample anchored at t=" << t_anchor << " is not usable at time " << t;
      throw DomainError(os.str());
    }
  }

  ScheduleKind kind_ = ScheduleKind::linear;
  double sigma_min_ = 0.002;
  double sigma_max_ = 80.0;
};

}  // namespace dataloops
