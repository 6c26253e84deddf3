#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "dataloops/schedule.hpp"
#include "dataloops/types.hpp"

namespace dataloops {

// One training point x, usable as a draw from p_t for every t > t_anchor.
// clean_ref is ground truth for evaluation only; training never reads it.
struct NoisySample {
  Point x;
  double t_anchor = 0.0;
  std::optional<Point> clean_ref;

  bool is_clean() const { return t_anchor == 0.0; }
};

struct NoisyDataset {
  Eigen::Index dim = 0;
  std::vector<NoisySample> samples;
  std::string provenance;

  std::size_t size() const { return samples.size(); }

  std::size_t clean_count() const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [](const NoisySample& s) { return s.is_clean(); }));
  }

  double min_anchor() const {
    double m = samples.front().t_anchor;
    for (const auto& s : samples) m = std::min(m, s.t_anchor);
    return m;
  }

  void validate(const Schedule& schedule) const {
    if (samples.empty()) throw DomainError("dataset is empty");
    if (dim < 1) throw DomainError("dataset dimension must be >= 1");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const std::string where = "sample " + std::to_string(i) + ": ";
      if (s.x.size() != dim) throw DomainError(where + "dimension mismatch");
      if (!s.x.allFinite()) throw DomainError(where + "non-finite coordinates");
      if (!(s.t_anchor >= 0.0) || s.t_anchor > schedule.horizon())
        throw DomainError(where + "anchor time outside [0, T]");
      if (s.clean_ref && s.clean_ref->size() != dim) throw DomainError(where + "clean_ref dimension mismatch");
    }
  }

  SampleMatrix points() const {
    SampleMatrix m(static_cast<Eigen::Index>(samples.size()), dim);
    for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = samples[i].x.transpose();
    return m;
  }
};

}  // namespace dataloops
