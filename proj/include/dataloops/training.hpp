#pragma once

// Inner loop of the dataloop: stochastic optimisation of the ambient
// objective on an anchored dataset.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dataloops/dataset.hpp"
#include "dataloops/mlp.hpp"
#include "dataloops/random.hpp"

namespace dataloops {

enum class Optimizer { sgd, adam };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

inline Optimizer optimizer_from_string(std::string_view s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw FormatError("unknown optimizer '" + std::string(s) + "' (expected: sgd, adam)");
}

// How training times are drawn.  Both keep the per-time minimiser; log_uniform
// only shifts effort towards low noise levels.
enum class TimeSampling { uniform, log_uniform };

inline std::string_view to_string(TimeSampling s) { return s == TimeSampling::uniform ? "uniform" : "log_uniform"; }

inline TimeSampling time_sampling_from_string(std::string_view s) {
  if (s == "uniform") return TimeSampling::uniform;
  if (s == "log_uniform") return TimeSampling::log_uniform;
  throw FormatError("unknown time sampling '" + std::string(s) + "' (expected: uniform, log_uniform)");
}

struct TrainConfig {
  std::size_t steps = 4000;
  std::size_t batch = 128;
  double learning_rate = 1e-2;
  Optimizer optimizer = Optimizer::sgd;
  double clip_norm = 10.0;
  double ema_halflife = 0.0;  // in steps, 0 disables parameter averaging
  double weight_cap = kDefaultWeightCap;
  double anchor_margin = 1e-3;  // training times satisfy t >= t_anchor * (1 + margin)
  TimeSampling time_sampling = TimeSampling::uniform;
};

struct TrainResult {
  MlpDenoiser model;
  std::vector<double> loss_trace;
};

// Draws (t, usable sample) pairs the way the training loop does: t uniform
// on [t_floor, T] (or log-uniform on [max(t_floor, sigma_min), T]), then a
// uniformly random sample among those usable at t.
class BatchSampler {
 public:
  BatchSampler(const NoisyDataset& data, const Schedule& schedule, double anchor_margin,
               TimeSampling sampling = TimeSampling::uniform)
      : data_(data), schedule_(schedule), margin_(anchor_margin), sampling_(sampling) {
    data.validate(schedule);
    order_.resize(data.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return data.samples[a].t_anchor < data.samples[b].t_anchor; });
    thresholds_.reserve(order_.size());
    for (std::size_t i : order_) thresholds_.push_back(data.samples[i].t_anchor * (1.0 + margin_));
    floor_ = data.samples[order_.front()].t_anchor;
    if (!(floor_ < schedule.horizon()) || !(thresholds_.front() < schedule.horizon()))
      throw DomainError("no sample is usable at any training time: every anchor is >= T");
    log_lo_ = std::log(std::max(floor_, schedule.time_of(schedule.sigma_min())));
    log_hi_ = std::log(schedule.horizon());
  }

  double t_floor() const { return floor_; }

  // Number of samples usable at time t.
  std::size_t usable(double t) const {
    const auto end = std::upper_bound(thresholds_.begin(), thresholds_.end(), t);
    std::size_t m = static_cast<std::size_t>(end - thresholds_.begin());
    while (m > 0 && !(data_.samples[order_[m - 1]].t_anchor < t)) --m;
    return m;
  }

  AmbientBatch draw(std::size_t size, Rng& rng) const {
    const Eigen::Index d = data_.dim;
    AmbientBatch b;
    b.x_t.resize(static_cast<Eigen::Index>(size), d);
    b.x_anchor.resize(static_cast<Eigen::Index>(size), d);
    b.t.resize(static_cast<Eigen::Index>(size));
    b.t_anchor.resize(static_cast<Eigen::Index>(size));
    for (std::size_t k = 0; k < size; ++k) {
      double t = 0.0;
      std::size_t m = 0;
      do {
        t = sampling_ == TimeSampling::uniform ? rng.uniform(floor_, schedule_.horizon())
                                               : std::min(std::exp(rng.uniform(log_lo_, log_hi_)), schedule_.horizon());
        m = t > 0.0 ? usable(t) : 0;
      } while (m == 0);
      const NoisySample& s = data_.samples[order_[rng.index(m)]];
      const auto row = static_cast<Eigen::Index>(k);
      b.t[row] = t;
      b.t_anchor[row] = s.t_anchor;
      b.x_anchor.row(row) = s.x.transpose();
      b.x_t.row(row) = schedule_.add_noise(s.x, s.t_anchor, t, rng).transpose();
    }
    return b;
  }

 private:
  const NoisyDataset& data_;
  Schedule schedule_;
  double margin_;
  TimeSampling sampling_;
  double log_lo_ = 0.0, log_hi_ = 0.0;
  std::vector<std::size_t> order_;
  std::vector<double> thresholds_;
  double floor_ = 0.0;
};

inline TrainResult train(MlpDenoiser model, const NoisyDataset& data, const TrainConfig& cfg, Rng& rng) {
  if (data.dim != model.dim()) throw DomainError("dataset and model dimensions differ");
  if (cfg.batch == 0) throw DomainError("batch size must be >= 1");
  const BatchSampler sampler(data, model.schedule(), cfg.anchor_margin, cfg.time_sampling);

  TrainResult result{model, {}};
  result.loss_trace.reserve(cfg.steps);
  MlpParams& theta = result.model.params();
  MlpParams m1 = theta.zeros_like(), m2 = theta.zeros_like();
  MlpParams ema = theta;
  const double ema_decay = cfg.ema_halflife > 0.0 ? std::pow(0.5, 1.0 / cfg.ema_halflife) : 0.0;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const AmbientBatch batch = sampler.draw(cfg.batch, rng);
    BatchGradient bg = mlp_gradient(result.model, batch, cfg.weight_cap);
    result.loss_trace.push_back(bg.loss);
    if (!std::isfinite(bg.loss) || !bg.grad.all_finite())
      throw DomainError("training diverged at step " + std::to_string(step));
    const double norm = std::sqrt(bg.grad.squared_norm());
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) bg.grad.scale(cfg.clip_norm / norm);

    if (cfg.optimizer == Optimizer::sgd) {
      theta.axpy(-cfg.learning_rate, bg.grad);
    } else {
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step + 1));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step + 1));
      for (std::size_t l = 0; l < theta.layers.size(); ++l) {
        auto update = [&](auto& p, auto& mm, auto& vv, const auto& g) {
          mm = kBeta1 * mm + (1.0 - kBeta1) * g;
          vv = (kBeta2 * vv.array() + (1.0 - kBeta2) * g.array().square()).matrix();
          p.array() -= cfg.learning_rate * (mm.array() / c1) / ((vv.array() / c2).sqrt() + kEps);
        };
        update(theta.layers[l].weight, m1.layers[l].weight, m2.layers[l].weight, bg.grad.layers[l].weight);
        update(theta.layers[l].bias, m1.layers[l].bias, m2.layers[l].bias, bg.grad.layers[l].bias);
      }
    }
    if (ema_decay > 0.0) {
      ema.scale(ema_decay);
      ema.axpy(1.0 - ema_decay, theta);
    }
  }
  if (ema_decay > 0.0) theta = ema;
  return result;
}

}  // namespace dataloops
