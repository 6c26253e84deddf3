#pragma once

// The outer loop: train on D^(l), restore the noisy part of the dataset to
// lower noise with the fresh model, warm-start the next model on the result.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dataloops/dataset.hpp"
#include "dataloops/metrics.hpp"
#include "dataloops/mlp.hpp"
#include "dataloops/samplers.hpp"
#include "dataloops/training.hpp"

namespace dataloops {

enum class RestoreSource { original, previous };

inline std::string_view to_string(RestoreSource r) { return r == RestoreSource::original ? "original" : "previous"; }

inline RestoreSource restore_source_from_string(std::string_view s) {
  if (s == "original") return RestoreSource::original;
  if (s == "previous") return RestoreSource::previous;
  throw FormatError("unknown restore source '" + std::string(s) + "' (expected: original, previous)");
}

struct ModelConfig {
  std::vector<int> hidden{64, 64, 64};
  Output output = Output::direct;
  double sigma_data = 1.0;
};

struct LoopConfig {
  int loops = 1;
  double rho = 2.0;  // infinity: restore straight to anchor 0
  RestoreSource restore_source = RestoreSource::original;
  std::size_t k = 1;
  std::optional<bool> clean_duplication;  // unset: duplicate exactly when k > 1
  ModelConfig model;
  TrainConfig train;
  double later_steps_fraction = 0.5;  // training budget of loops >= 1 relative to loop 0
  SamplerConfig sampler;              // restoration
  std::uint64_t seed = 0;

  bool duplicate_clean() const { return clean_duplication.value_or(k > 1); }

  void validate() const {
    if (loops < 0) throw DomainError("loop count must be >= 0");
    if (!(rho > 1.0)) throw DomainError("trust rate rho must be > 1 (or inf)");
    if (k < 1) throw DomainError("posterior multiplicity k must be >= 1");
    if (!(later_steps_fraction > 0.0)) throw DomainError("later-loop step fraction must be positive");
  }
};

inline double parse_rho(std::string_view s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(std::string(s), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || used == 0) throw FormatError("bad rho '" + std::string(s) + "' (a number > 1 or inf)");
  return v;
}

inline std::string rho_to_string(double rho) { return std::isinf(rho) ? "inf" : format_double(rho); }

// What a loop report is computed from.  Everything here is fixed across
// loops, so loop-to-loop differences come from the model alone.
struct EvalSpec {
  SampleMatrix truth;          // held-out clean draws for the distributional metric
  SampleMatrix profile_clean;  // clean points for the loss profile
  NoisyDataset conditional;    // noisy samples with clean_ref
  std::size_t generated = 10000;
  std::size_t projections = 256;
  SamplerConfig generation = [] {
    SamplerConfig c;
    c.kind = SamplerKind::ode_heun;
    return c;
  }();
  std::size_t conditional_mc = 8;
  SamplerConfig conditional_sampler;
  std::size_t buckets = 8;
  std::size_t bucket_draws = 4;
  std::uint64_t seed = 0;
};

struct LoopState {
  int l = 0;
  NoisyDataset dataset;
  MlpDenoiser model;
  LoopReport report;
};

namespace detail {

inline std::size_t draws_for(const LoopConfig& cfg, int l) {
  // Restoring from the previous loop: D^(l-1) already holds k copies.
  return cfg.restore_source == RestoreSource::previous && l > 1 ? 1 : cfg.k;
}

inline double target_anchor(const LoopConfig& cfg, double t, int l) {
  if (std::isinf(cfg.rho)) return 0.0;
  const int power = cfg.restore_source == RestoreSource::original ? l : 1;
  return t / std::pow(cfg.rho, power);
}

template <class Fn>
auto stage(int l, const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw DomainError("loop " + std::to_string(l) + ", stage " + name + ": " + e.what());
  }
}

}  // namespace detail

// Builds D^(l) from `source` (D^(0) or D^(l-1) per cfg.restore_source) with
// the model trained in the previous loop.  Clean samples are copied, noisy
// ones get k posterior draws at the reduced anchor.
template <Denoiser D>
NoisyDataset restore_dataset(const D& model, const NoisyDataset& source, int l, const LoopConfig& cfg) {
  cfg.validate();
  if (l < 1) throw DomainError("restoration happens in loops >= 1");
  const std::size_t draws = detail::draws_for(cfg, l);
  const std::size_t clean_copies = cfg.duplicate_clean() && draws > 1 ? draws : 1;
  NoisyDataset out;
  out.dim = source.dim;
  out.provenance = "loop " + std::to_string(l);

  std::vector<std::size_t> noisy;
  for (std::size_t i = 0; i < source.size(); ++i)
    if (!source.samples[i].is_clean()) noisy.push_back(i);
  const auto rows = static_cast<Eigen::Index>(noisy.size() * draws);
  SampleMatrix x(rows, source.dim);
  Eigen::VectorXd from(rows), to(rows);
  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(rows));
  for (std::size_t n = 0; n < noisy.size(); ++n) {
    const auto& s = source.samples[noisy[n]];
    for (std::size_t r = 0; r < draws; ++r) {
      const auto row = static_cast<Eigen::Index>(n * draws + r);
      x.row(row) = s.x.transpose();
      from[row] = s.t_anchor;
      to[row] = detail::target_anchor(cfg, s.t_anchor, l);
      rngs.push_back(Rng::derive(cfg.seed, "restore", {static_cast<std::uint64_t>(l), noisy[n], r}));
    }
  }
  SampleMatrix restored;
  if (rows > 0) restored = reverse_rows(model, x, from, to, cfg.sampler, rngs);

  std::size_t next_noisy = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& s = source.samples[i];
    if (s.is_clean()) {
      for (std::size_t c = 0; c < clean_copies; ++c) out.samples.push_back(s);
      continue;
    }
    for (std::size_t r = 0; r < draws; ++r) {
      const auto row = static_cast<Eigen::Index>(next_noisy * draws + r);
      out.samples.push_back({restored.row(row).transpose(), to[row], s.clean_ref});
    }
    ++next_noisy;
  }
  return out;
}

inline LoopReport evaluate_model(const MlpDenoiser& model, int l, const EvalSpec& eval, std::size_t dataset_size) {
  LoopReport r;
  r.loop = l;
  r.seed = eval.seed;
  r.dataset_size = dataset_size;
  // Generation noise, projection directions and loss-profile noise depend on
  // the eval seed only, so every loop is scored on the same draws.
  const SampleMatrix gen = generate(model, eval.generated, eval.generation, Rng::derive(eval.seed, "eval-generate").next_u64());
  Rng dirs = Rng::derive(eval.seed, "eval-directions");
  r.sw2 = sliced_w2(gen, eval.truth, eval.projections, dirs);
  if (!eval.conditional.samples.empty()) {
    const auto est = conditional_estimate(model, eval.conditional, eval.conditional_mc, eval.conditional_sampler,
                                          Rng::derive(eval.seed, "eval-conditional").next_u64());
    r.cond_mse = est.mse;
    SampleMatrix refs(static_cast<Eigen::Index>(est.restored.size()), est.restored.dim);
    for (std::size_t i = 0; i < est.restored.size(); ++i)
      refs.row(static_cast<Eigen::Index>(i)) = est.restored.samples[i].clean_ref->transpose();
    Rng dirs2 = Rng::derive(eval.seed, "eval-directions");
    r.cond_sw2 = est.restored.samples.empty() ? 0.0 : conditional_distributional(est.restored, refs, eval.projections, dirs2);
  }
  if (eval.profile_clean.rows() > 0) {
    const Schedule& s = model.schedule();
    r.bucket_loss = loss_profile(model, eval.profile_clean, bucket_sigmas(s.sigma_min(), s.sigma_max(), eval.buckets),
                                 eval.bucket_draws, Rng::derive(eval.seed, "eval-profile").next_u64());
  }
  return r;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Loop 0: a fresh model trained on D^(0).  Nothing here depends on rho, k or
// the restore source, so runs that differ only in those can share it.
inline LoopState first_loop(const LoopConfig& cfg, const NoisyDataset& d0, const Schedule& schedule,
                            const EvalSpec* eval = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng init = Rng::derive(cfg.seed, "init");
  MlpDenoiser fresh =
      MlpDenoiser::random(d0.dim, cfg.model.hidden, schedule, init, cfg.model.sigma_data, cfg.model.output);
  Rng train_rng = Rng::derive(cfg.seed, "train", {0});
  LoopState st{0, d0, detail::stage(0, "train", [&] { return train(std::move(fresh), d0, cfg.train, train_rng).model; }), {}};
  if (eval) st.report = detail::stage(0, "evaluate", [&] { return evaluate_model(st.model, 0, *eval, d0.size()); });
  st.report.dataset_size = d0.size();
  st.report.seconds = seconds_since(t0);
  return st;
}

// Loop l = prev.l + 1: restore with prev.model, then fine-tune it.
inline LoopState next_loop(const LoopState& prev, const NoisyDataset& d0, const LoopConfig& cfg,
                           const EvalSpec* eval = nullptr) {
  const int l = prev.l + 1;
  const auto t0 = std::chrono::steady_clock::now();
  const NoisyDataset& source = cfg.restore_source == RestoreSource::original ? d0 : prev.dataset;
  NoisyDataset data = detail::stage(l, "restore", [&] { return restore_dataset(prev.model, source, l, cfg); });
  TrainConfig tc = cfg.train;
  tc.steps = static_cast<std::size_t>(std::llround(cfg.later_steps_fraction * static_cast<double>(cfg.train.steps)));
  Rng train_rng = Rng::derive(cfg.seed, "train", {static_cast<std::uint64_t>(l)});
  MlpDenoiser model = detail::stage(l, "train", [&] { return train(prev.model, data, tc, train_rng).model; });
  LoopState st{l, std::move(data), std::move(model), {}};
  if (eval) st.report = detail::stage(l, "evaluate", [&] { return evaluate_model(st.model, l, *eval, st.dataset.size()); });
  st.report.loop = l;
  st.report.dataset_size = st.dataset.size();
  st.report.seconds = seconds_since(t0);
  return st;
}

// Loops 0..L.  on_state sees each state as soon as it exists (for writing
// datasets and reports as the run goes).
template <class OnState>
std::vector<LoopReport> run_dataloop(const LoopConfig& cfg, const NoisyDataset& d0, const Schedule& schedule,
                                     const EvalSpec* eval, OnState&& on_state) {
  cfg.validate();
  d0.validate(schedule);
  std::vector<LoopReport> reports;
  LoopState st = first_loop(cfg, d0, schedule, eval);
  on_state(st);
  reports.push_back(st.report);
  for (int l = 1; l <= cfg.loops; ++l) {
    st = next_loop(st, d0, cfg, eval);
    on_state(st);
    reports.push_back(st.report);
  }
  return reports;
}

inline std::vector<LoopReport> run_dataloop(const LoopConfig& cfg, const NoisyDataset& d0, const Schedule& schedule,
                                            const EvalSpec* eval = nullptr) {
  return run_dataloop(cfg, d0, schedule, eval, [](const LoopState&) {});
}

}  // namespace dataloops
