#pragma once

// Multilayer perceptron denoiser h_theta(x, t).
//
// Input features per point are (x * c_in(sigma), log sigma) with
// c_in = 1 / sqrt(sigma_data^2 + sigma^2) and log sigma clamped to
// [log sigma_min, log sigma_max].  With Output::direct the network output is
// the x0-estimate; with Output::skip it is h = c_skip x + c_out F, where
// c_skip = sigma_data^2 / (sigma^2 + sigma_data^2) and
// c_out = sigma sigma_data / sqrt(sigma^2 + sigma_data^2).
// Hidden layers use SiLU.  Gradients are hand-written reverse mode.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dataloops/denoiser.hpp"
#include "dataloops/random.hpp"
#include "dataloops/schedule.hpp"
#include "dataloops/types.hpp"

namespace dataloops {

enum class Activation { silu };

inline std::string_view to_string(Activation) { return "silu"; }

inline Activation activation_from_string(std::string_view s) {
  if (s == "silu") return Activation::silu;
  throw FormatError("unknown activation '" + std::string(s) + "' (expected: silu)");
}

enum class Output { direct, skip };

inline std::string_view to_string(Output o) { return o == Output::direct ? "direct" : "skip"; }

inline Output output_from_string(std::string_view s) {
  if (s == "direct") return Output::direct;
  if (s == "skip") return Output::skip;
  throw FormatError("unknown output parametrisation '" + std::string(s) + "' (expected: direct, skip)");
}

struct MlpLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Parameter set (or a gradient of one): a list of affine layers.
struct MlpParams {
  std::vector<MlpLayer> layers;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  MlpParams zeros_like() const {
    MlpParams z;
    for (const auto& l : layers)
      z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    return z;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
    return s;
  }

  bool all_finite() const {
    return std::all_of(layers.begin(), layers.end(),
                       [](const MlpLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
  }

  // this += a * other
  void axpy(double a, const MlpParams& other) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += a * other.layers[i].weight;
      layers[i].bias += a * other.layers[i].bias;
    }
  }

  void scale(double a) {
    for (auto& l : layers) {
      l.weight *= a;
      l.bias *= a;
    }
  }

  // Flat order: per layer, weight row-major, then bias.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(count());
    for (const auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias[r]);
    }
    return out;
  }

  void assign(const std::vector<double>& flat) {
    if (flat.size() != count()) throw FormatError("parameter count mismatch");
    std::size_t k = 0;
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[k++];
    }
  }
};

class MlpDenoiser {
 public:
  // widths = {d + 1, hidden..., d}
  MlpDenoiser(std::vector<int> widths, Schedule schedule, double sigma_data = 1.0, Output output = Output::direct)
      : widths_(std::move(widths)), schedule_(schedule), sigma_data_(sigma_data), output_(output) {
    if (widths_.size() < 2) throw DomainError("MLP needs at least an input and an output width");
    if (widths_.back() < 1 || widths_.front() != widths_.back() + 1)
      throw DomainError("MLP widths must start at d + 1 and end at d");
    for (int w : widths_)
      if (w < 1) throw DomainError("MLP widths must be positive");
    if (!(sigma_data > 0.0)) throw DomainError("sigma_data must be positive");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
      params_.layers.push_back({Eigen::MatrixXd::Zero(widths_[l + 1], widths_[l]), Eigen::VectorXd::Zero(widths_[l + 1])});
  }

  static std::vector<int> widths_for(Eigen::Index dim, const std::vector<int>& hidden) {
    std::vector<int> w{static_cast<int>(dim) + 1};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(static_cast<int>(dim));
    return w;
  }

  // LeCun-normal weights, zero biases.
  static MlpDenoiser random(Eigen::Index dim, const std::vector<int>& hidden, Schedule schedule, Rng& rng,
                            double sigma_data = 1.0, Output output = Output::direct) {
    MlpDenoiser m(widths_for(dim, hidden), schedule, sigma_data, output);
    for (auto& l : m.params_.layers) {
      const double sd = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = sd * rng.normal();
    }
    return m;
  }

  Eigen::Index dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  const Schedule& schedule() const { return schedule_; }
  double sigma_data() const { return sigma_data_; }
  Activation activation() const { return Activation::silu; }
  Output output() const { return output_; }
  const MlpParams& params() const { return params_; }
  MlpParams& params() { return params_; }

  double input_scale(double sigma) const { return 1.0 / std::sqrt(sigma_data_ * sigma_data_ + sigma * sigma); }

  double skip_scale(double sigma) const {
    return output_ == Output::skip ? sigma_data_ * sigma_data_ / (sigma * sigma + sigma_data_ * sigma_data_) : 0.0;
  }
  double output_scale(double sigma) const {
    return output_ == Output::skip ? sigma * sigma_data_ / std::sqrt(sigma * sigma + sigma_data_ * sigma_data_) : 1.0;
  }

  double noise_feature(double sigma) const {
    return std::log(std::clamp(sigma, schedule_.sigma_min(), schedule_.sigma_max()));
  }

  // Column-major feature matrix, one column per point.
  Eigen::MatrixXd features(const SampleMatrix& x, const Eigen::VectorXd& t) const {
    if (x.cols() != dim()) throw DomainError("input dimension does not match the model");
    if (t.size() != x.rows()) throw DomainError("need one diffusion time per input row");
    if (!x.allFinite() || !t.allFinite()) throw DomainError("non-finite input to the MLP");
    Eigen::MatrixXd a(widths_.front(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double sigma = schedule_.sigma(t[i]);
      a.col(i).head(dim()) = x.row(i).transpose() * input_scale(sigma);
      a(dim(), i) = noise_feature(sigma);
    }
    return a;
  }

  SampleMatrix denoise(const SampleMatrix& x, const Eigen::VectorXd& t) const {
    Eigen::MatrixXd a = features(x, t);
    const std::size_t n = params_.layers.size();
    for (std::size_t l = 0; l < n; ++l) {
      Eigen::MatrixXd z = params_.layers[l].weight * a;
      z.colwise() += params_.layers[l].bias;
      if (l + 1 < n) {
        a = z.array() / (1.0 + (-z.array()).exp());
      } else {
        a = std::move(z);
      }
    }
    SampleMatrix out = a.transpose();
    if (output_ == Output::skip) {
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double s = schedule_.sigma(t[i]);
        out.row(i) = skip_scale(s) * x.row(i) + output_scale(s) * out.row(i);
      }
    }
    return out;
  }

  // Upper bound on the x-Lipschitz constant at noise level sigma:
  // c_skip + c_out * c_in * prod ||W_l||_2 * Lip(SiLU)^(#hidden layers).
  double lipschitz_bound(double sigma) const {
    constexpr double kSiluLipschitz = 1.0998;
    double l = output_scale(sigma) * input_scale(sigma);
    for (std::size_t i = 0; i < params_.layers.size(); ++i) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(params_.layers[i].weight);
      l *= svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
      if (i + 1 < params_.layers.size()) l *= kSiluLipschitz;
    }
    return skip_scale(sigma) + l;
  }

 private:
  std::vector<int> widths_;
  Schedule schedule_;
  double sigma_data_ = 1.0;
  Output output_ = Output::direct;
  MlpParams params_;
};

// A minibatch of the ambient objective: x_t already carries the extra noise.
struct AmbientBatch {
  SampleMatrix x_t;
  SampleMatrix x_anchor;
  Eigen::VectorXd t;
  Eigen::VectorXd t_anchor;
  Eigen::VectorXd scale;  // optional per-row loss multiplier; empty means 1

  Eigen::Index size() const { return x_t.rows(); }
};

struct BatchGradient {
  double loss = 0.0;
  MlpParams grad;
};

inline constexpr double kDefaultWeightCap = 1e6;

// Batch-mean ambient loss of the model on `batch`, and its exact gradient.
inline BatchGradient mlp_gradient(const MlpDenoiser& model, const AmbientBatch& batch,
                                  double weight_cap = kDefaultWeightCap) {
  const Eigen::Index b = batch.size();
  if (b == 0) throw DomainError("empty training batch");
  if (batch.x_anchor.rows() != b || batch.t.size() != b || batch.t_anchor.size() != b ||
      (batch.scale.size() != 0 && batch.scale.size() != b))
    throw DomainError("training batch fields have inconsistent lengths");
  const Schedule& schedule = model.schedule();
  const auto& layers = model.params().layers;
  const std::size_t n = layers.size();

  // Forward, keeping pre-activations and activations.
  std::vector<Eigen::MatrixXd> acts(n + 1);
  std::vector<Eigen::MatrixXd> pre(n);
  acts[0] = model.features(batch.x_t, batch.t);
  for (std::size_t l = 0; l < n; ++l) {
    pre[l] = layers[l].weight * acts[l];
    pre[l].colwise() += layers[l].bias;
    if (l + 1 < n) {
      acts[l + 1] = pre[l].array() / (1.0 + (-pre[l].array()).exp());
    } else {
      acts[l + 1] = pre[l];
    }
  }
  Eigen::MatrixXd out = acts[n];  // d x B, then the denoiser output
  Eigen::VectorXd c_out = Eigen::VectorXd::Ones(b);
  if (model.output() == Output::skip) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const double s = schedule.sigma(batch.t[i]);
      c_out[i] = model.output_scale(s);
      out.col(i) = model.skip_scale(s) * batch.x_t.row(i).transpose() + c_out[i] * out.col(i);
    }
  }

  // Loss and dL/d(out).
  BatchGradient result;
  Eigen::MatrixXd g(out.rows(), b);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double a = schedule.alpha(batch.t[i], batch.t_anchor[i]);
    double w = std::min(schedule.weight(batch.t[i], batch.t_anchor[i]), weight_cap);
    if (batch.scale.size() != 0) w *= batch.scale[i];
    const Eigen::VectorXd r =
        a * out.col(i) + (1.0 - a) * batch.x_t.row(i).transpose() - batch.x_anchor.row(i).transpose();
    total += w * r.squaredNorm();
    g.col(i) = (2.0 * w * a * c_out[i] * inv_b) * r;
  }
  result.loss = total * inv_b;

  // Backward.
  result.grad = model.params().zeros_like();
  for (std::size_t l = n; l-- > 0;) {
    result.grad.layers[l].weight.noalias() = g * acts[l].transpose();
    result.grad.layers[l].bias = g.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd da = layers[l].weight.transpose() * g;
    const auto z = pre[l - 1].array();
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z).exp());
    g = (da.array() * (s * (1.0 + z * (1.0 - s)))).matrix();
  }
  return result;
}

}  // namespace dataloops
