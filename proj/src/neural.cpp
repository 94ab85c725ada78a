#include "ltngan/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ltngan::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kSoftmax: return "softmax";
  }
  return "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::kLinear;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "tanh") return Activation::kTanh;
  if (s == "softmax") return Activation::kSoftmax;
  throw std::invalid_argument("unknown activation '" + s + "' (expected linear, sigmoid, tanh, softmax)");
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec needs at least input and output widths");
  for (auto w : layer_sizes) {
    if (w == 0) throw std::invalid_argument("MlpSpec layer width must be positive");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
}

BatchNorm::BatchNorm(std::size_t width, double momentum)
    : gamma(Var::parameter({1, width}, std::vector<double>(width, 1.0))),
      beta(Var::parameter({1, width}, std::vector<double>(width, 0.0))),
      running_mean(width, 0.0),
      running_var(width, 1.0),
      momentum(momentum) {}

Var BatchNorm::forward(const Var& x, Mode mode) {
  const std::size_t n = x.cols();
  if (n != running_mean.size()) throw ad::ShapeError("batchnorm", x.shape(), gamma.shape());
  if (mode == Mode::kEval) {
    std::vector<double> mu(running_mean), inv(n);
    for (std::size_t j = 0; j < n; ++j) inv[j] = 1.0 / std::sqrt(running_var[j] + kEps);
    const Var centered = x - Var::constant({1, n}, std::move(mu));
    return centered * Var::constant({1, n}, std::move(inv)) * gamma + beta;
  }
  const Var mu = ad::mean_rows(x);
  const Var centered = x - mu;
  const Var var = ad::mean_rows(ad::square(centered));
  const Var normalized = centered / ad::sqrt(var + kEps);
  for (std::size_t j = 0; j < n; ++j) {
    running_mean[j] = momentum * running_mean[j] + (1.0 - momentum) * mu.data()[j];
    running_var[j] = momentum * running_var[j] + (1.0 - momentum) * var.data()[j];
  }
  return normalized * gamma + beta;
}

Var Linear::forward(const Var& x) const { return ad::matmul(x, weight) + bias; }

Var apply_activation(const Var& x, Activation a) {
  switch (a) {
    case Activation::kLinear: return x;
    case Activation::kSigmoid: return ad::sigmoid(x);
    case Activation::kTanh: return ad::tanh(x);
    case Activation::kSoftmax: return ad::softmax_rows(x);
  }
  return x;
}

Var dropout(const Var& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.size());
  const double s = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = keep(rng) ? s : 0.0;
  return x * Var::constant(x.shape(), std::move(mask));
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  const auto& sizes = spec_.layer_sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(in * out);
    for (auto& v : w) v = u(rng);
    layers_.push_back({Var::parameter({in, out}, std::move(w)), Var::parameter({1, out}, std::vector<double>(out, 0.0))});
    if (spec_.use_batchnorm && l + 2 < sizes.size()) norms_.emplace_back(out, spec_.batchnorm_momentum);
  }
}

Var Mlp::hidden(const Var& x, Mode mode, Rng* rng) {
  if (x.cols() != spec_.layer_sizes.front()) {
    throw ad::ShapeError("mlp input width " + std::to_string(x.cols()) + " != expected " +
                         std::to_string(spec_.layer_sizes.front()));
  }
  Var h = x;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    h = layers_[l].forward(h);
    if (spec_.use_batchnorm) h = norms_[l].forward(h, mode);
    h = ad::leaky_relu(h, spec_.leaky_slope);
    if (mode == Mode::kTrain && spec_.dropout_rate > 0.0) {
      if (rng == nullptr) throw std::invalid_argument("dropout in train mode needs an rng");
      h = dropout(h, spec_.dropout_rate, *rng);
    }
  }
  return h;
}

Var Mlp::head(const Var& features) const {
  return apply_activation(layers_.back().forward(features), spec_.output);
}

Var Mlp::forward(const Var& x, Mode mode, Rng* rng) { return head(hidden(x, mode, rng)); }

std::vector<Var> Mlp::parameters() const {
  std::vector<Var> out;
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  for (const auto& n : norms_) {
    out.push_back(n.gamma);
    out.push_back(n.beta);
  }
  return out;
}

std::vector<std::vector<double>> Mlp::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& p : parameters()) out.push_back(p.data());
  for (const auto& n : norms_) {
    out.push_back(n.running_mean);
    out.push_back(n.running_var);
  }
  return out;
}

void Mlp::restore(const std::vector<std::vector<double>>& state) {
  auto params = parameters();
  if (state.size() != params.size() + 2 * norms_.size()) {
    throw CheckpointError("parameter snapshot has " + std::to_string(state.size()) + " tensors, model expects " +
                          std::to_string(params.size() + 2 * norms_.size()));
  }
  std::size_t k = 0;
  for (auto& p : params) {
    if (state[k].size() != p.size()) throw CheckpointError("parameter snapshot tensor size mismatch");
    p.data() = state[k++];
  }
  for (auto& n : norms_) {
    n.running_mean = state[k++];
    n.running_var = state[k++];
  }
}

void adam_update(const AdamConfig& cfg, std::vector<double>& param, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v, std::int64_t t) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < param.size(); ++k) {
    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
    const double mhat = m[k] / c1;
    const double vhat = v[k] / c2;
    param[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(std::vector<Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_update(cfg_, params_[i].data(), params_[i].grad(), m_[i], v_[i], t_);
  }
}

Var polar_to_cartesian(const Var& polar) {
  if (polar.cols() != 2) throw ad::ShapeError("polar_to_cartesian expects n x 2, got " + polar.shape().str());
  const Var r = ad::slice_cols(polar, 0, 1);
  const Var theta = ad::slice_cols(polar, 1, 1);
  return ad::concat_cols({r * ad::cos(theta), r * ad::sin(theta)});
}

}  // namespace ltngan::nn
