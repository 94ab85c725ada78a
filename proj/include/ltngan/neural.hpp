#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ltngan/autodiff.hpp"
#include "ltngan/rng.hpp"

namespace ltngan::nn {

using ad::Var;

enum class Activation { kLinear, kSigmoid, kTanh, kSoftmax };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

enum class Mode { kTrain, kEval };

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  double leaky_slope = 0.2;
  Activation output = Activation::kLinear;
  double dropout_rate = 0.0;  // hidden layers only
  bool use_batchnorm = false;  // hidden layers only
  double batchnorm_momentum = 0.9;

  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

/// Per-feature batch normalization with learned affine and running stats.
struct BatchNorm {
  static constexpr double kEps = 1e-8;

  Var gamma;
  Var beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;

  explicit BatchNorm(std::size_t width = 0, double momentum = 0.9);
  Var forward(const Var& x, Mode mode);
};

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out

  Var forward(const Var& x) const;
};

/// Fully connected network: linear -> (batchnorm) -> leaky relu -> (dropout)
/// per hidden layer, then linear -> output activation.
class Mlp {
 public:
  Mlp() = default;
  /// Uniform fan-in initialisation U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  Mlp(MlpSpec spec, Rng& rng);

  /// `rng` is consumed only for dropout in train mode; may be null otherwise.
  Var forward(const Var& x, Mode mode, Rng* rng = nullptr);
  /// Activations of the last hidden layer (input to the output layer).
  Var hidden(const Var& x, Mode mode, Rng* rng = nullptr);
  /// Output layer applied to hidden features.
  Var head(const Var& features) const;

  std::vector<Var> parameters() const;
  const MlpSpec& spec() const { return spec_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }
  std::vector<BatchNorm>& norms() { return norms_; }
  const std::vector<BatchNorm>& norms() const { return norms_; }

  /// Flat copies of every parameter tensor and batchnorm running statistic.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& state);

 private:
  MlpSpec spec_;
  std::vector<Linear> layers_;
  std::vector<BatchNorm> norms_;
};

Var apply_activation(const Var& x, Activation a);
Var dropout(const Var& x, double rate, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// One bias-corrected Adam update of a single coordinate array; `t` is 1-based.
void adam_update(const AdamConfig& cfg, std::vector<double>& param, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v, std::int64_t t);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var> params, AdamConfig cfg = {});

  void zero_grad();
  void step();

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const std::vector<Var>& params() const { return params_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<Var> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

/// Maps an n x 2 batch of (r, theta) rows to (r cos theta, r sin theta).
Var polar_to_cartesian(const Var& polar);

// Checkpoint files: "LTNGCKPT" magic, u32 version, then little-endian
// length-prefixed records. See docs/checkpoint-format.md.
struct ModelState {
  std::string name;
  MlpSpec spec;
  std::vector<std::vector<double>> tensors;  // Mlp::snapshot() order
  std::int64_t adam_steps = 0;
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::int64_t epoch = 0;
  std::string rng_state;
  std::vector<ModelState> models;

  const ModelState& model(const std::string& name) const;
};

ModelState capture(const std::string& name, const Mlp& mlp, const Adam* opt = nullptr);
/// Loads tensors (and optimizer moments when `opt` is given) into existing objects.
void apply(const ModelState& state, Mlp& mlp, Adam* opt = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ltngan::nn
