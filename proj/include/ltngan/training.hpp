#pragma once

// Alternating discriminator / generator training with an optional fuzzy-logic
// penalty on the generator: L_G = alpha L_adv + lambda(e) L_logic + beta L_aux.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltngan/autodiff.hpp"
#include "ltngan/datasets.hpp"
#include "ltngan/neural.hpp"
#include "ltngan/predicates.hpp"
#include "ltngan/rng.hpp"
#include "ltngan/scheduling.hpp"

namespace ltngan::train {

using ad::Var;

enum class Dataset { kGaussian, kGrid, kRing, kMnist };

std::string to_string(Dataset d);
/// Throws std::invalid_argument listing the valid names.
Dataset dataset_from_string(const std::string& s);
const std::vector<std::string>& dataset_names();

struct TrainConfig {
  Dataset dataset = Dataset::kGaussian;
  std::string variant = "full_ltn_gan";
  std::uint64_t seed = 0;

  int epochs = 100;
  std::size_t batch_size = 32;
  std::size_t batches_per_epoch = 64;

  // Generator objective.
  double alpha = 1.0;
  double beta = 0.0;
  bool attach_kb = true;  // false: the knowledge base is only monitored
  sched::LambdaSchedule lambda = sched::LambdaSchedule::ramp(0.05, 0.30, 80);
  double real_label = 0.9;
  double fake_label = 0.1;

  bool adaptive_weights = false;
  sched::AdaptiveWeightConfig adaptive;
  sched::BacktrackConfig backtrack;
  bool train_predicates = true;  // grounding + logic updates of learned predicates

  nn::AdamConfig adam_g;
  nn::AdamConfig adam_d;
  nn::AdamConfig adam_predicates;
  // From epoch `start` on (when >= 0) every learning rate is multiplied by `factor`.
  struct LrAnneal {
    int start = -1;
    double factor = 0.1;
    bool operator==(const LrAnneal&) const = default;
  } lr_anneal;

  // Networks.
  std::size_t latent_dim = 2;
  double latent_noise = 0.1;
  std::size_t hidden = 128;
  double leaky_slope = 0.2;
  double d_dropout = 0.3;

  // Quantifier exponents for learned-predicate knowledge bases.
  double forall_p = 2.0;
  double exists_p = 8.0;

  // Grid.
  double grid_sigma = 0.008;
  double grid_tolerance = 0.05;
  double grid_on_scale = 0.15;
  double grid_cell_scale = 0.25;

  // Ring.
  data::RingGeometry ring;
  double ring_final_band = 0.15;
  bool ring_tighten = true;
  bool ring_simple = false;
  double ring_r_max = 3.0;

  // MNIST.
  std::string data_dir;
  std::size_t mnist_train_limit = 0;  // 0: all training images
  int classifier_epochs = 3;
  std::string classifier_path;  // reuse a saved classifier when present
  bool use_templates = true;
  int template_fade_epochs = 10;

  // Outputs.
  std::string out_dir;
  std::size_t eval_samples = 1000;
  int dump_every = 10;
  bool write_checkpoint = true;

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Paper-default settings for each dataset's full LTN run.
TrainConfig default_config(Dataset d);

struct EpochRecord {
  int epoch = 0;
  double lambda = 0.0;
  double loss_g = 0.0;
  double loss_g_adv = 0.0;
  double loss_logic = 0.0;
  double loss_aux = 0.0;
  double loss_d = 0.0;
  double d_accuracy = 0.0;
  double s_logic = 0.0;
  double aux_accuracy = 0.0;
  std::size_t backtracks = 0;
  std::vector<double> rule_sats;
  std::vector<double> rule_weights;
};

struct RunLog {
  std::vector<std::string> rule_names;
  std::vector<EpochRecord> records;

  std::string header() const;
  std::string row(const EpochRecord& r) const;
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static RunLog read_csv(const std::filesystem::path& path);
};

/// Non-finite losses and other failures inside the loop.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (acc_real + acc_fake) / 2 at threshold 0.5: a real sample needs p >= 0.5,
/// a fake one p < 0.5, so a constant 0.5 scores exactly one half.
double accuracy_from_outputs(const std::vector<double>& p_real, const std::vector<double>& p_fake);

class Generator {
 public:
  Generator(const TrainConfig& cfg, Rng& init, std::vector<double> templates = {});

  /// `labels` conditions MNIST generation; `fade` scales the template weight.
  Var forward(const Var& z, const std::vector<int>& labels, nn::Mode mode, double fade = 1.0);
  /// Standard-normal latent plus exploration noise (2D), or z ++ one-hot(label) (MNIST).
  Var sample_latent(std::size_t n, const std::vector<int>& labels, Rng& rng) const;

  std::vector<Var> parameters() const;
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& state);
  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  bool has_templates() const { return !templates_.empty(); }
  nn::Mlp& blend_head() { return blend_; }

 private:
  Dataset dataset_;
  std::size_t latent_dim_;
  double latent_noise_;
  double r_max_;
  nn::Mlp net_;
  nn::Mlp blend_;  // MNIST: [z; y] -> scalar blend logit
  std::vector<double> templates_;
};

class Discriminator {
 public:
  Discriminator(const TrainConfig& cfg, Rng& init);

  struct Output {
    Var prob;        // n x 1
    Var aux_logits;  // n x 10 (MNIST only)
  };
  Output forward(const Var& x, nn::Mode mode, Rng* dropout_rng);
  std::vector<Var> parameters() const;
  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  bool has_aux() const { return !aux_.layers().empty(); }
  nn::Mlp& aux() { return aux_; }

 private:
  nn::Mlp net_;
  nn::Mlp aux_;  // single linear layer over the trunk's last hidden features
};

/// Evaluation-mode accuracy of `d` on a real and a fake batch.
double discriminator_accuracy(Discriminator& d, const Var& real, const Var& fake);

struct DStepResult {
  double loss_real = 0.0;
  double loss_fake = 0.0;
  double loss = 0.0;
  double loss_aux = 0.0;
  double accuracy = 0.0;
};

struct GStepResult {
  double loss = 0.0;
  double loss_adv = 0.0;
  double loss_logic = 0.0;
  double loss_aux = 0.0;
  double aux_accuracy = 0.0;
  logic::SatisfactionReport report;
  Var fake;  // the generated batch (graph attached)
};

/// Everything one training run owns.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  /// One D update on `real` against detached fakes; leaves G gradients at zero.
  DStepResult discriminator_step(const Var& real, const std::vector<int>& real_labels);
  /// One G update (and predicate update) on a fresh latent batch; leaves D gradients at zero.
  GStepResult generator_step(const Var& real, double lambda, double fade);

  /// Runs every epoch, streaming the run log to out_dir when set.
  RunLog run();

  /// Called after each epoch's record is final. Must not draw from the
  /// trainer's streams if the run log is to stay reproducible.
  using EpochHook = std::function<void(const EpochRecord&, Trainer&)>;
  void set_epoch_hook(EpochHook hook) { hook_ = std::move(hook); }

  /// n generator samples in eval mode; MNIST labels cycle through 0..9.
  Var sample(std::size_t n, Rng& rng, std::vector<int>* labels = nullptr);
  /// Same, drawing from the evaluation stream.
  Var sample(std::size_t n, std::vector<int>* labels = nullptr) { return sample(n, streams_.eval, labels); }

  const TrainConfig& config() const { return cfg_; }
  Generator& generator() { return *gen_; }
  Discriminator& discriminator() { return *disc_; }
  predicates::ConstraintSystem& constraints() { return *constraints_; }
  RngStreams& streams() { return streams_; }
  const data::MnistSet* mnist() const { return mnist_ ? &*mnist_ : nullptr; }
  const std::vector<double>& templates() const { return templates_; }
  nn::Mlp* classifier();

  void save_checkpoint(const std::filesystem::path& path, int epoch) const;
  /// Restores network weights (and optimizer moments) saved by save_checkpoint; returns its epoch.
  std::int64_t load_checkpoint(const std::filesystem::path& path);

 private:
  Var real_batch(const std::vector<std::size_t>& idx, std::vector<int>* labels) const;
  std::vector<int> random_labels(std::size_t n, Rng& rng) const;
  void dump_samples(int epoch_number);

  TrainConfig cfg_;
  RngStreams streams_;
  std::optional<data::MnistSet> mnist_;
  std::vector<double> real_points_;  // 2D training set, n x 2
  std::vector<double> templates_;
  std::unique_ptr<predicates::ConstraintSystem> constraints_;
  std::unique_ptr<Generator> gen_;
  std::unique_ptr<Discriminator> disc_;
  nn::Adam opt_g_;
  nn::Adam opt_blend_;
  nn::Adam opt_d_;
  nn::Adam opt_aux_;
  nn::Adam opt_c_;
  double fade_ = 1.0;  // current template weight scale
  EpochHook hook_;
};

/// Directory holding the MNIST IDX files: cfg.data_dir, else $LTN_GAN_DATA_DIR, else "data/mnist".
std::filesystem::path mnist_dir(const TrainConfig& cfg);

/// Writes an n-image grid as a binary PGM (P5), `columns` images per row.
void write_pgm_montage(const std::filesystem::path& path, std::span<const double> images, std::size_t columns);

}  // namespace ltngan::train
