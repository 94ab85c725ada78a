#pragma once

// Predicate sets and knowledge bases for the four tasks. Every predicate maps
// a batch (n x 2 points or n x 784 images) to an n x 1 column of truths.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ltngan/autodiff.hpp"
#include "ltngan/datasets.hpp"
#include "ltngan/fuzzy.hpp"
#include "ltngan/neural.hpp"
#include "ltngan/rng.hpp"
#include "ltngan/scheduling.hpp"

namespace ltngan::predicates {

using ad::Var;
using data::Point;
using data::RingGeometry;

// ---- analytic 2D predicates ----

/// sigmoid(3 - max(|x|, |y|)).
Var gaussian_in_range(const Var& xy);
/// exp(-0.5 (|p| / 2.5)^2).
Var gaussian_shape(const Var& xy);

Var radius(const Var& xy);
Var distance_to(const Var& xy, Point c);
Var min_distance(const Var& xy, const std::vector<Point>& centers);
/// exp(-0.5 (d / scale)^2).
Var gaussian_bump(const Var& d, double scale);

/// sigmoid(k (band - |r - ring_radius|)): soft membership of a radial band.
Var band_truth(const Var& r, double ring_radius, double band, double sharpness);
/// sigmoid(k (r - dead_lo)) sigmoid(k (dead_hi - r)).
Var dead_zone_truth(const Var& r, const RingGeometry& g, double sharpness);
/// exp(-0.5 ((r - ring_radius) / (band / 2))^2).
Var near_radius_truth(const Var& r, double ring_radius, double band);

// ---- learned predicates ----

/// Small MLP with a sigmoid head over hand-built features of the input.
/// `reference` gives the soft labels it is grounded against.
struct LearnedPredicate {
  std::string name;
  nn::Mlp net;
  std::function<Var(const Var&)> features;
  std::function<Var(const Var&)> reference;

  Var truth(const Var& xy) { return net.forward(features(xy), nn::Mode::kEval); }
};

/// [features, 32, 32, 1] with sigmoid head.
nn::MlpSpec learned_predicate_spec(std::size_t num_features);

// ---- knowledge bases ----

struct QuantifierExponents {
  double forall_p = 2.0;
  double exists_p = 8.0;  // closer to max for coverage / existence rules
};

/// forall (InRange & GaussianShape) with arithmetic-mean aggregation.
logic::KnowledgeBase build_gaussian_kb();
/// forall OnGrid, then exists InCell_i for each center.
logic::KnowledgeBase build_grid_kb(std::size_t num_centers, QuantifierExponents q = {});
/// The seven ring rules; `simple` keeps only existence, exclusivity and dead zone.
logic::KnowledgeBase build_ring_kb(QuantifierExponents q = {}, bool adaptive = true, bool simple = false);
/// Class coverage, class exclusivity, validity and intensity rules.
logic::KnowledgeBase build_mnist_kb(double forall_p = 2.0);

std::string in_cell_name(std::size_t i);
std::string is_digit_name(std::size_t k);

// ---- MNIST ----

struct ValidityTruths {
  Var valid_pixels;          // differentiable
  Var is_connected;          // constant (detached)
  Var is_complete;           // constant (detached)
  Var has_proper_intensity;  // differentiable
};

/// Number of 4-connected components among pixels above `threshold`.
std::size_t count_components(std::span<const double> image, double threshold = 0.3);
ValidityTruths validity_predicates(const Var& images);

/// Binarized class means, 10 x 784 row-major.
std::vector<double> class_templates(const data::MnistSet& set, double threshold = 0.5);

/// [784, 128, 10] softmax classifier trained on real digits.
nn::Mlp train_digit_classifier(const data::MnistSet& set, int epochs, std::size_t batch, Rng& rng,
                               nn::AdamConfig adam = {});
/// Fraction of rows whose argmax matches the label.
double classifier_accuracy(nn::Mlp& classifier, const data::MnistSet& set);
double classifier_accuracy(nn::Mlp& classifier, std::span<const double> images, std::span<const int> labels);
/// Excludes every parameter from gradient tracking.
void freeze(nn::Mlp& net);

// ---- per-dataset constraint systems ----

/// Owns a knowledge base together with the predicates it refers to.
class ConstraintSystem {
 public:
  virtual ~ConstraintSystem() = default;
  ConstraintSystem(const ConstraintSystem&) = delete;
  ConstraintSystem& operator=(const ConstraintSystem&) = delete;

  const logic::KnowledgeBase& kb() const { return kb_; }
  logic::KnowledgeBase& kb() { return kb_; }

  virtual logic::PredicateTruths truths(const Var& samples) = 0;
  logic::SatisfactionReport evaluate(const Var& samples) { return logic::kb_satisfaction(kb_, truths(samples)); }

  /// Trainable predicate parameters (empty for analytic / frozen sets).
  virtual std::vector<Var> parameters() const { return {}; }
  /// Supervision for learned predicates on real, detached fake and probe points.
  virtual std::optional<Var> grounding_loss(const Var& /*real*/, const Var& /*fake*/, Rng& /*rng*/) {
    return std::nullopt;
  }
  virtual void begin_epoch(int /*epoch*/, int /*total_epochs*/) {}

  /// Applies the adaptive rule to every rule weight when the KB is adaptive.
  void update_weights(const std::vector<double>& rule_sats, const sched::AdaptiveWeightConfig& cfg);

 protected:
  ConstraintSystem() = default;
  explicit ConstraintSystem(logic::KnowledgeBase kb) : kb_(std::move(kb)) {}

  logic::KnowledgeBase kb_;
};

class GaussianConstraints : public ConstraintSystem {
 public:
  GaussianConstraints();
  logic::PredicateTruths truths(const Var& samples) override;
};

struct GridPredicateConfig {
  std::vector<Point> centers = data::default_grid_centers();
  double on_grid_scale = 0.15;
  double in_cell_scale = 0.25;
  double probe_extent = 1.5;
  QuantifierExponents exponents;
};

class GridConstraints : public ConstraintSystem {
 public:
  GridConstraints(GridPredicateConfig cfg, Rng& init);
  logic::PredicateTruths truths(const Var& samples) override;
  std::vector<Var> parameters() const override;
  std::optional<Var> grounding_loss(const Var& real, const Var& fake, Rng& rng) override;

  std::vector<LearnedPredicate>& predicates() { return preds_; }

 private:
  GridPredicateConfig cfg_;
  std::vector<LearnedPredicate> preds_;
};

struct RingPredicateConfig {
  RingGeometry geometry;
  double final_band = 0.15;  // band half-width reached at the last epoch
  bool tighten = true;
  double sharpness = 20.0;
  double probe_extent = 3.0;
  bool adaptive = true;
  bool simple = false;
  QuantifierExponents exponents;
};

class RingConstraints : public ConstraintSystem {
 public:
  RingConstraints(RingPredicateConfig cfg, Rng& init);
  logic::PredicateTruths truths(const Var& samples) override;
  std::vector<Var> parameters() const override;
  std::optional<Var> grounding_loss(const Var& real, const Var& fake, Rng& rng) override;
  /// Linear band tightening from geometry.band to final_band.
  void begin_epoch(int epoch, int total_epochs) override;

  double band() const { return band_; }
  RingGeometry current_geometry() const;
  std::vector<LearnedPredicate>& predicates() { return preds_; }

 private:
  RingPredicateConfig cfg_;
  double band_;
  std::vector<LearnedPredicate> preds_;
};

class MnistConstraints : public ConstraintSystem {
 public:
  /// Throws if `classifier` is not a trained [784, ..., 10] network.
  explicit MnistConstraints(nn::Mlp classifier, double forall_p = 2.0);
  logic::PredicateTruths truths(const Var& images) override;

  nn::Mlp& classifier() { return classifier_; }

 private:
  nn::Mlp classifier_;
};

}  // namespace ltngan::predicates
