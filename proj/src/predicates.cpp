#include "ltngan/predicates.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ltngan::predicates {

namespace {

Var col(const Var& xy, std::size_t c) { return ad::slice_cols(xy, c, 1); }

void require_points(const Var& xy, const char* who) {
  if (xy.cols() != 2) throw ad::ShapeError(std::string(who) + " expects n x 2 points, got " + xy.shape().str());
}

}  // namespace

Var gaussian_in_range(const Var& xy) {
  require_points(xy, "gaussian_in_range");
  Var linf = ad::maximum(ad::abs(col(xy, 0)), ad::abs(col(xy, 1)));
  return ad::sigmoid(3.0 - linf);
}

Var gaussian_shape(const Var& xy) {
  require_points(xy, "gaussian_shape");
  Var sq = ad::square(col(xy, 0)) + ad::square(col(xy, 1));
  return ad::exp(sq * (-0.5 / (2.5 * 2.5)));
}

Var radius(const Var& xy) {
  require_points(xy, "radius");
  return ad::sqrt(ad::square(col(xy, 0)) + ad::square(col(xy, 1)));
}

Var distance_to(const Var& xy, Point c) {
  require_points(xy, "distance_to");
  return ad::sqrt(ad::square(col(xy, 0) - c.x) + ad::square(col(xy, 1) - c.y));
}

Var min_distance(const Var& xy, const std::vector<Point>& centers) {
  if (centers.empty()) throw std::invalid_argument("min_distance: no centers");
  Var d = distance_to(xy, centers.front());
  for (std::size_t i = 1; i < centers.size(); ++i) d = ad::minimum(d, distance_to(xy, centers[i]));
  return d;
}

Var gaussian_bump(const Var& d, double scale) { return ad::exp(ad::square(d) * (-0.5 / (scale * scale))); }

Var band_truth(const Var& r, double ring_radius, double band, double sharpness) {
  return ad::sigmoid((band - ad::abs(r - ring_radius)) * sharpness);
}

Var dead_zone_truth(const Var& r, const RingGeometry& g, double sharpness) {
  return ad::sigmoid((r - g.dead_lo()) * sharpness) * ad::sigmoid((g.dead_hi() - r) * sharpness);
}

Var near_radius_truth(const Var& r, double ring_radius, double band) {
  return gaussian_bump(r - ring_radius, band / 2.0);
}

nn::MlpSpec learned_predicate_spec(std::size_t num_features) {
  nn::MlpSpec spec;
  spec.layer_sizes = {num_features, 32, 32, 1};
  spec.output = nn::Activation::kSigmoid;
  return spec;
}

std::string in_cell_name(std::size_t i) { return "InCell" + std::to_string(i + 1); }
std::string is_digit_name(std::size_t k) { return "IsDigit" + std::to_string(k); }

logic::KnowledgeBase build_gaussian_kb() {
  using namespace logic;
  // The batch mean of the per-sample truths, i.e. a power mean with p = 1.
  return KnowledgeBase({{"range_and_shape", forall(land(pred("InRange"), pred("GaussianShape")), 1.0), 1.0}});
}

logic::KnowledgeBase build_grid_kb(std::size_t num_centers, QuantifierExponents q) {
  using namespace logic;
  if (num_centers == 0) throw std::invalid_argument("grid knowledge base needs at least one center");
  std::vector<Rule> rules{{"on_grid", forall(pred("OnGrid"), q.forall_p), 1.0}};
  for (std::size_t i = 0; i < num_centers; ++i) {
    rules.push_back({"cover_cell" + std::to_string(i + 1), exists(pred(in_cell_name(i)), q.exists_p), 1.0});
  }
  return KnowledgeBase(std::move(rules));
}

logic::KnowledgeBase build_ring_kb(QuantifierExponents q, bool adaptive, bool simple) {
  using namespace logic;
  auto inner = pred("InnerRing");
  auto outer = pred("OuterRing");
  std::vector<Rule> rules{
      {"inner_exists", exists(inner, q.exists_p), 1.0},
      {"outer_exists", exists(outer, q.exists_p), 1.0},
      {"exclusive", forall(lnot(land(inner, outer)), q.forall_p), 1.0},
      {"avoid_dead_zone", forall(lnot(pred("DeadZone")), q.forall_p), 1.0},
  };
  if (!simple) {
    rules.push_back({"spatial_consistency",
                     forall(land(implies(inner, pred("InnerBand")), implies(outer, pred("OuterBand"))), q.forall_p),
                     1.0});
    rules.push_back({"balance", mean_balance(inner, outer), 1.0});
    rules.push_back({"precision",
                     forall(land(implies(inner, pred("NearInnerCenter")), implies(outer, pred("NearOuterCenter"))),
                            q.forall_p),
                     1.0});
  }
  return KnowledgeBase(std::move(rules), 0.1, 10.0, adaptive);
}

logic::KnowledgeBase build_mnist_kb(double forall_p) {
  using namespace logic;
  std::vector<FormulaPtr> digits;
  for (std::size_t k = 0; k < data::kMnistClasses; ++k) digits.push_back(pred(is_digit_name(k)));
  std::vector<FormulaPtr> pairs;
  for (std::size_t k = 0; k < digits.size(); ++k) {
    for (std::size_t m = k + 1; m < digits.size(); ++m) pairs.push_back(lnot(land(digits[k], digits[m])));
  }
  return KnowledgeBase({
      {"some_digit", forall(lor_all(digits, OrKind::kProbSum), forall_p), 1.0},
      {"one_digit", forall(land_all(pairs), forall_p), 1.0},
      {"valid_structure", forall(implies(pred("ValidPixels"), land(pred("IsConnected"), pred("IsComplete"))), forall_p),
       1.0},
      {"proper_intensity", forall(pred("HasProperIntensity"), forall_p), 1.0},
  });
}

// ---- MNIST ----

std::size_t count_components(std::span<const double> image, double threshold) {
  constexpr std::size_t side = data::kMnistSide;
  if (image.size() != data::kMnistPixels) throw std::invalid_argument("count_components expects 784 pixels");
  std::vector<char> seen(image.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t components = 0;
  for (std::size_t start = 0; start < image.size(); ++start) {
    if (seen[start] || image[start] <= threshold) continue;
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t r = p / side, c = p % side;
      auto visit = [&](std::size_t q) {
        if (!seen[q] && image[q] > threshold) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (r > 0) visit(p - side);
      if (r + 1 < side) visit(p + side);
      if (c > 0) visit(p - 1);
      if (c + 1 < side) visit(p + 1);
    }
  }
  return components;
}

ValidityTruths validity_predicates(const Var& images) {
  if (images.cols() != data::kMnistPixels) {
    throw ad::ShapeError("validity predicates expect n x 784 images, got " + images.shape().str());
  }
  const std::size_t n = images.rows();
  ValidityTruths t;
  Var inside = ad::sigmoid((images - 0.02) * 20.0) * ad::sigmoid((0.98 - images) * 20.0);
  t.valid_pixels = ad::mean_cols(inside);
  Var dev = (ad::mean_cols(images) - 0.13) * 10.0;
  t.has_proper_intensity = ad::exp(-ad::square(dev));

  std::vector<double> connected(n), complete(n);
  const auto& px = images.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> img(px.data() + i * data::kMnistPixels, data::kMnistPixels);
    const std::size_t c = count_components(img);
    connected[i] = c == 0 ? 0.0 : 1.0 / static_cast<double>(c);
    const double fg = static_cast<double>(std::count_if(img.begin(), img.end(), [](double v) { return v > 0.3; })) /
                      static_cast<double>(data::kMnistPixels);
    complete[i] = 1.0 / (1.0 + std::exp(-10.0 * (fg - 0.05)));
  }
  t.is_connected = Var::constant({n, 1}, std::move(connected));
  t.is_complete = Var::constant({n, 1}, std::move(complete));
  return t;
}

std::vector<double> class_templates(const data::MnistSet& set, double threshold) {
  std::vector<double> sums(data::kMnistClasses * data::kMnistPixels, 0.0);
  std::vector<std::size_t> counts(data::kMnistClasses, 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto img = set.image(i);
    const std::size_t k = static_cast<std::size_t>(set.labels[i]);
    ++counts[k];
    for (std::size_t p = 0; p < data::kMnistPixels; ++p) sums[k * data::kMnistPixels + p] += img[p];
  }
  for (std::size_t k = 0; k < data::kMnistClasses; ++k) {
    if (counts[k] == 0) throw std::invalid_argument("no training images of digit " + std::to_string(k));
    for (std::size_t p = 0; p < data::kMnistPixels; ++p) {
      double& v = sums[k * data::kMnistPixels + p];
      v = (v / static_cast<double>(counts[k]) > threshold) ? 1.0 : 0.0;
    }
  }
  return sums;
}

void freeze(nn::Mlp& net) {
  for (auto& p : net.parameters()) p.node()->requires_grad = false;
}

nn::Mlp train_digit_classifier(const data::MnistSet& set, int epochs, std::size_t batch, Rng& rng,
                               nn::AdamConfig adam) {
  if (set.size() == 0) throw std::invalid_argument("cannot train the digit classifier on an empty set");
  if (epochs <= 0 || batch == 0) throw std::invalid_argument("classifier epochs and batch must be positive");
  nn::MlpSpec spec;
  spec.layer_sizes = {data::kMnistPixels, 128, data::kMnistClasses};
  spec.output = nn::Activation::kLinear;  // logits during training
  nn::Mlp net(spec, rng);
  nn::Adam opt(net.parameters(), adam);

  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t m = std::min(batch, order.size() - b);
      std::vector<double> x(m * data::kMnistPixels);
      std::vector<int> y(m);
      for (std::size_t j = 0; j < m; ++j) {
        const auto img = set.image(order[b + j]);
        std::copy(img.begin(), img.end(), x.begin() + static_cast<std::ptrdiff_t>(j * data::kMnistPixels));
        y[j] = set.labels[order[b + j]];
      }
      opt.zero_grad();
      Var loss = ad::cross_entropy_logits(net.forward(Var::constant({m, data::kMnistPixels}, std::move(x)), nn::Mode::kTrain), y);
      ad::backward(loss);
      opt.step();
    }
  }
  // Same weights, probabilities at the output.
  nn::MlpSpec frozen = spec;
  frozen.output = nn::Activation::kSoftmax;
  nn::Mlp out(frozen, rng);
  out.restore(net.snapshot());
  freeze(out);
  return out;
}

double classifier_accuracy(nn::Mlp& classifier, std::span<const double> images, std::span<const int> labels) {
  const std::size_t n = labels.size();
  if (n == 0) return 0.0;
  if (images.size() != n * data::kMnistPixels) throw std::invalid_argument("image / label count mismatch");
  Var probs = classifier.forward(Var::constant({n, data::kMnistPixels}, {images.begin(), images.end()}), nn::Mode::kEval);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < probs.cols(); ++k) {
      if (probs.at(i, k) > probs.at(i, best)) best = k;
    }
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double classifier_accuracy(nn::Mlp& classifier, const data::MnistSet& set) {
  return classifier_accuracy(classifier, set.images, set.labels);
}

// ---- constraint systems ----

void ConstraintSystem::update_weights(const std::vector<double>& rule_sats, const sched::AdaptiveWeightConfig& cfg) {
  if (!kb_.adaptive()) return;
  if (rule_sats.size() != kb_.size()) throw std::invalid_argument("one satisfaction per rule required");
  for (std::size_t i = 0; i < kb_.size(); ++i) {
    const double s = std::clamp(rule_sats[i], 0.0, 1.0);
    kb_.set_weight(i, sched::clip(sched::adaptive_weight_update(cfg, s, kb_.rules()[i].weight), kb_.w_min(), kb_.w_max()));
  }
}

GaussianConstraints::GaussianConstraints() : ConstraintSystem(build_gaussian_kb()) {}

logic::PredicateTruths GaussianConstraints::truths(const Var& samples) {
  return {{"InRange", gaussian_in_range(samples)}, {"GaussianShape", gaussian_shape(samples)}};
}

namespace {

std::vector<Var> collect(const std::vector<LearnedPredicate>& preds) {
  std::vector<Var> out;
  for (const auto& p : preds) {
    for (auto& v : p.net.parameters()) out.push_back(v);
  }
  return out;
}

// Stacks real and fake rows with uniform probes over the box and probes
// scattered around `anchors`; every row is a constant.
Var probe_batch(const Var& real, const Var& fake, double extent, const std::vector<Point>& anchors,
                double anchor_sigma, Rng& rng) {
  std::vector<double> rows(real.data());
  rows.insert(rows.end(), fake.data().begin(), fake.data().end());
  const std::size_t n = std::max<std::size_t>(real.rows(), 16);
  std::uniform_real_distribution<double> u(-extent, extent);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng), y = u(rng);
    rows.push_back(x);
    rows.push_back(y);
  }
  if (!anchors.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, anchors.size() - 1);
    std::normal_distribution<double> g(0.0, anchor_sigma);
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = anchors[pick(rng)];
      const double dx = g(rng), dy = g(rng);
      rows.push_back(a.x + dx);
      rows.push_back(a.y + dy);
    }
  }
  const std::size_t count = rows.size() / 2;
  return Var::constant({count, 2}, std::move(rows));
}

Var grounding(std::vector<LearnedPredicate>& preds, const Var& probes) {
  Var total;
  for (auto& p : preds) {
    Var term = ad::bce_loss(p.truth(probes), ad::detach(p.reference(probes)));
    total = total.valid() ? total + term : term;
  }
  return total * (1.0 / static_cast<double>(preds.size()));
}

}  // namespace

GridConstraints::GridConstraints(GridPredicateConfig cfg, Rng& init)
    : ConstraintSystem(build_grid_kb(cfg.centers.size(), cfg.exponents)), cfg_(std::move(cfg)) {
  if (cfg_.on_grid_scale <= 0.0 || cfg_.in_cell_scale <= 0.0) throw std::invalid_argument("grid predicate scales must be positive");
  const auto centers = cfg_.centers;
  const double on_scale = cfg_.on_grid_scale, cell_scale = cfg_.in_cell_scale;

  LearnedPredicate on;
  on.name = "OnGrid";
  on.net = nn::Mlp(learned_predicate_spec(centers.size()), init);
  // Bounded kernel features: the nets cannot extrapolate truth far from the grid.
  on.features = [centers, on_scale](const Var& xy) {
    std::vector<Var> parts;
    for (const auto& c : centers) parts.push_back(gaussian_bump(distance_to(xy, c), on_scale));
    return ad::concat_cols(parts);
  };
  on.reference = [centers, on_scale](const Var& xy) { return gaussian_bump(min_distance(xy, centers), on_scale); };
  preds_.push_back(std::move(on));

  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Point c = centers[i];
    LearnedPredicate cell;
    cell.name = in_cell_name(i);
    cell.net = nn::Mlp(learned_predicate_spec(2), init);
    cell.features = [c, cell_scale](const Var& xy) {
      const Var d = distance_to(xy, c);
      return ad::concat_cols({gaussian_bump(d, cell_scale), gaussian_bump(d, 2.0 * cell_scale)});
    };
    cell.reference = [c, cell_scale](const Var& xy) { return gaussian_bump(distance_to(xy, c), cell_scale); };
    preds_.push_back(std::move(cell));
  }
}

logic::PredicateTruths GridConstraints::truths(const Var& samples) {
  require_points(samples, "grid predicates");
  logic::PredicateTruths t;
  for (auto& p : preds_) t[p.name] = p.truth(samples);
  return t;
}

std::vector<Var> GridConstraints::parameters() const { return collect(preds_); }

std::optional<Var> GridConstraints::grounding_loss(const Var& real, const Var& fake, Rng& rng) {
  return grounding(preds_, probe_batch(real, fake, cfg_.probe_extent, cfg_.centers, cfg_.in_cell_scale, rng));
}

RingConstraints::RingConstraints(RingPredicateConfig cfg, Rng& init)
    : ConstraintSystem(build_ring_kb(cfg.exponents, cfg.adaptive, cfg.simple)), cfg_(std::move(cfg)), band_(cfg_.geometry.band) {
  cfg_.geometry.validate();
  if (!(cfg_.final_band > 0.0) || cfg_.final_band > cfg_.geometry.band) {
    throw std::invalid_argument("ring final band must lie in (0, initial band]");
  }
  auto features = [](const Var& xy) { return ad::concat_cols({xy, radius(xy)}); };
  auto add = [&](const std::string& name, std::function<Var(const Var&)> reference) {
    LearnedPredicate p;
    p.name = name;
    p.net = nn::Mlp(learned_predicate_spec(3), init);
    p.features = features;
    p.reference = std::move(reference);
    preds_.push_back(std::move(p));
  };
  // References read the current band through `this`; the object is pinned
  // (non-copyable) so the capture stays valid.
  add("InnerRing", [this](const Var& xy) { return band_truth(radius(xy), cfg_.geometry.r_inner, band_, cfg_.sharpness); });
  add("OuterRing", [this](const Var& xy) { return band_truth(radius(xy), cfg_.geometry.r_outer, band_, cfg_.sharpness); });
  add("DeadZone", [this](const Var& xy) { return dead_zone_truth(radius(xy), current_geometry(), cfg_.sharpness); });
  if (!cfg_.simple) {
    add("NearInnerCenter", [this](const Var& xy) { return near_radius_truth(radius(xy), cfg_.geometry.r_inner, band_); });
    add("NearOuterCenter", [this](const Var& xy) { return near_radius_truth(radius(xy), cfg_.geometry.r_outer, band_); });
  }
}

RingGeometry RingConstraints::current_geometry() const {
  RingGeometry g = cfg_.geometry;
  g.band = band_;
  return g;
}

void RingConstraints::begin_epoch(int epoch, int total_epochs) {
  if (!cfg_.tighten || total_epochs <= 1) {
    band_ = cfg_.geometry.band;
    return;
  }
  const double t = std::clamp(static_cast<double>(epoch) / (total_epochs - 1), 0.0, 1.0);
  band_ = cfg_.geometry.band + t * (cfg_.final_band - cfg_.geometry.band);
}

logic::PredicateTruths RingConstraints::truths(const Var& samples) {
  require_points(samples, "ring predicates");
  logic::PredicateTruths t;
  for (auto& p : preds_) t[p.name] = p.truth(samples);
  if (!cfg_.simple) {
    Var r = radius(samples);
    t["InnerBand"] = band_truth(r, cfg_.geometry.r_inner, band_, cfg_.sharpness);
    t["OuterBand"] = band_truth(r, cfg_.geometry.r_outer, band_, cfg_.sharpness);
  }
  return t;
}

std::vector<Var> RingConstraints::parameters() const { return collect(preds_); }

std::optional<Var> RingConstraints::grounding_loss(const Var& real, const Var& fake, Rng& rng) {
  return grounding(preds_, probe_batch(real, fake, cfg_.probe_extent, {}, 0.0, rng));
}

MnistConstraints::MnistConstraints(nn::Mlp classifier, double forall_p)
    : ConstraintSystem(build_mnist_kb(forall_p)), classifier_(std::move(classifier)) {
  const auto& sizes = classifier_.spec().layer_sizes;
  if (classifier_.layers().empty() || sizes.front() != data::kMnistPixels || sizes.back() != data::kMnistClasses) {
    throw std::invalid_argument("MNIST constraints need a trained [784, ..., 10] digit classifier");
  }
  if (classifier_.spec().output != nn::Activation::kSoftmax) {
    throw std::invalid_argument("MNIST digit classifier must end in softmax");
  }
  freeze(classifier_);
}

logic::PredicateTruths MnistConstraints::truths(const Var& images) {
  if (images.cols() != data::kMnistPixels) {
    throw ad::ShapeError("MNIST predicates expect n x 784 images, got " + images.shape().str());
  }
  logic::PredicateTruths t;
  Var probs = classifier_.forward(images, nn::Mode::kEval);
  for (std::size_t k = 0; k < data::kMnistClasses; ++k) t[is_digit_name(k)] = ad::slice_cols(probs, k, 1);
  auto v = validity_predicates(images);
  t["ValidPixels"] = v.valid_pixels;
  t["IsConnected"] = v.is_connected;
  t["IsComplete"] = v.is_complete;
  t["HasProperIntensity"] = v.has_proper_intensity;
  return t;
}

}  // namespace ltngan::predicates
