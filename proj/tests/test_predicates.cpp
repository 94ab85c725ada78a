#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ltngan/predicates.hpp"
#include "test_util.hpp"

namespace ad = ltngan::ad;
namespace logic = ltngan::logic;
namespace pr = ltngan::predicates;
namespace data = ltngan::data;
namespace nn = ltngan::nn;
using ad::Var;
using ltngan::Rng;
using ltngan::testing::column;
using ltngan::testing::uniform;

namespace {

Var points(std::vector<double> xy) {
  const std::size_t n = xy.size() / 2;
  return Var::constant({n, 2}, std::move(xy));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

logic::PredicateTruths grid_truths(const std::vector<double>& on, const std::vector<std::vector<double>>& cells) {
  logic::PredicateTruths t{{"OnGrid", column(on)}};
  for (std::size_t i = 0; i < cells.size(); ++i) t[pr::in_cell_name(i)] = column(cells[i]);
  return t;
}

}  // namespace

TEST(Predicates, GaussianInRange) {
  const Var t = pr::gaussian_in_range(points({0, 0, 3, 0, 10, 10}));
  EXPECT_NEAR(t.at(0, 0), sigmoid(3.0), 1e-15);
  EXPECT_NEAR(t.at(0, 0), 0.95257, 5e-6);
  EXPECT_NEAR(t.at(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(t.at(2, 0), sigmoid(-7.0), 1e-15);
  EXPECT_NEAR(t.at(2, 0), 0.00091, 5e-6);
}

TEST(Predicates, GaussianShape) {
  const Var t = pr::gaussian_shape(points({0, 0, 1.5, 2.0, 3.0, 4.0}));
  EXPECT_NEAR(t.at(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(t.at(1, 0), std::exp(-0.5), 1e-12);
  EXPECT_NEAR(t.at(1, 0), 0.60653, 5e-6);
  EXPECT_NEAR(t.at(2, 0), std::exp(-2.0), 1e-12);
}

TEST(Predicates, GaussianKnowledgeBase) {
  pr::GaussianConstraints cs;
  ASSERT_EQ(cs.kb().size(), 1u);
  EXPECT_NEAR(cs.evaluate(points({0, 0, 0, 0, 0, 0})).s_logic, sigmoid(3.0), 1e-12);
  EXPECT_LT(cs.evaluate(points({40, 40, -50, 30})).s_logic, 1e-6);
  const double mixed = cs.evaluate(points({0, 0, 8, 8})).s_logic;
  EXPECT_GT(mixed, 0.0);
  EXPECT_LT(mixed, 1.0);
  // Arithmetic-mean aggregation: the mean of the per-sample products.
  const double a = sigmoid(3.0), b = sigmoid(-5.0) * std::exp(-0.5 * 128.0 / 6.25);
  EXPECT_NEAR(mixed, 0.5 * (a + b), 1e-12);
}

TEST(Predicates, AnalyticPredicatesBoundedAndDifferentiable) {
  std::mt19937_64 rng(10);
  const data::RingGeometry g;
  const std::vector<std::function<Var(const Var&)>> preds{
      pr::gaussian_in_range,
      pr::gaussian_shape,
      [](const Var& xy) { return pr::gaussian_bump(pr::min_distance(xy, data::default_grid_centers()), 0.15); },
      [g](const Var& xy) { return pr::band_truth(pr::radius(xy), g.r_inner, g.band, 20.0); },
      [g](const Var& xy) { return pr::dead_zone_truth(pr::radius(xy), g, 20.0); },
      [g](const Var& xy) { return pr::near_radius_truth(pr::radius(xy), g.r_outer, g.band); },
  };
  for (std::size_t k = 0; k < preds.size(); ++k) {
    for (int trial = 0; trial < 20; ++trial) {
      Var xy = Var::parameter({4, 2}, uniform(8, -2.5, 2.5, rng));
      const Var t = preds[k](xy);
      for (double v : t.data()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
      ASSERT_LT(ad::finite_difference_check([&] { return ad::sum(preds[k](xy)); }, {xy}).max_error, 1e-4)
          << "predicate " << k;
    }
  }
}

TEST(Predicates, GridKnowledgeBaseShape) {
  const auto kb = pr::build_grid_kb(4);
  ASSERT_EQ(kb.size(), 5u);
  EXPECT_EQ(kb.rule_names().front(), "on_grid");
}

TEST(Predicates, GridIdealTruths) {
  const auto kb = pr::build_grid_kb(4);
  // Four samples, one per center, ideal predicates.
  std::vector<std::vector<double>> cells(4, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < 4; ++i) cells[i][i] = 1.0;
  const auto all = logic::kb_satisfaction(kb, grid_truths({1, 1, 1, 1}, cells));
  for (double s : all.rule_sats) EXPECT_GT(s, 0.8);

  // Everything in cell 1.
  std::vector<std::vector<double>> one(4, std::vector<double>(4, 0.0));
  one[0] = {1, 1, 1, 1};
  const auto single = logic::kb_satisfaction(kb, grid_truths({1, 1, 1, 1}, one));
  EXPECT_NEAR(single.rule_sats[1], 1.0, 1e-9);
  for (std::size_t i = 2; i < 5; ++i) EXPECT_LT(single.rule_sats[i], 1e-6);
  EXPECT_LT(single.s_logic, all.s_logic);
}

TEST(Predicates, GridExistsMonotoneUnderAddedSample) {
  const auto kb = pr::build_grid_kb(4);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 10;
    std::vector<std::vector<double>> cells(4);
    for (auto& c : cells) c = uniform(n, 0, 0.2, rng);
    std::vector<double> on = uniform(n, 0, 1, rng);
    const double before = logic::kb_satisfaction(kb, grid_truths(on, cells)).rule_sats[2];
    on.push_back(0.5);
    for (auto& c : cells) c.push_back(0.05);
    cells[1].back() = 0.95;
    const double after = logic::kb_satisfaction(kb, grid_truths(on, cells)).rule_sats[2];
    ASSERT_GE(after, before - 1e-12);
  }
}

TEST(Predicates, GridLearnedPredicatesStayBoundedFarAway) {
  Rng init(1);
  pr::GridConstraints cs(pr::GridPredicateConfig{}, init);
  const auto t = cs.truths(points({0.5, 0.5, 40, -40, -300, 12}));
  for (const auto& [name, v] : t) {
    for (double x : v.data()) {
      ASSERT_GE(x, 0.0) << name;
      ASSERT_LE(x, 1.0) << name;
    }
  }
  // Far points share the feature vector of "nowhere near the grid".
  EXPECT_DOUBLE_EQ(t.at("OnGrid").at(1, 0), t.at("OnGrid").at(2, 0));
  EXPECT_FALSE(cs.parameters().empty());
}

TEST(Predicates, GridGroundingTeachesOnGrid) {
  Rng init(2), rng(3);
  pr::GridConstraints cs(pr::GridPredicateConfig{}, init);
  nn::Adam opt(cs.parameters());
  const auto centers = data::default_grid_centers();
  const Var real = data::sample_grid(64, centers, 0.008, rng).var();
  const Var fake = points(uniform(128, -1.2, 1.2, rng));
  for (int step = 0; step < 400; ++step) {
    opt.zero_grad();
    ad::backward(*cs.grounding_loss(real, fake, rng));
    opt.step();
  }
  const auto t = cs.truths(points({0.5, -0.5, 0.0, 0.0, -0.5, 0.5}));
  EXPECT_GT(t.at("OnGrid").at(0, 0), 0.8);
  EXPECT_LT(t.at("OnGrid").at(1, 0), 0.2);
  EXPECT_GT(t.at(pr::in_cell_name(2)).at(2, 0), 0.8);
  EXPECT_LT(t.at(pr::in_cell_name(2)).at(0, 0), 0.2);
}

TEST(Predicates, RingKnowledgeBase) {
  const auto kb = pr::build_ring_kb();
  EXPECT_EQ(kb.size(), 7u);
  EXPECT_TRUE(kb.adaptive());
  EXPECT_EQ(pr::build_ring_kb({}, true, true).size(), 4u);
}

TEST(Predicates, RingIdealTruthExamples) {
  const auto kb = pr::build_ring_kb();
  const auto names = kb.rule_names();
  auto idx = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) - names.begin(); };
  auto truths = [](std::vector<double> in, std::vector<double> out, std::vector<double> dead) {
    const std::size_t n = in.size();
    return logic::PredicateTruths{{"InnerRing", column(in)},         {"OuterRing", column(out)},
                                  {"DeadZone", column(dead)},        {"InnerBand", column(in)},
                                  {"OuterBand", column(out)},        {"NearInnerCenter", column(std::vector<double>(n, 1))},
                                  {"NearOuterCenter", column(std::vector<double>(n, 1))}};
  };
  // All in the dead zone.
  const auto dead = logic::kb_satisfaction(kb, truths({0, 0, 0}, {0, 0, 0}, {1, 1, 1}));
  EXPECT_NEAR(dead.rule_sats[idx("avoid_dead_zone")], 0.0, 1e-9);
  // Perfect split on both radii.
  const auto split = logic::kb_satisfaction(kb, truths({1, 0, 1, 0}, {0, 1, 0, 1}, {0, 0, 0, 0}));
  EXPECT_NEAR(split.rule_sats[idx("balance")], 1.0, 1e-12);
  EXPECT_NEAR(split.rule_sats[idx("exclusive")], 1.0, 1e-12);
  // mean_in 0.3 vs mean_out 0.7.
  const auto skew = logic::kb_satisfaction(kb, truths({0.3, 0.3}, {0.7, 0.7}, {0, 0}));
  EXPECT_NEAR(skew.rule_sats[idx("balance")], 0.6, 1e-12);
}

TEST(Predicates, RingBandTightensLinearly) {
  Rng init(1);
  pr::RingPredicateConfig cfg;
  pr::RingConstraints cs(cfg, init);
  cs.begin_epoch(0, 150);
  EXPECT_NEAR(cs.band(), 0.30, 1e-12);
  cs.begin_epoch(149, 150);
  EXPECT_NEAR(cs.band(), 0.15, 1e-12);
  cs.begin_epoch(75, 150);
  EXPECT_GT(cs.band(), 0.15);
  EXPECT_LT(cs.band(), 0.30);
  cfg.tighten = false;
  pr::RingConstraints fixed(cfg, init);
  fixed.begin_epoch(149, 150);
  EXPECT_NEAR(fixed.band(), 0.30, 1e-12);
}

TEST(Predicates, MnistKnowledgeBaseExamples) {
  const auto kb = pr::build_mnist_kb();
  ASSERT_EQ(kb.size(), 4u);
  auto truths = [](const std::vector<double>& probs) {
    logic::PredicateTruths t;
    for (std::size_t k = 0; k < 10; ++k) t[pr::is_digit_name(k)] = column({probs[k]});
    for (const char* n : {"ValidPixels", "IsConnected", "IsComplete", "HasProperIntensity"}) t[n] = column({1.0});
    return t;
  };
  std::vector<double> onehot(10, 0.0);
  onehot[3] = 1.0;
  const auto a = logic::kb_satisfaction(kb, truths(onehot));
  EXPECT_DOUBLE_EQ(a.rule_sats[1], 1.0);
  EXPECT_NEAR(a.rule_sats[0], 1.0, 1e-12);

  std::vector<double> two = onehot;
  two[7] = 1.0;
  EXPECT_NEAR(logic::kb_satisfaction(kb, truths(two)).rule_sats[1], 0.0, 1e-12);

  const auto uni = logic::kb_satisfaction(kb, truths(std::vector<double>(10, 0.1)));
  EXPECT_NEAR(uni.rule_sats[0], 1.0 - std::pow(0.9, 10), 1e-12);
  EXPECT_NEAR(uni.rule_sats[0], 0.6513, 5e-5);
}

TEST(Predicates, ValidityExamples) {
  std::vector<double> black(784, 0.0);
  std::vector<double> blob(784, 0.0);
  for (int r = 10; r < 15; ++r)
    for (int c = 10; c < 15; ++c) blob[r * 28 + c] = 1.0;
  std::vector<double> mid(784, 0.13);  // mean intensity 0.13
  std::vector<double> all;
  for (const auto* img : {&black, &blob, &mid}) all.insert(all.end(), img->begin(), img->end());
  const auto v = pr::validity_predicates(Var::constant({3, 784}, all));
  EXPECT_EQ(v.is_connected.at(0, 0), 0.0);
  EXPECT_EQ(v.is_connected.at(1, 0), 1.0);
  EXPECT_NEAR(v.has_proper_intensity.at(2, 0), 1.0, 1e-12);
  EXPECT_LT(v.has_proper_intensity.at(0, 0), 0.2);
  for (const Var* t : {&v.valid_pixels, &v.is_connected, &v.is_complete, &v.has_proper_intensity}) {
    for (double x : t->data()) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
  EXPECT_THROW(pr::validity_predicates(Var::constant({1, 10}, std::vector<double>(10, 0.0))), ad::ShapeError);
}

TEST(Predicates, ComponentCounting) {
  std::vector<double> img(784, 0.0);
  EXPECT_EQ(pr::count_components(img), 0u);
  img[0] = 1.0;
  img[2] = 1.0;
  img[29] = 1.0;  // diagonal to 0 and 2: separate under 4-connectivity
  EXPECT_EQ(pr::count_components(img), 3u);
  img[1] = 1.0;  // joins 0 and 2, and 29 below 1
  EXPECT_EQ(pr::count_components(img), 1u);
}

TEST(Predicates, ValidityGradientCheck) {
  std::mt19937_64 rng(5);
  Var img = Var::parameter({2, 784}, uniform(1568, 0.0, 1.0, rng));
  auto f = [&] {
    const auto v = pr::validity_predicates(img);
    return ad::sum(v.valid_pixels) + ad::sum(v.has_proper_intensity);
  };
  EXPECT_LT(ad::finite_difference_check(f, {img}, 1e-5, 200).max_error, 1e-4);
}

TEST(Predicates, MnistConstraintsRejectBadClassifier) {
  Rng rng(1);
  nn::MlpSpec s;
  s.layer_sizes = {784, 8, 10};
  EXPECT_THROW(pr::MnistConstraints(nn::Mlp(s, rng)), std::invalid_argument);  // no softmax head
  s.layer_sizes = {2, 8, 10};
  s.output = nn::Activation::kSoftmax;
  EXPECT_THROW(pr::MnistConstraints(nn::Mlp(s, rng)), std::invalid_argument);
  s.layer_sizes = {784, 8, 10};
  pr::MnistConstraints ok(nn::Mlp(s, rng));
  for (const auto& p : ok.classifier().parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(Predicates, ClassTemplatesAreBinaryMeans) {
  data::MnistSet set;
  set.images.assign(20 * 784, 0.0);
  for (int i = 0; i < 20; ++i) {
    set.labels.push_back(i % 10);
    set.images[i * 784 + (i % 10)] = 1.0;
  }
  const auto t = pr::class_templates(set);
  ASSERT_EQ(t.size(), 7840u);
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(t[k * 784 + k], 1.0);
    EXPECT_EQ(t[k * 784 + (k + 1) % 10], 0.0);
  }
}
