#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "ltngan/autodiff.hpp"
#include "test_util.hpp"

namespace ad = ltngan::ad;
using ad::Var;
using ltngan::testing::param;
using ltngan::testing::param_scalar;
using ltngan::testing::uniform;

TEST(Autodiff, ElementwiseExamples) {
  EXPECT_NEAR(ad::sigmoid(Var::constant(3.0)).item(), 1.0 / (1.0 + std::exp(-3.0)), 1e-15);
  EXPECT_NEAR(ad::sigmoid(Var::constant(3.0)).item(), 0.95257, 5e-6);
  EXPECT_DOUBLE_EQ(ad::leaky_relu(Var::constant(-1.0), 0.2).item(), -0.2);
  EXPECT_DOUBLE_EQ(ad::maximum(Var::constant(0.2), Var::constant(0.3)).item(), 0.3);
  EXPECT_DOUBLE_EQ(ad::minimum(Var::constant(0.2), Var::constant(0.3)).item(), 0.2);
  EXPECT_DOUBLE_EQ(ad::clip(Var::constant(5.0), 0.0, 1.0).item(), 1.0);
  EXPECT_DOUBLE_EQ(ad::abs(Var::constant(-2.5)).item(), 2.5);
}

TEST(Autodiff, BroadcastAndShapeErrors) {
  const Var a = Var::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  const Var row = Var::constant({1, 3}, {10, 20, 30});
  const Var col = Var::constant({2, 1}, {100, 200});
  EXPECT_EQ((a + row).data(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  EXPECT_EQ((a + col).data(), (std::vector<double>{101, 102, 103, 204, 205, 206}));
  const Var bad = Var::constant({3, 2}, {1, 2, 3, 4, 5, 6});
  try {
    (void)(a + bad);
    FAIL() << "expected ShapeError";
  } catch (const ad::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3x2"), std::string::npos) << msg;
  }
}

TEST(Autodiff, MatmulExamples) {
  const Var eye = Var::constant({2, 2}, {1, 0, 0, 1});
  const Var m = Var::constant({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(ad::matmul(eye, m).data(), m.data());
  EXPECT_EQ(ad::matmul(Var::constant({1, 2}, {1, 0}), Var::constant({2, 1}, {2, 5})).data(), std::vector<double>{2});

  Var a = param({1, 1}, 1, 2);
  const Var b = Var::constant({2, 1}, {2, 3});
  ad::backward(ad::sum(ad::matmul(a, b)));
  EXPECT_EQ(a.grad(), (std::vector<double>{2, 3}));

  EXPECT_THROW(ad::matmul(m, Var::constant({3, 1}, {1, 2, 3})), ad::ShapeError);
}

TEST(Autodiff, BackwardExamples) {
  Var x = param_scalar(3.0);
  ad::backward(x * x);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);

  Var y = param_scalar(0.0);
  ad::backward(ad::sigmoid(y));
  EXPECT_DOUBLE_EQ(y.grad()[0], 0.25);

  const Var c = Var::constant(2.0);
  const Var root = c * c + 1.0;
  ad::backward(root);
  EXPECT_FALSE(c.requires_grad());
  for (double g : c.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, BackwardAccumulatesUntilZeroed) {
  Var x = param_scalar(3.0);
  ad::backward(x * x);
  ad::backward(x * x);
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Autodiff, BackwardRejectsNonScalarRoot) {
  Var x = param({1, 2}, 1, 2);
  EXPECT_THROW(ad::backward(x * 2.0), ad::ShapeError);
}

TEST(Autodiff, DataAndGradShareShape) {
  Var x = param({1, 2, 3, 4, 5, 6}, 3, 2);
  Var y = ad::sum(ad::tanh(ad::matmul(x, Var::constant({2, 1}, {0.5, -0.5}))));
  ad::backward(y);
  EXPECT_EQ(x.grad().size(), x.data().size());
}

TEST(Autodiff, BceExamples) {
  EXPECT_NEAR(ad::bce_loss(Var::constant(1.0), 1.0).item(), 0.0, 1e-11);
  EXPECT_NEAR(ad::bce_loss(Var::constant(0.5), 1.0).item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(ad::bce_loss(Var::constant(0.9), 0.9).item(), -0.9 * std::log(0.9) - 0.1 * std::log(0.1), 1e-12);
  EXPECT_NEAR(ad::bce_loss(Var::constant(0.9), 0.9).item(), 0.32508, 5e-6);
  // Exact 0/1 probabilities stay finite.
  EXPECT_TRUE(std::isfinite(ad::bce_loss(Var::constant(0.0), 1.0).item()));
}

TEST(Autodiff, BceNonnegativeAndMinimisedAtTarget) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double y = u(rng), p = u(rng);
    const double at_p = ad::bce_loss(Var::constant(p), y).item();
    const double at_y = ad::bce_loss(Var::constant(y), y).item();
    EXPECT_GE(at_p, 0.0);
    EXPECT_LE(at_y, at_p + 1e-12);
  }
}

TEST(Autodiff, FiniteDifferenceExamples) {
  Var x = param_scalar(3.0);
  EXPECT_LT(ad::finite_difference_check([&] { return x * x; }, {x}).max_error, 1e-6);

  std::mt19937_64 rng(3);
  Var w = param(uniform(4, -0.5, 0.5, rng), 4, 1);
  const Var in = Var::constant({3, 4}, uniform(12, -1, 1, rng));
  auto bce = [&] { return ad::bce_loss(ad::sigmoid(ad::matmul(in, w)), 0.9); };
  EXPECT_LT(ad::finite_difference_check(bce, {w}).max_error, 1e-4);

  Var v = param(uniform(8, 0.05, 0.95, rng), 8, 1);
  auto pm2 = [&] { return ad::pow(ad::mean(ad::pow(v, 2.0)), 0.5); };
  EXPECT_LT(ad::finite_difference_check(pm2, {v}).max_error, 1e-4);
}

namespace {

struct UnaryCase {
  std::string name;
  std::function<Var(const Var&)> op;
  double lo, hi;
  double kink = std::nan("");  // inputs within 0.01 of this are redrawn
};

struct BinaryCase {
  std::string name;
  std::function<Var(const Var&, const Var&)> op;
  double lo, hi;
  bool avoid_ties = false;
};

double draw(std::mt19937_64& rng, double lo, double hi, double kink) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (;;) {
    const double v = u(rng);
    if (std::isnan(kink) || std::abs(v - kink) > 0.01) return v;
  }
}

}  // namespace

// Every supported op against central differences on 100 random safe-domain inputs.
TEST(AutodiffProperty, UnaryOpsMatchFiniteDifferences) {
  const std::vector<UnaryCase> cases{
      {"neg", [](const Var& a) { return ad::neg(a); }, -3, 3},
      {"exp", [](const Var& a) { return ad::exp(a); }, -3, 3},
      {"log", [](const Var& a) { return ad::log(a); }, 0.05, 5},
      {"sqrt", [](const Var& a) { return ad::sqrt(a); }, 0.05, 5},
      {"pow", [](const Var& a) { return ad::pow(a, 2.7); }, 0.05, 3},
      {"sigmoid", [](const Var& a) { return ad::sigmoid(a); }, -6, 6},
      {"tanh", [](const Var& a) { return ad::tanh(a); }, -3, 3},
      {"sin", [](const Var& a) { return ad::sin(a); }, -4, 4},
      {"cos", [](const Var& a) { return ad::cos(a); }, -4, 4},
      {"leaky_relu", [](const Var& a) { return ad::leaky_relu(a, 0.2); }, -3, 3, 0.0},
      {"abs", [](const Var& a) { return ad::abs(a); }, -3, 3, 0.0},
      {"clip_lo", [](const Var& a) { return ad::clip(a, -0.5, 0.5); }, -1, 0, -0.5},
      {"clip_hi", [](const Var& a) { return ad::clip(a, -0.5, 0.5); }, 0, 1, 0.5},
      {"square", [](const Var& a) { return ad::square(a); }, -3, 3},
      {"one_minus", [](const Var& a) { return ad::one_minus(a); }, 0, 1},
      {"scale_shift", [](const Var& a) { return ad::shift(ad::scale(a, 1.7), -0.3); }, -2, 2},
  };
  std::mt19937_64 rng(2024);
  for (const auto& c : cases) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> xs(3);
      for (auto& v : xs) v = draw(rng, c.lo, c.hi, c.kink);
      Var x = param(xs, 3, 1);
      const Var w = Var::constant({3, 1}, uniform(3, -1, 1, rng));
      const auto r = ad::finite_difference_check([&] { return ad::sum(c.op(x) * w); }, {x});
      ASSERT_LT(r.max_error, 1e-4) << c.name << " trial " << trial;
    }
  }
}

TEST(AutodiffProperty, BinaryOpsMatchFiniteDifferences) {
  const std::vector<BinaryCase> cases{
      {"add", [](const Var& a, const Var& b) { return a + b; }, -3, 3},
      {"sub", [](const Var& a, const Var& b) { return a - b; }, -3, 3},
      {"mul", [](const Var& a, const Var& b) { return a * b; }, -3, 3},
      {"div", [](const Var& a, const Var& b) { return a / b; }, 0.2, 3},
      {"max", [](const Var& a, const Var& b) { return ad::maximum(a, b); }, -3, 3, true},
      {"min", [](const Var& a, const Var& b) { return ad::minimum(a, b); }, -3, 3, true},
      {"matmul", [](const Var& a, const Var& b) { return ad::matmul(a, ad::transpose(b)); }, -2, 2},
  };
  std::mt19937_64 rng(99);
  for (const auto& c : cases) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> as = uniform(6, c.lo, c.hi, rng), bs = uniform(6, c.lo, c.hi, rng);
      if (c.avoid_ties) {
        for (std::size_t i = 0; i < as.size(); ++i) {
          if (std::abs(as[i] - bs[i]) < 0.01) bs[i] = as[i] + 0.5;
        }
      }
      Var a = param(as, 3, 2), b = param(bs, 3, 2);
      const auto r = ad::finite_difference_check([&] { return ad::sum(ad::tanh(c.op(a, b))); }, {a, b});
      ASSERT_LT(r.max_error, 1e-4) << c.name << " trial " << trial;
    }
  }
}

TEST(AutodiffProperty, ReductionsAndRowOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Var x = param(uniform(12, -2, 2, rng), 4, 3);
    const Var w = Var::constant({4, 3}, uniform(12, -1, 1, rng));
    const std::vector<int> labels{0, 2, 1, 2};
    const std::vector<std::function<Var()>> fs{
        [&] { return ad::sum(ad::softmax_rows(x) * w); },
        [&] { return ad::sum(ad::log_softmax_rows(x) * w); },
        [&] { return ad::cross_entropy_logits(x, labels); },
        [&] { return ad::sum(ad::square(ad::mean_rows(x))); },
        [&] { return ad::sum(ad::square(ad::sum_cols(x))); },
        [&] { return ad::sum(ad::square(ad::mean_cols(x))); },
        [&] { return ad::sum(ad::concat_cols({ad::slice_cols(x, 2, 1), ad::slice_cols(x, 0, 2)}) * w); },
        [&] { return ad::bce_loss(ad::sigmoid(x), ad::sigmoid(w)); },
    };
    for (std::size_t k = 0; k < fs.size(); ++k) {
      ASSERT_LT(ad::finite_difference_check(fs[k], {x}).max_error, 1e-4) << "case " << k << " trial " << trial;
    }
  }
}

TEST(AutodiffProperty, BackwardIsDeterministic) {
  auto run = [] {
    std::mt19937_64 rng(77);
    Var x = param(uniform(20, -1, 1, rng), 10, 2);
    Var w = param(uniform(6, -1, 1, rng), 2, 3);
    ad::backward(ad::mean(ad::log_softmax_rows(ad::matmul(ad::tanh(x), w))));
    auto g = x.grad();
    g.insert(g.end(), w.grad().begin(), w.grad().end());
    return g;
  };
  EXPECT_EQ(run(), run());
}

TEST(Autodiff, DetachStopsGradient) {
  Var x = param_scalar(2.0);
  ad::backward(ad::detach(x) * x);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}
