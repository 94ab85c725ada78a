#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "ltngan/neural.hpp"
#include "test_util.hpp"

namespace ad = ltngan::ad;
namespace nn = ltngan::nn;
using ad::Var;
using ltngan::Rng;
using ltngan::testing::uniform;

namespace {

nn::MlpSpec spec_of(std::vector<std::size_t> sizes, nn::Activation out = nn::Activation::kLinear) {
  nn::MlpSpec s;
  s.layer_sizes = std::move(sizes);
  s.output = out;
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ltngan_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Neural, InitShapes) {
  Rng rng(1);
  nn::Mlp mlp(spec_of({2, 128, 128, 2}), rng);
  ASSERT_EQ(mlp.layers().size(), 3u);
  const std::vector<std::pair<std::size_t, std::size_t>> expect{{2, 128}, {128, 128}, {128, 2}};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(mlp.layers()[i].weight.rows(), expect[i].first);
    EXPECT_EQ(mlp.layers()[i].weight.cols(), expect[i].second);
    EXPECT_EQ(mlp.layers()[i].bias.rows(), 1u);
    EXPECT_EQ(mlp.layers()[i].bias.cols(), expect[i].second);
    for (double b : mlp.layers()[i].bias.data()) EXPECT_EQ(b, 0.0);
  }
  EXPECT_EQ(mlp.parameters().size(), 6u);
}

TEST(Neural, InitDeterministicPerSeed) {
  Rng a(42), b(42), c(43);
  EXPECT_EQ(nn::Mlp(spec_of({2, 16, 1}), a).snapshot(), nn::Mlp(spec_of({2, 16, 1}), b).snapshot());
  EXPECT_NE(nn::Mlp(spec_of({2, 16, 1}), a).snapshot(), nn::Mlp(spec_of({2, 16, 1}), c).snapshot());
}

TEST(Neural, InitMeanWithinThreeStandardErrors) {
  Rng rng(7);
  nn::Mlp mlp(spec_of({100, 100, 1}), rng);  // 10k weights in the first layer
  const auto& w = mlp.layers()[0].weight.data();
  ASSERT_EQ(w.size(), 10000u);
  double sum = 0.0;
  for (double v : w) sum += v;
  const double bound = std::sqrt(6.0 / 100.0);
  const double sd = bound / std::sqrt(3.0);  // uniform(-b, b)
  EXPECT_LT(std::abs(sum / 10000.0), 3.0 * sd / 100.0);
  for (double v : w) {
    EXPECT_LE(std::abs(v), bound);
  }
}

TEST(Neural, ZeroWeightsGiveZeroOutput) {
  Rng rng(1);
  nn::Mlp mlp(spec_of({3, 8, 2}), rng);
  for (auto& l : mlp.layers()) std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
  const Var out = mlp.forward(Var::constant({2, 3}, {1, 2, 3, 4, 5, 6}), nn::Mode::kEval);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Neural, NoDropoutTrainEqualsEval) {
  Rng rng(1), drop(2);
  nn::Mlp mlp(spec_of({3, 8, 2}), rng);
  const Var x = Var::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(mlp.forward(x, nn::Mode::kTrain, &drop).data(), mlp.forward(x, nn::Mode::kEval).data());
}

TEST(Neural, DropoutOnlyInTrainMode) {
  Rng rng(1);
  auto s = spec_of({3, 64, 2});
  s.dropout_rate = 0.5;
  nn::Mlp mlp(s, rng);
  const Var x = Var::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(mlp.forward(x, nn::Mode::kEval).data(), mlp.forward(x, nn::Mode::kEval).data());
  Rng d1(5), d2(6);
  EXPECT_NE(mlp.forward(x, nn::Mode::kTrain, &d1).data(), mlp.forward(x, nn::Mode::kTrain, &d2).data());
  EXPECT_THROW(mlp.forward(x, nn::Mode::kTrain, nullptr), std::invalid_argument);
}

TEST(Neural, SoftmaxRowsSumToOne) {
  Rng rng(3);
  nn::Mlp mlp(spec_of({4, 16, 10}, nn::Activation::kSoftmax), rng);
  const Var out = mlp.forward(Var::constant({5, 4}, uniform(20, -3, 3, rng)), nn::Mode::kEval);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 10; ++c) s += out.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Neural, WidthMismatchThrows) {
  Rng rng(1);
  nn::Mlp mlp(spec_of({3, 4, 1}), rng);
  EXPECT_THROW(mlp.forward(Var::constant({1, 2}, {1, 2}), nn::Mode::kEval), ad::ShapeError);
  EXPECT_THROW(nn::Mlp(spec_of({3}), rng), std::invalid_argument);
}

TEST(Neural, BatchNormNormalisesInTrainMode) {
  nn::BatchNorm bn(3);
  std::mt19937_64 rng(9);
  const Var x = Var::constant({64, 3}, uniform(192, -5, 20, rng));
  const Var y = bn.forward(x, nn::Mode::kTrain);  // gamma 1, beta 0
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t r = 0; r < 64; ++r) m += y.at(r, c);
    m /= 64.0;
    for (std::size_t r = 0; r < 64; ++r) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    v /= 64.0;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(Neural, AdamZeroGradientLeavesParameters) {
  Var w = Var::parameter({1, 3}, {0.5, -1.0, 2.0});
  nn::Adam opt({w});
  opt.zero_grad();
  opt.step();
  EXPECT_EQ(w.data(), (std::vector<double>{0.5, -1.0, 2.0}));
}

TEST(Neural, AdamFirstStepIsLearningRate) {
  Var w = Var::parameter({1, 1}, {0.0});
  nn::Adam opt({w});
  EXPECT_EQ(opt.config().lr, 1e-3);
  EXPECT_EQ(opt.config().beta1, 0.5);
  EXPECT_EQ(opt.config().beta2, 0.999);
  w.grad()[0] = 1.0;
  opt.step();
  // m_hat = 1, v_hat = 1: step lr / (1 + eps).
  EXPECT_NEAR(w.data()[0], -1e-3, 1e-10);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Neural, AdamTrajectoriesReproducible) {
  auto run = [] {
    Rng rng(5);
    nn::Mlp mlp(spec_of({2, 8, 1}, nn::Activation::kSigmoid), rng);
    nn::Adam opt(mlp.parameters());
    const Var x = Var::constant({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1});
    for (int i = 0; i < 20; ++i) {
      opt.zero_grad();
      ad::backward(ad::bce_loss(mlp.forward(x, nn::Mode::kEval), 1.0));
      opt.step();
    }
    return mlp.snapshot();
  };
  EXPECT_EQ(run(), run());
}

TEST(Neural, PolarToCartesian) {
  const Var a = nn::polar_to_cartesian(Var::constant({1, 2}, {1, 0}));
  EXPECT_NEAR(a.at(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(a.at(0, 1), 0.0, 1e-15);
  const Var b = nn::polar_to_cartesian(Var::constant({1, 2}, {2, std::numbers::pi / 2}));
  EXPECT_NEAR(b.at(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(b.at(0, 1), 2.0, 1e-12);
  Var p = Var::parameter({3, 2}, {0.5, 0.1, 1.5, -2.0, 2.5, 3.0});
  EXPECT_LT(ad::finite_difference_check([&] { return ad::sum(nn::polar_to_cartesian(p)); }, {p}).max_error, 1e-4);
  EXPECT_THROW(nn::polar_to_cartesian(Var::constant({1, 3}, {1, 2, 3})), ad::ShapeError);
}

TEST(Neural, MlpBceGradientCheck) {
  Rng rng(8);
  auto s = spec_of({3, 6, 5, 1}, nn::Activation::kSigmoid);
  nn::Mlp mlp(s, rng);
  std::mt19937_64 data_rng(1);
  const Var x = Var::constant({4, 3}, uniform(12, -1, 1, data_rng));
  auto f = [&] { return ad::bce_loss(mlp.forward(x, nn::Mode::kEval), 0.9); };
  EXPECT_LT(ad::finite_difference_check(f, mlp.parameters()).max_error, 1e-4);
}

TEST(Neural, BatchNormMlpGradientCheck) {
  Rng rng(8);
  auto s = spec_of({3, 6, 1}, nn::Activation::kSigmoid);
  s.use_batchnorm = true;
  nn::Mlp mlp(s, rng);
  std::mt19937_64 data_rng(2);
  const Var x = Var::constant({5, 3}, uniform(15, -1, 1, data_rng));
  auto f = [&] { return ad::bce_loss(mlp.forward(x, nn::Mode::kTrain), 1.0); };
  EXPECT_LT(ad::finite_difference_check(f, mlp.parameters()).max_error, 1e-4);
}

TEST(Neural, SnapshotRestoreRoundTrip) {
  Rng rng(4);
  auto s = spec_of({2, 8, 1});
  s.use_batchnorm = true;
  nn::Mlp a(s, rng), b(s, rng);
  ASSERT_NE(a.snapshot(), b.snapshot());
  b.restore(a.snapshot());
  EXPECT_EQ(a.snapshot(), b.snapshot());
  auto broken = a.snapshot();
  broken.pop_back();
  EXPECT_THROW(b.restore(broken), nn::CheckpointError);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  Rng rng(12);
  nn::Mlp mlp(spec_of({2, 8, 1}, nn::Activation::kSigmoid), rng);
  nn::Adam opt(mlp.parameters());
  for (auto& p : mlp.parameters()) std::fill(p.grad().begin(), p.grad().end(), 0.3);
  opt.step();

  nn::Checkpoint ck;
  ck.epoch = 17;
  ck.rng_state = "state";
  ck.models.push_back(nn::capture("net", mlp, &opt));
  const auto path = temp_path("roundtrip.bin");
  nn::save_checkpoint(path, ck);

  const auto back = nn::load_checkpoint(path);
  EXPECT_EQ(back.epoch, 17);
  EXPECT_EQ(back.rng_state, "state");
  const auto& m = back.model("net");
  EXPECT_EQ(m.spec, mlp.spec());
  EXPECT_EQ(m.tensors, mlp.snapshot());
  EXPECT_EQ(m.adam_steps, 1);

  Rng other(99);
  nn::Mlp fresh(spec_of({2, 8, 1}, nn::Activation::kSigmoid), other);
  nn::Adam fresh_opt(fresh.parameters());
  nn::apply(m, fresh, &fresh_opt);
  EXPECT_EQ(fresh.snapshot(), mlp.snapshot());
  EXPECT_EQ(fresh_opt.steps(), 1);
  EXPECT_EQ(fresh_opt.first_moments(), opt.first_moments());
  EXPECT_THROW(back.model("missing"), nn::CheckpointError);
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  const auto bad = temp_path("bad_magic.bin");
  {
    std::ofstream os(bad, std::ios::binary);
    os << "NOTACKPT1234";
  }
  EXPECT_THROW(nn::load_checkpoint(bad), nn::CheckpointError);

  Rng rng(1);
  nn::Checkpoint ck;
  ck.models.push_back(nn::capture("net", nn::Mlp(spec_of({2, 4, 1}), rng)));
  const auto good = temp_path("trunc.bin");
  nn::save_checkpoint(good, ck);
  std::filesystem::resize_file(good, std::filesystem::file_size(good) - 9);
  EXPECT_THROW(nn::load_checkpoint(good), nn::CheckpointError);
}
