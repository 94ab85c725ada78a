#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "ltngan/datasets.hpp"

namespace data = ltngan::data;
using ltngan::Rng;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v)};
}

struct IdxPair {
  std::vector<std::uint8_t> images, labels;
};

IdxPair make_idx(std::size_t n) {
  IdxPair p;
  for (auto v : {0x00000803u, static_cast<std::uint32_t>(n), 28u, 28u}) {
    const auto b = be32(v);
    p.images.insert(p.images.end(), b.begin(), b.end());
  }
  for (std::size_t i = 0; i < n * data::kMnistPixels; ++i) p.images.push_back(static_cast<std::uint8_t>((i * 7) % 256));
  for (auto v : {0x00000801u, static_cast<std::uint32_t>(n)}) {
    const auto b = be32(v);
    p.labels.insert(p.labels.end(), b.begin(), b.end());
  }
  for (std::size_t i = 0; i < n; ++i) p.labels.push_back(static_cast<std::uint8_t>((i * 3 + 5) % 10));
  return p;
}

data::IdxError::Kind parse_error(const IdxPair& p) {
  try {
    data::parse_mnist_idx(p.images, p.labels);
  } catch (const data::IdxError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected IdxError";
  return data::IdxError::Kind::kOpen;
}

std::filesystem::path source_data_dir() {
  if (const char* d = std::getenv("LTN_GAN_DATA_DIR")) return d;
  return std::filesystem::path(LTNGAN_SOURCE_DIR) / "data" / "mnist";
}

}  // namespace

TEST(Datasets, GaussianMoments) {
  Rng rng(1);
  const auto b = data::sample_gaussian(10000, rng);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    mx += b.x(i);
    my += b.y(i);
  }
  mx /= 10000;
  my /= 10000;
  double vx = 0, vy = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    vx += (b.x(i) - mx) * (b.x(i) - mx);
    vy += (b.y(i) - my) * (b.y(i) - my);
  }
  EXPECT_LT(std::abs(mx), 0.05);
  EXPECT_LT(std::abs(my), 0.05);
  EXPECT_LT(std::abs(std::sqrt(vx / 9999) - 1), 0.05);
  EXPECT_LT(std::abs(std::sqrt(vy / 9999) - 1), 0.05);
}

TEST(Datasets, SamplersReproducible) {
  Rng a(5), b(5);
  EXPECT_EQ(data::sample_gaussian(100, a).xy, data::sample_gaussian(100, b).xy);
  const auto centers = data::default_grid_centers();
  EXPECT_EQ(data::sample_grid(100, centers, 0.008, a).xy, data::sample_grid(100, centers, 0.008, b).xy);
  EXPECT_EQ(data::sample_ring(100, {}, a).xy, data::sample_ring(100, {}, b).xy);
}

TEST(Datasets, GridZeroNoiseHitsCenters) {
  Rng rng(2);
  const auto centers = data::default_grid_centers();
  ASSERT_EQ(centers.size(), 4u);
  const auto b = data::sample_grid(500, centers, 0.0, rng);
  for (std::size_t i = 0; i < b.size(); ++i) {
    bool on = false;
    for (const auto& c : centers) on |= (b.x(i) == c.x && b.y(i) == c.y);
    ASSERT_TRUE(on);
  }
}

TEST(Datasets, GridCenterCountsAndTails) {
  Rng rng(3);
  const auto centers = data::default_grid_centers();
  const double sigma = 0.008;
  const auto b = data::sample_grid(4000, centers, sigma, rng);
  std::vector<int> counts(4, 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::size_t best = 0;
    double bd = 1e9;
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = std::hypot(b.x(i) - centers[k].x, b.y(i) - centers[k].y);
      if (d < bd) bd = d, best = k;
    }
    ++counts[best];
    EXPECT_LT(bd, 5 * sigma * std::sqrt(2.0));
  }
  const double sd = std::sqrt(4000 * 0.25 * 0.75);
  for (int c : counts) EXPECT_LT(std::abs(c - 1000), 3 * sd);
}

TEST(Datasets, RingBandsBalanceAndAngles) {
  Rng rng(4);
  const data::RingGeometry g;
  const auto b = data::sample_ring(6000, g, rng);
  std::size_t inner = 0, outer = 0, dead = 0, outside = 0;
  std::vector<int> bins(12, 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double r = std::hypot(b.x(i), b.y(i));
    const bool is_inner = i % 2 == 0;  // alternation
    (is_inner ? inner : outer) += 1;
    if (g.in_dead_zone(r)) ++dead;
    if (!(is_inner ? g.in_inner(r) : g.in_outer(r))) ++outside;
    const double th = std::atan2(b.y(i), b.x(i)) + std::numbers::pi;
    ++bins[std::min<std::size_t>(11, static_cast<std::size_t>(th / (2 * std::numbers::pi) * 12))];
  }
  EXPECT_EQ(inner, outer);
  // 3 sigma: about 0.27% fall outside their band; allow a generous margin.
  EXPECT_LT(outside, 6000 * 0.006);
  EXPECT_LT(dead, 6000 * 0.003);
  double chi2 = 0.0;
  for (int c : bins) chi2 += (c - 500.0) * (c - 500.0) / 500.0;
  EXPECT_LT(chi2, 24.725);  // chi-square(11) at p = 0.01
}

TEST(Datasets, RingGeometryValidation) {
  data::RingGeometry g;
  EXPECT_NO_THROW(g.validate());
  g.band = 0.6;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g.band = 0.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Datasets, PointsCsvRoundTrip) {
  Rng rng(6);
  const auto b = data::sample_gaussian(50, rng);
  const auto path = std::filesystem::temp_directory_path() / "ltngan_points.csv";
  data::write_points_csv(path, b);
  const auto back = data::read_points_csv(path);
  ASSERT_EQ(back.size(), 50u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(back.xy[i], b.xy[i]);
}

TEST(Datasets, IdxParsesSyntheticFiles) {
  const auto p = make_idx(3);
  const auto set = data::parse_mnist_idx(p.images, p.labels);
  ASSERT_EQ(set.size(), 3u);
  EXPECT_EQ(set.labels, (std::vector<int>{5, 8, 1}));
  EXPECT_DOUBLE_EQ(set.images[1], 7.0 / 255.0);
  for (double v : set.images) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Datasets, IdxStructuredErrors) {
  using K = data::IdxError::Kind;
  auto p = make_idx(2);
  p.images[3] = 0x04;
  EXPECT_EQ(parse_error(p), K::kBadMagic);

  p = make_idx(2);
  p.labels[3] = 0x03;
  EXPECT_EQ(parse_error(p), K::kBadMagic);

  p = make_idx(2);
  p.images.resize(p.images.size() - 10);
  EXPECT_EQ(parse_error(p), K::kTruncated);

  p = make_idx(2);
  p.labels[7] = 3;
  EXPECT_EQ(parse_error(p), K::kCountMismatch);

  p = make_idx(2);
  p.images[11] = 27;
  EXPECT_EQ(parse_error(p), K::kBadDimensions);

  EXPECT_THROW(data::load_mnist_idx("/nonexistent/a", "/nonexistent/b"), data::IdxError);
}

// Cross-checks the loader against a byte-level read of the shipped files.
TEST(Datasets, MnistDirectoryMatchesRawBytes) {
  const auto dir = source_data_dir();
  if (!std::filesystem::exists(dir / "t10k-labels-idx1-ubyte.gz")) GTEST_SKIP() << "no MNIST files in " << dir;
  const auto set = data::load_mnist_dir(dir, false);
  const auto labels = data::read_file_bytes(dir / "t10k-labels-idx1-ubyte.gz");
  const auto images = data::read_file_bytes(dir / "t10k-images-idx3-ubyte.gz");
  const std::size_t n = (std::size_t(labels[4]) << 24) | (std::size_t(labels[5]) << 16) | (std::size_t(labels[6]) << 8) |
                        labels[7];
  ASSERT_EQ(set.size(), n);
  EXPECT_EQ(set.labels.front(), labels[8]);
  EXPECT_EQ(set.labels.back(), labels[8 + n - 1]);
  EXPECT_DOUBLE_EQ(set.images[300], images[16 + 300] / 255.0);
}
