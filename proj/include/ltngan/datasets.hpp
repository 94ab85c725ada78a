#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltngan/autodiff.hpp"
#include "ltngan/rng.hpp"

namespace ltngan::data {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// The four centers (+-0.5, +-0.5) of the 2x2 grid task.
std::vector<Point> default_grid_centers();

/// Two concentric rings separated by a dead zone.
struct RingGeometry {
  double r_inner = 1.0;
  double r_outer = 2.0;
  double band = 0.30;  // half-width of each ring band

  double dead_lo() const { return r_inner + band; }
  double dead_hi() const { return r_outer - band; }
  bool in_inner(double r) const;
  bool in_outer(double r) const;
  bool in_dead_zone(double r) const;
  /// Throws unless 0 < band < r_inner and the two bands are disjoint.
  void validate() const;

  bool operator==(const RingGeometry&) const = default;
};

/// n x 2 row-major batch of points.
struct Batch2D {
  std::vector<double> xy;

  std::size_t size() const { return xy.size() / 2; }
  double x(std::size_t i) const { return xy[2 * i]; }
  double y(std::size_t i) const { return xy[2 * i + 1]; }
  ad::Var var() const { return ad::Var::constant({size(), 2}, xy); }
  static Batch2D from(const ad::Var& v);
};

Batch2D sample_gaussian(std::size_t n, Rng& rng);
/// Uniformly chosen center plus isotropic N(0, sigma^2) noise.
Batch2D sample_grid(std::size_t n, std::span<const Point> centers, double sigma, Rng& rng);
/// Alternates inner / outer ring; uniform angle, radius ~ N(ring radius, (band / 3)^2).
Batch2D sample_ring(std::size_t n, const RingGeometry& geometry, Rng& rng);

void write_points_csv(const std::filesystem::path& path, const Batch2D& points);
Batch2D read_points_csv(const std::filesystem::path& path);

inline constexpr std::size_t kMnistSide = 28;
inline constexpr std::size_t kMnistPixels = kMnistSide * kMnistSide;
inline constexpr std::size_t kMnistClasses = 10;

struct MnistSet {
  std::vector<double> images;  // n x 784, values in [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(images).subspan(i * kMnistPixels, kMnistPixels);
  }
};

class IdxError : public std::runtime_error {
 public:
  enum class Kind { kOpen, kBadMagic, kBadDimensions, kTruncated, kCountMismatch };

  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Reads a whole file, transparently inflating gzip (".gz") content.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Parses big-endian IDX image (magic 0x00000803, n x 28 x 28) and label
/// (magic 0x00000801) files; pixels are scaled by 1/255.
MnistSet load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
MnistSet parse_mnist_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

/// Locates {train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz] under `dir`.
MnistSet load_mnist_dir(const std::filesystem::path& dir, bool train);

}  // namespace ltngan::data
