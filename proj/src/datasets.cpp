#include "ltngan/datasets.hpp"

#include <zlib.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ltngan::data {

std::vector<Point> default_grid_centers() { return {{-0.5, -0.5}, {0.5, -0.5}, {-0.5, 0.5}, {0.5, 0.5}}; }

bool RingGeometry::in_inner(double r) const { return std::abs(r - r_inner) <= band; }
bool RingGeometry::in_outer(double r) const { return std::abs(r - r_outer) <= band; }
bool RingGeometry::in_dead_zone(double r) const { return r > dead_lo() && r < dead_hi(); }

void RingGeometry::validate() const {
  if (!(band > 0.0)) throw std::invalid_argument("ring band half-width must be positive");
  if (!(r_inner > band)) throw std::invalid_argument("inner ring band must not reach the origin");
  if (!(dead_lo() < dead_hi())) {
    throw std::invalid_argument("ring bands overlap: r_inner + band must be below r_outer - band");
  }
}

Batch2D Batch2D::from(const ad::Var& v) {
  if (v.cols() != 2) throw ad::ShapeError("Batch2D expects n x 2, got " + v.shape().str());
  return Batch2D{v.data()};
}

Batch2D sample_gaussian(std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_gaussian: n must be positive");
  std::normal_distribution<double> g(0.0, 1.0);
  Batch2D b;
  b.xy.resize(2 * n);
  for (auto& v : b.xy) v = g(rng);
  return b;
}

Batch2D sample_grid(std::size_t n, std::span<const Point> centers, double sigma, Rng& rng) {
  if (centers.empty()) throw std::invalid_argument("sample_grid: no centers");
  if (sigma < 0.0) throw std::invalid_argument("sample_grid: sigma must be nonnegative");
  std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
  std::normal_distribution<double> g(0.0, 1.0);
  Batch2D b;
  b.xy.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point& c = centers[pick(rng)];
    const double dx = g(rng), dy = g(rng);
    b.xy.push_back(c.x + sigma * dx);
    b.xy.push_back(c.y + sigma * dy);
  }
  return b;
}

Batch2D sample_ring(std::size_t n, const RingGeometry& geometry, Rng& rng) {
  geometry.validate();
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, geometry.band / 3.0);
  Batch2D b;
  b.xy.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double base = (i % 2 == 0) ? geometry.r_inner : geometry.r_outer;
    const double t = angle(rng);
    const double r = base + noise(rng);
    b.xy.push_back(r * std::cos(t));
    b.xy.push_back(r * std::sin(t));
  }
  return b;
}

void write_points_csv(const std::filesystem::path& path, const Batch2D& points) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << "x,y\n";
  os.precision(17);
  for (std::size_t i = 0; i < points.size(); ++i) os << points.x(i) << ',' << points.y(i) << '\n';
}

Batch2D read_points_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::string line;
  std::getline(is, line);
  if (line != "x,y") throw std::runtime_error("'" + path.string() + "' is not a points CSV (header x,y)");
  Batch2D b;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("malformed row in '" + path.string() + "'");
    b.xy.push_back(std::stod(line.substr(0, comma)));
    b.xy.push_back(std::stod(line.substr(comma + 1)));
  }
  return b;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");  // passes plain files through unchanged
  if (f == nullptr) throw IdxError(IdxError::Kind::kOpen, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int got = gzread(f, buf, sizeof(buf));
    if (got < 0) {
      gzclose(f);
      throw IdxError(IdxError::Kind::kTruncated, "corrupt compressed data in '" + path.string() + "'");
    }
    if (got == 0) break;
    out.insert(out.end(), buf, buf + got);
  }
  gzclose(f);
  return out;
}

namespace {

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

MnistSet parse_mnist_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  using K = IdxError::Kind;
  if (images.size() < 16) throw IdxError(K::kTruncated, "image file shorter than its 16-byte header");
  if (labels.size() < 8) throw IdxError(K::kTruncated, "label file shorter than its 8-byte header");
  if (be32(images, 0) != kImageMagic) {
    std::ostringstream os;
    os << "image file magic 0x" << std::hex << be32(images, 0) << " != 0x803";
    throw IdxError(K::kBadMagic, os.str());
  }
  if (be32(labels, 0) != kLabelMagic) {
    std::ostringstream os;
    os << "label file magic 0x" << std::hex << be32(labels, 0) << " != 0x801";
    throw IdxError(K::kBadMagic, os.str());
  }
  const std::size_t n = be32(images, 4);
  const std::size_t rows = be32(images, 8), cols = be32(images, 12);
  if (rows != kMnistSide || cols != kMnistSide) {
    throw IdxError(K::kBadDimensions,
                   "image dimensions " + std::to_string(rows) + "x" + std::to_string(cols) + " are not 28x28");
  }
  const std::size_t nl = be32(labels, 4);
  if (n != nl) {
    throw IdxError(K::kCountMismatch, std::to_string(n) + " images but " + std::to_string(nl) + " labels");
  }
  if (images.size() < 16 + n * kMnistPixels) throw IdxError(K::kTruncated, "image file truncated");
  if (labels.size() < 8 + n) throw IdxError(K::kTruncated, "label file truncated");

  MnistSet set;
  set.images.resize(n * kMnistPixels);
  for (std::size_t k = 0; k < set.images.size(); ++k) set.images[k] = images[16 + k] / 255.0;
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[8 + i];
    if (label > 9) throw IdxError(K::kBadDimensions, "label " + std::to_string(label) + " out of range");
    set.labels[i] = label;
  }
  return set;
}

MnistSet load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_file_bytes(images);
  const auto lb = read_file_bytes(labels);
  return parse_mnist_idx(ib, lb);
}

MnistSet load_mnist_dir(const std::filesystem::path& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  auto find = [&](const std::string& stem) {
    for (const auto& name : {stem, stem + ".gz"}) {
      if (std::filesystem::exists(dir / name)) return dir / name;
    }
    throw IdxError(IdxError::Kind::kOpen, "no " + stem + "[.gz] in '" + dir.string() + "'");
  };
  return load_mnist_idx(find(prefix + "-images-idx3-ubyte"), find(prefix + "-labels-idx1-ubyte"));
}

}  // namespace ltngan::data
