#include "ltngan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ltngan/predicates.hpp"
#include "ltngan/rng.hpp"

namespace ltngan::metrics {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::optional<double> MetricReport::find(const std::string& name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  return std::nullopt;
}

double MetricReport::get(const std::string& name) const {
  if (auto v = find(name)) return *v;
  throw std::out_of_range("no metric '" + name + "' in " + dataset + " report");
}

void MetricReport::set(const std::string& name, double v) {
  for (auto& [k, old] : values) {
    if (k == name) {
      old = v;
      return;
    }
  }
  values.emplace_back(name, v);
}

std::string MetricReport::csv_header() const {
  std::string h = "dataset,seed,samples";
  for (const auto& [k, v] : values) h += "," + k;
  return h;
}

std::string MetricReport::csv_row() const {
  std::string r = dataset + "," + std::to_string(seed) + "," + std::to_string(samples);
  for (const auto& [k, v] : values) r += "," + fmt(v);
  return r;
}

double statistical_quality(double mean_error, double std_error) { return 1.0 / (1.0 + mean_error + std_error); }

GaussianMetrics gaussian_metrics(const data::Batch2D& samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("gaussian_metrics needs at least two samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += samples.x(i);
    my += samples.y(i);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double vx = 0.0, vy = 0.0;
  std::size_t adherent = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = samples.x(i), y = samples.y(i);
    vx += (x - mx) * (x - mx);
    vy += (y - my) * (y - my);
    const double in_range = sigmoid(3.0 - std::max(std::abs(x), std::abs(y)));
    const double r = std::hypot(x, y) / 2.5;
    if (in_range * std::exp(-0.5 * r * r) > 0.5) ++adherent;
  }
  const double sx = std::sqrt(vx / static_cast<double>(n - 1));
  const double sy = std::sqrt(vy / static_cast<double>(n - 1));

  GaussianMetrics m;
  m.mean_error = std::hypot(mx, my);
  m.std_error = std::hypot(sx - 1.0, sy - 1.0);
  m.statistical_quality = statistical_quality(m.mean_error, m.std_error);
  m.adherence_proxy = static_cast<double>(adherent) / static_cast<double>(n);
  m.combined_quality = 0.5 * (m.adherence_proxy + m.statistical_quality);
  return m;
}

GridMetrics grid_metrics(const data::Batch2D& samples, std::span<const Point> centers, double tolerance,
                         GridWeights weights) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("grid tolerance must be positive");
  if (centers.empty()) throw std::invalid_argument("grid_metrics: no centers");
  const double wsum = weights.cluster + weights.coverage + weights.quality;
  if (weights.cluster < 0.0 || weights.coverage < 0.0 || weights.quality < 0.0 || !(wsum > 0.0)) {
    throw std::invalid_argument("grid overall weights must be nonnegative with a positive sum");
  }
  std::vector<bool> hit(centers.size(), false);
  GridMetrics m;
  double closeness = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = std::hypot(samples.x(i) - centers[c].x, samples.y(i) - centers[c].y);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    if (best <= tolerance) {
      ++m.in_targets;
      hit[arg] = true;
      closeness += 1.0 - best / tolerance;
    }
  }
  const std::size_t n = samples.size();
  m.grid_cluster = n ? static_cast<double>(m.in_targets) / static_cast<double>(n) : 0.0;
  m.coverage = static_cast<double>(std::count(hit.begin(), hit.end(), true)) / static_cast<double>(centers.size());
  m.quality = m.in_targets ? closeness / static_cast<double>(m.in_targets) : 0.0;
  m.overall = (weights.cluster * m.grid_cluster + weights.coverage * m.coverage + weights.quality * m.quality) / wsum;
  return m;
}

double ring_balance(std::size_t inner, std::size_t outer) {
  const std::size_t total = inner + outer;
  if (total == 0) return 0.0;
  const double diff = inner > outer ? static_cast<double>(inner - outer) : static_cast<double>(outer - inner);
  return 1.0 - diff / static_cast<double>(total);
}

RingMetrics ring_metrics(const data::Batch2D& samples, const data::RingGeometry& geometry) {
  geometry.validate();
  RingMetrics m;
  std::size_t dead = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double r = std::hypot(samples.x(i), samples.y(i));
    if (geometry.in_inner(r)) ++m.inner_count;
    else if (geometry.in_outer(r)) ++m.outer_count;
    else if (geometry.in_dead_zone(r)) ++dead;
  }
  const double n = static_cast<double>(samples.size());
  if (samples.size() > 0) {
    m.ring_adherence = static_cast<double>(m.inner_count + m.outer_count) / n;
    m.dead_zone_avoidance = 1.0 - static_cast<double>(dead) / n;
  }
  m.balance = ring_balance(m.inner_count, m.outer_count);
  return m;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("pearson: sizes differ or empty");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

MnistMetrics mnist_metrics(std::span<const double> images, std::span<const int> labels, nn::Mlp& classifier,
                           std::span<const double> templates) {
  constexpr std::size_t P = data::kMnistPixels;
  const std::size_t n = labels.size();
  if (n == 0 || images.size() != n * P) throw std::invalid_argument("mnist_metrics: need n x 784 images and n labels");
  if (templates.size() != data::kMnistClasses * P) throw std::invalid_argument("mnist_metrics: need 10 x 784 templates");

  const ad::Var x = ad::Var::constant({n, P}, std::vector<double>(images.begin(), images.end()));
  const ad::Var probs = classifier.forward(x, nn::Mode::kEval);
  const auto validity = predicates::validity_predicates(x);

  MnistMetrics m;
  std::size_t correct = 0;
  double weighted_validity = 0.0, dependence = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= static_cast<int>(data::kMnistClasses)) throw std::invalid_argument("mnist_metrics: label out of range");
    std::size_t best = 0;
    for (std::size_t k = 1; k < data::kMnistClasses; ++k) {
      if (probs.at(i, k) > probs.at(i, best)) best = k;
    }
    if (static_cast<int>(best) == y) ++correct;
    const double valid = (validity.valid_pixels.at(i, 0) + validity.is_connected.at(i, 0) +
                          validity.is_complete.at(i, 0) + validity.has_proper_intensity.at(i, 0)) /
                         4.0;
    weighted_validity += probs.at(i, static_cast<std::size_t>(y)) * valid;
    dependence += std::max(0.0, pearson(images.subspan(i * P, P), templates.subspan(static_cast<std::size_t>(y) * P, P)));
  }
  m.digit_recognition = static_cast<double>(correct) / static_cast<double>(n);
  m.template_dependence = dependence / static_cast<double>(n);
  m.quality = weighted_validity / static_cast<double>(n);

  // Per-pixel variance across samples; 0.25 is the largest possible for values in [0,1].
  double var_sum = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += images[i * P + p];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sq += (images[i * P + p] - mean) * (images[i * P + p] - mean);
    var_sum += sq / static_cast<double>(n);
  }
  m.coverage = std::clamp(var_sum / static_cast<double>(P) / 0.25, 0.0, 1.0);
  return m;
}

double diversity(const data::Batch2D& samples, std::size_t max_pairs) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("diversity needs at least two samples");
  auto dist = [&](std::size_t i, std::size_t j) {
    return std::hypot(samples.x(i) - samples.x(j), samples.y(i) - samples.y(j));
  };
  const std::size_t pairs = n * (n - 1) / 2;
  double total = 0.0;
  if (pairs <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) total += dist(i, j);
    }
    return total / static_cast<double>(pairs);
  }
  Rng rng(0x5eed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t k = 0; k < max_pairs; ++k) {
    std::size_t i = pick(rng), j = pick(rng);
    while (j == i) j = pick(rng);
    total += dist(i, j);
  }
  return total / static_cast<double>(max_pairs);
}

MetricReport to_report(const GaussianMetrics& m) {
  MetricReport r;
  r.dataset = "gaussian";
  r.values = {{"adherence_proxy", m.adherence_proxy},
              {"statistical_quality", m.statistical_quality},
              {"combined_quality", m.combined_quality},
              {"mean_error", m.mean_error},
              {"std_error", m.std_error}};
  r.note = "adherence_proxy: fraction with InRange*GaussianShape > 0.5 (stands in for the statistical test battery)";
  return r;
}

MetricReport to_report(const GridMetrics& m) {
  MetricReport r;
  r.dataset = "grid";
  r.values = {{"grid_cluster", m.grid_cluster},
              {"coverage", m.coverage},
              {"quality", m.quality},
              {"overall", m.overall},
              {"in_targets", static_cast<double>(m.in_targets)}};
  return r;
}

MetricReport to_report(const RingMetrics& m) {
  MetricReport r;
  r.dataset = "ring";
  r.values = {{"ring_adherence", m.ring_adherence},
              {"inner_count", static_cast<double>(m.inner_count)},
              {"outer_count", static_cast<double>(m.outer_count)},
              {"balance", m.balance},
              {"dead_zone_avoidance", m.dead_zone_avoidance}};
  return r;
}

MetricReport to_report(const MnistMetrics& m) {
  MetricReport r;
  r.dataset = "mnist";
  r.values = {{"quality", m.quality},
              {"coverage", m.coverage},
              {"digit_recognition", m.digit_recognition},
              {"template_dependence", m.template_dependence}};
  r.note = "quality: classifier-probability-weighted validity truths; coverage: pixel variance / 0.25";
  return r;
}

std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::vector<std::string> cols;
  for (const auto& [label, rep] : rows) {
    for (const auto& [k, v] : rep.values) {
      if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
    }
  }
  std::size_t label_w = 7;
  for (const auto& [label, rep] : rows) label_w = std::max(label_w, label.size());
  std::vector<std::size_t> widths;
  for (const auto& c : cols) widths.push_back(std::max<std::size_t>(c.size(), 9));

  std::ostringstream os;
  auto pad = [&](const std::string& s, std::size_t w, bool left) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    os << (left ? s + fill : fill + s);
  };
  pad("variant", label_w, true);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    os << "  ";
    pad(cols[c], widths[c], false);
  }
  os << '\n';
  for (const auto& [label, rep] : rows) {
    pad(label, label_w, true);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      os << "  ";
      const auto v = rep.find(cols[c]);
      char buf[32];
      if (!v) std::snprintf(buf, sizeof(buf), "-");
      else if (*v == std::floor(*v) && std::abs(*v) >= 2.0) std::snprintf(buf, sizeof(buf), "%.0f", *v);
      else std::snprintf(buf, sizeof(buf), "%.3f", *v);
      pad(buf, widths[c], false);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ltngan::metrics
