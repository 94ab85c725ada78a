#pragma once

// Post-hoc sample metrics for the four tasks, computed on a fixed-size batch of
// generated samples.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ltngan/datasets.hpp"
#include "ltngan/neural.hpp"

namespace ltngan::metrics {

using data::Point;

/// Named metric values in report order.
struct MetricReport {
  std::string dataset;
  std::vector<std::pair<std::string, double>> values;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::string note;  // marks proxy metrics

  double get(const std::string& name) const;
  std::optional<double> find(const std::string& name) const;
  void set(const std::string& name, double v);

  /// "dataset,seed,samples,<names...>" / matching row.
  std::string csv_header() const;
  std::string csv_row() const;
};

struct GaussianMetrics {
  double mean_error = 0.0;
  double std_error = 0.0;
  double statistical_quality = 0.0;
  double adherence_proxy = 0.0;
  double combined_quality = 0.0;
};

/// 1 / (1 + mean_error + std_error).
double statistical_quality(double mean_error, double std_error);
/// Needs at least two samples (std uses n - 1).
GaussianMetrics gaussian_metrics(const data::Batch2D& samples);

struct GridWeights {
  double cluster = 1.0;
  double coverage = 1.0;
  double quality = 1.0;
};

struct GridMetrics {
  double grid_cluster = 0.0;
  double coverage = 0.0;
  double quality = 0.0;
  std::size_t in_targets = 0;
  double overall = 0.0;
};

GridMetrics grid_metrics(const data::Batch2D& samples, std::span<const Point> centers, double tolerance,
                         GridWeights weights = {});

struct RingMetrics {
  double ring_adherence = 0.0;
  std::size_t inner_count = 0;
  std::size_t outer_count = 0;
  double balance = 0.0;
  double dead_zone_avoidance = 0.0;
};

/// 1 - |inner - outer| / (inner + outer); 0 when both are zero.
double ring_balance(std::size_t inner, std::size_t outer);
RingMetrics ring_metrics(const data::Batch2D& samples, const data::RingGeometry& geometry);

struct MnistMetrics {
  double digit_recognition = 0.0;
  double coverage = 0.0;
  double template_dependence = 0.0;
  double quality = 0.0;
};

/// `images` n x 784 in [0,1], `labels` the conditioning classes, `templates` 10 x 784.
MnistMetrics mnist_metrics(std::span<const double> images, std::span<const int> labels, nn::Mlp& classifier,
                           std::span<const double> templates);

/// Pearson correlation, 0 when either side is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// Mean pairwise Euclidean distance; above `max_pairs` pairs a fixed-seed
/// random subset of pairs is used.
double diversity(const data::Batch2D& samples, std::size_t max_pairs = 1'000'000);

MetricReport to_report(const GaussianMetrics& m);
MetricReport to_report(const GridMetrics& m);
MetricReport to_report(const RingMetrics& m);
MetricReport to_report(const MnistMetrics& m);

/// Fixed-width text table, one row per labelled report; columns are the union
/// of metric names in first-seen order.
std::string format_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace ltngan::metrics
