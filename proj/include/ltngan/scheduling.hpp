#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace ltngan::sched {

/// min(max(x, lo), hi); throws if lo > hi.
double clip(double x, double lo, double hi);

struct LambdaSchedule {
  enum class Kind { kLinearRamp, kConstant };

  Kind kind = Kind::kLinearRamp;
  double start = 0.05;
  double end = 0.30;
  int ramp_epochs = 80;

  static LambdaSchedule constant(double value) { return {Kind::kConstant, value, value, 1}; }
  static LambdaSchedule ramp(double start, double end, int epochs) { return {Kind::kLinearRamp, start, end, epochs}; }

  bool operator==(const LambdaSchedule&) const = default;
};

/// start + (e / K)(end - start) for e <= K, end afterwards; epochs are 0-based.
double lambda_at(const LambdaSchedule& s, int epoch);

std::string to_string(LambdaSchedule::Kind k);
LambdaSchedule::Kind schedule_kind_from_string(const std::string& s);

/// Satisfaction-driven multiplicative reweighting of rules.
struct AdaptiveWeightConfig {
  double eta = 0.1;
  double momentum = 0.7;
  double w_min = 0.1;
  double w_max = 10.0;
  double low = 0.3;
  double high = 0.8;
  double target = 0.6;

  bool operator==(const AdaptiveWeightConfig&) const = default;
};

/// Multiplier applied before clipping: 1 + eta below `low`, 1 - eta/2 above
/// `high`, 1 + eta (target - s) in between.
double weight_multiplier(const AdaptiveWeightConfig& cfg, double satisfaction);

/// w~ = clip(w * multiplier(s), w_min, w_max); returns m w + (1 - m) w~.
double adaptive_weight_update(const AdaptiveWeightConfig& cfg, double satisfaction, double weight);

struct BacktrackConfig {
  bool enabled = false;
  std::size_t capacity = 20;
  std::size_t window = 5;
  double drop_threshold = 0.15;

  bool operator==(const BacktrackConfig&) const = default;
};

/// Rolling store of recent generator snapshots that restores the best one
/// when satisfaction falls well below its recent moving average.
class Backtracker {
 public:
  using Params = std::vector<std::vector<double>>;

  struct Entry {
    int epoch = 0;
    double satisfaction = 0.0;
    Params params;
  };

  explicit Backtracker(BacktrackConfig cfg = {});

  /// Returns the parameters to restore, or nullopt to keep the current ones.
  /// The current state is buffered only when no restore happens.
  std::optional<Params> maybe_backtrack(int epoch, double satisfaction, const Params& params);

  std::size_t size() const { return buffer_.size(); }
  std::size_t restores() const { return restores_; }
  const std::deque<Entry>& buffer() const { return buffer_; }

 private:
  BacktrackConfig cfg_;
  std::deque<Entry> buffer_;
  std::size_t restores_ = 0;
};

}  // namespace ltngan::sched
