#include "ltngan/scheduling.hpp"

#include <algorithm>
#include <stdexcept>

namespace ltngan::sched {

double clip(double x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clip: lower bound exceeds upper bound");
  return std::min(std::max(x, lo), hi);
}

double lambda_at(const LambdaSchedule& s, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lambda_at: negative epoch");
  if (s.kind == LambdaSchedule::Kind::kConstant) return s.start;
  if (s.ramp_epochs <= 0) throw std::invalid_argument("lambda_at: linear ramp needs ramp_epochs > 0");
  if (epoch >= s.ramp_epochs) return s.end;
  return s.start + (static_cast<double>(epoch) / s.ramp_epochs) * (s.end - s.start);
}

std::string to_string(LambdaSchedule::Kind k) { return k == LambdaSchedule::Kind::kConstant ? "constant" : "linear_ramp"; }

LambdaSchedule::Kind schedule_kind_from_string(const std::string& s) {
  if (s == "constant") return LambdaSchedule::Kind::kConstant;
  if (s == "linear_ramp") return LambdaSchedule::Kind::kLinearRamp;
  throw std::invalid_argument("unknown schedule kind '" + s + "' (expected linear_ramp, constant)");
}

double weight_multiplier(const AdaptiveWeightConfig& cfg, double s) {
  if (s < cfg.low) return 1.0 + cfg.eta;
  if (s > cfg.high) return 1.0 - 0.5 * cfg.eta;
  return 1.0 + cfg.eta * (cfg.target - s);
}

double adaptive_weight_update(const AdaptiveWeightConfig& cfg, double satisfaction, double weight) {
  const double proposed = clip(weight * weight_multiplier(cfg, satisfaction), cfg.w_min, cfg.w_max);
  // Convex blend of two in-range values; the clip only absorbs rounding.
  return clip(cfg.momentum * weight + (1.0 - cfg.momentum) * proposed, cfg.w_min, cfg.w_max);
}

Backtracker::Backtracker(BacktrackConfig cfg) : cfg_(cfg) {
  if (cfg_.capacity == 0 || cfg_.window == 0) throw std::invalid_argument("backtracker needs capacity and window > 0");
}

std::optional<Backtracker::Params> Backtracker::maybe_backtrack(int epoch, double satisfaction, const Params& params) {
  if (!cfg_.enabled) return std::nullopt;
  if (!buffer_.empty()) {
    const std::size_t n = std::min(cfg_.window, buffer_.size());
    double avg = 0.0;
    for (std::size_t i = buffer_.size() - n; i < buffer_.size(); ++i) avg += buffer_[i].satisfaction;
    avg /= static_cast<double>(n);
    if (satisfaction < avg - cfg_.drop_threshold) {
      const auto best = std::max_element(buffer_.begin(), buffer_.end(), [](const Entry& a, const Entry& b) {
        return a.satisfaction < b.satisfaction;
      });
      ++restores_;
      return best->params;
    }
  }
  buffer_.push_back({epoch, satisfaction, params});
  while (buffer_.size() > cfg_.capacity) buffer_.pop_front();
  return std::nullopt;
}

}  // namespace ltngan::sched
