#pragma once

// Config files, key=value overrides, the ablation variant registry and the
// artifact layout of a run directory.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ltngan/metrics.hpp"
#include "ltngan/training.hpp"

namespace ltngan::exp {

using train::Dataset;
using train::TrainConfig;
using Json = nlohmann::ordered_json;

/// Bad config file, unknown key, bad value or unknown variant (CLI exit 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every settable key, in serialization order. Nested settings use dots
/// ("lambda.end", "adam_g.lr", "ring.band").
const std::vector<std::string>& config_keys();

Json config_to_json(const TrainConfig& cfg);
/// Starts from the defaults of the file's dataset (and variant, when given),
/// then applies every key present. Unknown keys are errors.
TrainConfig config_from_json(const Json& j);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& cfg);

/// `value` is read as JSON when it parses (numbers, true/false), else as text.
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);
/// "key=value" form.
void apply_override(TrainConfig& cfg, const std::string& assignment);

/// Ablation rows per dataset, in table order.
const std::vector<std::string>& variant_names(Dataset d);
/// Canonical row name for a variant or one of its short aliases
/// ("baseline", "full_ltn", "no_constraints" where the table uses an "ltn_" prefix).
std::string canonical_variant(Dataset d, const std::string& name);
/// Dataset defaults with the variant's delta applied.
TrainConfig make_config(Dataset d, const std::string& variant = "full_ltn_gan");
/// Applies the delta of `variant` on top of `cfg` (which should hold full_ltn_gan settings).
void apply_variant(TrainConfig& cfg, const std::string& variant);

/// Baselines carry no knowledge base, so their logic satisfaction is 0 by definition.
bool reports_logic(const TrainConfig& cfg);

/// Dataset metrics on cfg.eval_samples fresh samples, plus logic_satisfaction
/// (final-epoch S_logic from `log`).
metrics::MetricReport evaluate(train::Trainer& trainer, const train::RunLog& log);

struct RunOutcome {
  train::RunLog log;
  metrics::MetricReport report;
};

/// Trains, then writes manifest.json, metrics.csv and final samples under cfg.out_dir (when set).
RunOutcome run_experiment(const TrainConfig& cfg, train::Trainer::EpochHook hook = {});

/// Rebuilds the trainer from manifest.json, loads checkpoint.bin and recomputes metrics.csv.
metrics::MetricReport evaluate_run_dir(const std::filesystem::path& dir);

void write_metrics_csv(const std::filesystem::path& path, const metrics::MetricReport& report);
metrics::MetricReport read_metrics_csv(const std::filesystem::path& path);

/// Config snapshot, seed and code version: enough to reproduce the run.
Json manifest(const TrainConfig& cfg);
/// Reads the config stored in a run directory's manifest.json.
TrainConfig config_from_run_dir(const std::filesystem::path& dir);

/// Runs each variant of `base.dataset` into out_dir/<variant>; `overrides`
/// are applied after each variant's delta.
std::vector<std::pair<std::string, metrics::MetricReport>> run_ablation(
    Dataset d, const std::filesystem::path& out_dir, const std::vector<std::string>& overrides, int epochs = 0,
    std::optional<std::uint64_t> seed = std::nullopt);

std::string version_string();

}  // namespace ltngan::exp
