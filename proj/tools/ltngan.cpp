// ltngan: train, evaluate, ablate, compare and plot LTN-GAN runs.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ltngan/experiment.hpp"
#include "ltngan/plots.hpp"

namespace {

using namespace ltngan;

constexpr int kRuntimeFailure = 1;
constexpr int kBadConfig = 2;

struct RunFlags {
  std::string dataset;
  std::string variant;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out_dir;
  std::vector<std::string> sets;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_variant) {
  cmd->add_option("--dataset", f.dataset, "gaussian, grid, ring or mnist");
  if (with_variant) cmd->add_option("--variant", f.variant, "ablation variant (default full_ltn_gan)");
  cmd->add_option("--epochs", f.epochs, "override the epoch count");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--set", f.sets, "key=value override (repeatable)")->allow_extra_args(false);
}

// Precedence: dataset/variant defaults < config file < --set < --epochs/--seed/--out-dir.
train::TrainConfig resolve_unchecked(const RunFlags& f) {
  train::TrainConfig cfg;
  if (!f.config.empty()) {
    cfg = exp::load_config(f.config);
    if (!f.dataset.empty() && train::dataset_from_string(f.dataset) != cfg.dataset) {
      throw exp::ConfigError("--dataset " + f.dataset + " contradicts the config file's dataset " +
                             train::to_string(cfg.dataset));
    }
    if (!f.variant.empty()) exp::apply_variant(cfg, f.variant);
  } else {
    const auto d = train::dataset_from_string(f.dataset.empty() ? "gaussian" : f.dataset);
    cfg = exp::make_config(d, f.variant.empty() ? "full_ltn_gan" : f.variant);
  }
  for (const auto& s : f.sets) exp::apply_override(cfg, s);
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (cfg.out_dir.empty()) cfg.out_dir = "runs/" + train::to_string(cfg.dataset) + "_" + cfg.variant;
  cfg.validate();
  return cfg;
}

// Any std::invalid_argument raised while building the config is a config error.
train::TrainConfig resolve(const RunFlags& f) {
  try {
    return resolve_unchecked(f);
  } catch (const exp::ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw exp::ConfigError(e.what());
  }
}

void print_report(const std::string& label, const metrics::MetricReport& r) {
  std::cout << metrics::format_table({{label, r}});
  if (!r.note.empty()) std::cout << "note: " << r.note << "\n";
}

int cmd_train(const RunFlags& f) {
  const auto cfg = resolve(f);
  std::cerr << "training " << train::to_string(cfg.dataset) << " / " << cfg.variant << " for " << cfg.epochs
            << " epochs, seed " << cfg.seed << " -> " << cfg.out_dir << "\n";
  const auto out = exp::run_experiment(cfg, [](const train::EpochRecord& r, train::Trainer& t) {
    const int every = std::max(1, t.config().epochs / 10);
    if ((r.epoch + 1) % every == 0 || r.epoch + 1 == t.config().epochs) {
      std::fprintf(stderr, "epoch %4d  lambda %.3f  L_G %.4f  L_D %.4f  D_acc %.3f  S_logic %.4f\n", r.epoch + 1, r.lambda,
                   r.loss_g, r.loss_d, r.d_accuracy, r.s_logic);
    }
  });
  print_report(cfg.variant, out.report);
  return 0;
}

int cmd_ablate(const RunFlags& f) {
  if (!f.config.empty()) throw exp::ConfigError("ablate takes --set overrides, not --config");
  RunFlags probe = f;  // reject bad overrides before any training starts
  probe.variant.clear();
  const auto d = resolve(probe).dataset;
  const std::string out = f.out_dir.empty() ? "runs/ablate_" + train::to_string(d) : f.out_dir;
  const auto rows = exp::run_ablation(d, out, f.sets, f.epochs.value_or(0), f.seed);
  std::cout << metrics::format_table(rows);
  return 0;
}

int cmd_evaluate(const std::string& dir) {
  const auto report = exp::evaluate_run_dir(dir);
  print_report(dir, report);
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs) {
  std::vector<std::pair<std::string, metrics::MetricReport>> rows;
  for (const auto& d : dirs) {
    const std::filesystem::path p(d);
    std::string label = p.filename().string();
    if (label.empty()) label = p.parent_path().filename().string();
    if (std::filesystem::exists(p / "manifest.json")) label = exp::config_from_run_dir(p).variant;
    rows.emplace_back(label, exp::read_metrics_csv(p / "metrics.csv"));
  }
  std::cout << metrics::format_table(rows);
  return 0;
}

int cmd_export(const std::string& dir) {
  for (const auto& p : plots::export_plots(dir).written) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LTN-GAN: GAN training with fuzzy-logic knowledge bases"};
  app.require_subcommand(1);
  app.set_version_flag("--version", exp::version_string());

  RunFlags train_flags, ablate_flags;
  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  add_run_flags(train_cmd, train_flags, true);

  auto* ablate_cmd = app.add_subcommand("ablate", "run every ablation variant of a dataset");
  add_run_flags(ablate_cmd, ablate_flags, false);

  std::string eval_dir;
  auto* eval_cmd = app.add_subcommand("evaluate", "recompute metrics for a finished run");
  eval_cmd->add_option("run_dir", eval_dir, "run directory")->required();

  std::vector<std::string> compare_dirs;
  auto* compare_cmd = app.add_subcommand("compare", "tabulate metrics.csv of several runs");
  compare_cmd->add_option("run_dirs", compare_dirs, "run directories")->required();

  std::string plot_dir;
  auto* plot_cmd = app.add_subcommand("export-plots", "write scatter/curve SVGs for a run");
  plot_cmd->add_option("run_dir", plot_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kBadConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags);
    if (*ablate_cmd) return cmd_ablate(ablate_flags);
    if (*eval_cmd) return cmd_evaluate(eval_dir);
    if (*compare_cmd) return cmd_compare(compare_dirs);
    if (*plot_cmd) return cmd_export(plot_dir);
  } catch (const exp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kBadConfig;
}
