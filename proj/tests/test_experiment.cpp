#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "ltngan/experiment.hpp"
#include "ltngan/plots.hpp"

namespace fs = std::filesystem;
namespace xp = ltngan::exp;
namespace train = ltngan::train;
using train::Dataset;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ltngan_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code;
  std::string output;
};

CliResult cli(const std::string& args) {
  const auto log = fs::temp_directory_path() / "ltngan_cli_out.txt";
  const std::string cmd = std::string(LTNGAN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST(Experiment, ConfigRoundTrip) {
  for (Dataset d : {Dataset::kGaussian, Dataset::kGrid, Dataset::kRing, Dataset::kMnist}) {
    for (const auto& v : xp::variant_names(d)) {
      auto cfg = xp::make_config(d, v);
      cfg.seed = 77;
      cfg.out_dir = "runs/x";
      EXPECT_EQ(xp::config_from_json(xp::config_to_json(cfg)), cfg) << train::to_string(d) << "/" << v;
    }
  }
  const auto path = scratch("cfg") / "c.json";
  auto cfg = xp::make_config(Dataset::kRing, "simple_constraints");
  xp::save_config(path, cfg);
  EXPECT_EQ(xp::load_config(path), cfg);
}

TEST(Experiment, EveryKeyIsSerialized) {
  const auto j = xp::config_to_json(train::default_config(Dataset::kGrid));
  std::size_t leaves = 0;
  for (const auto& [k, v] : j.items()) {
    leaves += v.is_object() ? v.size() : 1;
    EXPECT_NE(std::find(xp::config_keys().begin(), xp::config_keys().end(), k), xp::config_keys().end()) << k;
  }
  EXPECT_EQ(leaves, xp::config_keys().size());
}

TEST(Experiment, Overrides) {
  auto cfg = train::default_config(Dataset::kGaussian);
  xp::apply_override(cfg, "epochs=1");
  xp::apply_override(cfg, "lambda.end", "0.9");
  xp::apply_override(cfg, "adaptive_weights=true");
  EXPECT_EQ(cfg.epochs, 1);
  EXPECT_DOUBLE_EQ(cfg.lambda.end, 0.9);
  EXPECT_TRUE(cfg.adaptive_weights);
  EXPECT_THROW(xp::apply_override(cfg, "epochs=abc"), xp::ConfigError);
  EXPECT_THROW(xp::apply_override(cfg, "no_equals_sign"), xp::ConfigError);
}

TEST(Experiment, UnknownKeyListsValidKeys) {
  auto cfg = train::default_config(Dataset::kGaussian);
  try {
    xp::apply_override(cfg, "learning_rate=0.1");
    FAIL();
  } catch (const xp::ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
    EXPECT_NE(msg.find("lambda.end"), std::string::npos);
    EXPECT_NE(msg.find("adam_g.lr"), std::string::npos);
  }
  xp::Json j = xp::config_to_json(cfg);
  j["bogus"] = 1;
  EXPECT_THROW(xp::config_from_json(j), xp::ConfigError);
}

TEST(Experiment, VariantRows) {
  EXPECT_EQ(xp::variant_names(Dataset::kGaussian),
            (std::vector<std::string>{"baseline_gan", "full_ltn_gan", "ltn_no_constraints", "ltn_high_constraint",
                                      "ltn_fast_scheduling", "ltn_slow_scheduling"}));
  EXPECT_EQ(xp::variant_names(Dataset::kRing),
            (std::vector<std::string>{"baseline_gan", "full_ltn_gan", "no_constraints", "no_hierarchical_weights",
                                      "no_progressive_phases", "simple_constraints"}));
  for (Dataset d : {Dataset::kGrid, Dataset::kMnist}) EXPECT_EQ(xp::variant_names(d).size(), 6u);
  EXPECT_EQ(xp::canonical_variant(Dataset::kGaussian, "full_ltn"), "full_ltn_gan");
  EXPECT_EQ(xp::canonical_variant(Dataset::kGaussian, "no_constraints"), "ltn_no_constraints");
  EXPECT_THROW(xp::canonical_variant(Dataset::kRing, "ltn_fast_scheduling"), xp::ConfigError);
}

TEST(Experiment, BaselineDiffersOnlyInLogicFields) {
  for (Dataset d : {Dataset::kGaussian, Dataset::kGrid, Dataset::kRing, Dataset::kMnist}) {
    const auto full = xp::config_to_json(xp::make_config(d, "full_ltn_gan"));
    const auto base = xp::config_to_json(xp::make_config(d, "baseline_gan"));
    const std::set<std::string> logic{"variant", "attach_kb", "lambda", "adaptive_weights", "backtrack", "ring_tighten"};
    for (const auto& [k, v] : full.items()) {
      if (!logic.count(k.substr(0, k.find('.')))) EXPECT_EQ(v, base.at(k)) << train::to_string(d) << " " << k;
    }
    EXPECT_FALSE(xp::reports_logic(xp::make_config(d, "baseline_gan")));
    EXPECT_TRUE(xp::reports_logic(xp::make_config(d, "full_ltn_gan")));
  }
}

TEST(Experiment, RunWritesArtifactsAndEvaluates) {
  const auto dir = scratch("run");
  auto cfg = xp::make_config(Dataset::kGaussian);
  cfg.epochs = 10;
  cfg.batches_per_epoch = 2;
  cfg.seed = 5;
  cfg.out_dir = dir.string();
  const auto out = xp::run_experiment(cfg);
  for (const char* f : {"runlog.csv", "metrics.csv", "manifest.json", "checkpoint.bin", "samples_epoch10.csv", "rules.log"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(line_count(dir / "runlog.csv"), 11u);
  EXPECT_EQ(line_count(dir / "samples_epoch10.csv"), 1001u);
  EXPECT_EQ(xp::config_from_run_dir(dir), cfg);
  EXPECT_NEAR(out.report.get("logic_satisfaction"), out.log.records.back().s_logic, 1e-12);

  const auto again = xp::evaluate_run_dir(dir);
  EXPECT_EQ(again.csv_row(), out.report.csv_row());

  const auto plots = ltngan::plots::export_plots(dir);
  EXPECT_FALSE(plots.written.empty());
  const auto curves = slurp(dir / "curves.svg");
  for (const char* s : {"L_G", "L_D", "S_logic", "lambda"}) EXPECT_NE(curves.find(s), std::string::npos) << s;
}

TEST(Experiment, ExportPlotsOnEmptyDirFails) {
  EXPECT_ANY_THROW(ltngan::plots::export_plots(scratch("empty")));
}

TEST(Experiment, BaselineReportsZeroLogic) {
  auto cfg = xp::make_config(Dataset::kGaussian, "baseline_gan");
  cfg.epochs = 1;
  cfg.batches_per_epoch = 1;
  EXPECT_EQ(xp::run_experiment(cfg).report.get("logic_satisfaction"), 0.0);
}

TEST(Cli, BadDatasetExitsTwo) {
  const auto r = cli("train --dataset cifar --epochs 1 --out-dir " + scratch("cli_bad").string());
  EXPECT_EQ(r.code, 2);
  for (const char* n : {"gaussian", "grid", "ring", "mnist"}) EXPECT_NE(r.output.find(n), std::string::npos);
}

TEST(Cli, BadOverrideExitsTwo) {
  EXPECT_EQ(cli("train --dataset gaussian --set nonsense=3").code, 2);
  EXPECT_EQ(cli("train --dataset gaussian --variant no_such_row").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST(Cli, TrainWritesSingleRowLog) {
  const auto dir = scratch("cli_train");
  const auto r = cli("train --dataset gaussian --variant full_ltn --seed 7 --set epochs=1 --set batches_per_epoch=2 --out-dir " +
                     dir.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(line_count(dir / "runlog.csv"), 2u);
  EXPECT_NE(r.output.find("statistical_quality"), std::string::npos);
  EXPECT_EQ(cli("evaluate " + dir.string()).code, 0);
  EXPECT_EQ(cli("compare " + dir.string() + " " + dir.string()).code, 0);
  EXPECT_EQ(cli("export-plots " + dir.string()).code, 0);
}

TEST(Cli, MissingInputsAndRuntimeFailures) {
  EXPECT_EQ(cli("evaluate /nonexistent/run").code, 2);
  // Valid config, but the IDX files are not there: a runtime failure.
  const auto r = cli("train --dataset mnist --set data_dir=/nonexistent/mnist --out-dir " + scratch("cli_mnist").string());
  EXPECT_EQ(r.code, 1) << r.output;
}
