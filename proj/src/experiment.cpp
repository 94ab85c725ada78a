#include "ltngan/experiment.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include "ltngan/predicates.hpp"
#include "ltngan/rng.hpp"

#ifndef LTNGAN_VERSION
#define LTNGAN_VERSION "0.0.0"
#endif
#ifndef LTNGAN_GIT
#define LTNGAN_GIT "unknown"
#endif

namespace ltngan::exp {

namespace {

// Seed offset for the metric batch, kept apart from the per-epoch sample dumps.
constexpr std::uint64_t kMetricStream = 0x4d455452;

struct Field {
  std::string name;
  std::function<Json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const Json&)> set;
};

template <class T>
T convert(const std::string& key, const Json& j) {
  auto bad = [&](const char* want) {
    return ConfigError("config key '" + key + "' expects " + want + ", got " + j.dump());
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw bad("true or false");
    return j.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw bad("an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (j.is_number_unsigned()) return j.get<T>();
      if (j.get<std::int64_t>() < 0) throw bad("a nonnegative integer");
    }
    return j.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) throw bad("a number");
    return j.get<T>();
  } else {
    if (!j.is_string()) throw bad("a string");
    return j.get<T>();
  }
}

// `ref` maps a config to one of its members, const or not.
template <class Ref>
Field field(std::string name, Ref ref) {
  Field f;
  f.name = name;
  f.get = [ref](const TrainConfig& c) { return Json(ref(c)); };
  f.set = [ref, name](TrainConfig& c, const Json& j) {
    using T = std::decay_t<decltype(ref(c))>;
    ref(c) = convert<T>(name, j);
  };
  return f;
}

#define LTNGAN_FIELD(key, member) field(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    Field ds;
    ds.name = "dataset";
    ds.get = [](const TrainConfig& c) { return Json(train::to_string(c.dataset)); };
    ds.set = [](TrainConfig& c, const Json& j) {
      try {
        c.dataset = train::dataset_from_string(convert<std::string>("dataset", j));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    };
    t.push_back(ds);
    t.push_back(LTNGAN_FIELD("variant", variant));
    t.push_back(LTNGAN_FIELD("seed", seed));
    t.push_back(LTNGAN_FIELD("epochs", epochs));
    t.push_back(LTNGAN_FIELD("batch_size", batch_size));
    t.push_back(LTNGAN_FIELD("batches_per_epoch", batches_per_epoch));
    t.push_back(LTNGAN_FIELD("alpha", alpha));
    t.push_back(LTNGAN_FIELD("beta", beta));
    t.push_back(LTNGAN_FIELD("attach_kb", attach_kb));
    Field kind;
    kind.name = "lambda.kind";
    kind.get = [](const TrainConfig& c) { return Json(sched::to_string(c.lambda.kind)); };
    kind.set = [](TrainConfig& c, const Json& j) {
      try {
        c.lambda.kind = sched::schedule_kind_from_string(convert<std::string>("lambda.kind", j));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    };
    t.push_back(kind);
    t.push_back(LTNGAN_FIELD("lambda.start", lambda.start));
    t.push_back(LTNGAN_FIELD("lambda.end", lambda.end));
    t.push_back(LTNGAN_FIELD("lambda.ramp_epochs", lambda.ramp_epochs));
    t.push_back(LTNGAN_FIELD("real_label", real_label));
    t.push_back(LTNGAN_FIELD("fake_label", fake_label));
    t.push_back(LTNGAN_FIELD("adaptive_weights", adaptive_weights));
    t.push_back(LTNGAN_FIELD("adaptive.eta", adaptive.eta));
    t.push_back(LTNGAN_FIELD("adaptive.momentum", adaptive.momentum));
    t.push_back(LTNGAN_FIELD("adaptive.w_min", adaptive.w_min));
    t.push_back(LTNGAN_FIELD("adaptive.w_max", adaptive.w_max));
    t.push_back(LTNGAN_FIELD("adaptive.low", adaptive.low));
    t.push_back(LTNGAN_FIELD("adaptive.high", adaptive.high));
    t.push_back(LTNGAN_FIELD("adaptive.target", adaptive.target));
    t.push_back(LTNGAN_FIELD("backtrack.enabled", backtrack.enabled));
    t.push_back(LTNGAN_FIELD("backtrack.capacity", backtrack.capacity));
    t.push_back(LTNGAN_FIELD("backtrack.window", backtrack.window));
    t.push_back(LTNGAN_FIELD("backtrack.drop_threshold", backtrack.drop_threshold));
    t.push_back(LTNGAN_FIELD("train_predicates", train_predicates));
    for (const auto& [prefix, pick] : std::vector<std::pair<std::string, nn::AdamConfig TrainConfig::*>>{
             {"adam_g", &TrainConfig::adam_g}, {"adam_d", &TrainConfig::adam_d},
             {"adam_predicates", &TrainConfig::adam_predicates}}) {
      const auto m = pick;
      t.push_back(field(prefix + ".lr", [m](auto& c) -> auto& { return (c.*m).lr; }));
      t.push_back(field(prefix + ".beta1", [m](auto& c) -> auto& { return (c.*m).beta1; }));
      t.push_back(field(prefix + ".beta2", [m](auto& c) -> auto& { return (c.*m).beta2; }));
      t.push_back(field(prefix + ".eps", [m](auto& c) -> auto& { return (c.*m).eps; }));
    }
    t.push_back(LTNGAN_FIELD("lr_anneal.start", lr_anneal.start));
    t.push_back(LTNGAN_FIELD("lr_anneal.factor", lr_anneal.factor));
    t.push_back(LTNGAN_FIELD("latent_dim", latent_dim));
    t.push_back(LTNGAN_FIELD("latent_noise", latent_noise));
    t.push_back(LTNGAN_FIELD("hidden", hidden));
    t.push_back(LTNGAN_FIELD("leaky_slope", leaky_slope));
    t.push_back(LTNGAN_FIELD("d_dropout", d_dropout));
    t.push_back(LTNGAN_FIELD("forall_p", forall_p));
    t.push_back(LTNGAN_FIELD("exists_p", exists_p));
    t.push_back(LTNGAN_FIELD("grid_sigma", grid_sigma));
    t.push_back(LTNGAN_FIELD("grid_tolerance", grid_tolerance));
    t.push_back(LTNGAN_FIELD("grid_on_scale", grid_on_scale));
    t.push_back(LTNGAN_FIELD("grid_cell_scale", grid_cell_scale));
    t.push_back(LTNGAN_FIELD("ring.r_inner", ring.r_inner));
    t.push_back(LTNGAN_FIELD("ring.r_outer", ring.r_outer));
    t.push_back(LTNGAN_FIELD("ring.band", ring.band));
    t.push_back(LTNGAN_FIELD("ring_final_band", ring_final_band));
    t.push_back(LTNGAN_FIELD("ring_tighten", ring_tighten));
    t.push_back(LTNGAN_FIELD("ring_simple", ring_simple));
    t.push_back(LTNGAN_FIELD("ring_r_max", ring_r_max));
    t.push_back(LTNGAN_FIELD("data_dir", data_dir));
    t.push_back(LTNGAN_FIELD("mnist_train_limit", mnist_train_limit));
    t.push_back(LTNGAN_FIELD("classifier_epochs", classifier_epochs));
    t.push_back(LTNGAN_FIELD("classifier_path", classifier_path));
    t.push_back(LTNGAN_FIELD("use_templates", use_templates));
    t.push_back(LTNGAN_FIELD("template_fade_epochs", template_fade_epochs));
    t.push_back(LTNGAN_FIELD("out_dir", out_dir));
    t.push_back(LTNGAN_FIELD("eval_samples", eval_samples));
    t.push_back(LTNGAN_FIELD("dump_every", dump_every));
    t.push_back(LTNGAN_FIELD("write_checkpoint", write_checkpoint));
    return t;
  }();
  return table;
}

#undef LTNGAN_FIELD

std::string key_list() {
  std::string s;
  for (const auto& k : config_keys()) s += (s.empty() ? "" : ", ") + k;
  return s;
}

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'; valid keys: " + key_list());
}

struct VariantEntry {
  std::string name;
  std::vector<std::string> aliases;
  std::function<void(TrainConfig&)> delta;
};

// Logic switched off entirely; the knowledge base is still evaluated for the run log.
void strip_logic(TrainConfig& c) {
  c.attach_kb = false;
  c.lambda = sched::LambdaSchedule::constant(0.0);
  c.adaptive_weights = false;
  c.backtrack.enabled = false;
  c.ring_tighten = false;
}

void scale_lambda(TrainConfig& c, double factor) {
  c.lambda.start *= factor;
  c.lambda.end *= factor;
}

void scale_ramp(TrainConfig& c, double factor) {
  c.lambda.ramp_epochs = std::max(1, static_cast<int>(std::lround(c.lambda.ramp_epochs * factor)));
}

const std::vector<VariantEntry>& registry(Dataset d) {
  static const std::vector<VariantEntry> planar = {
      {"baseline_gan", {"baseline"}, strip_logic},
      {"full_ltn_gan", {"full_ltn", "full"}, [](TrainConfig&) {}},
      {"ltn_no_constraints", {"no_constraints"}, strip_logic},
      {"ltn_high_constraint", {"high_constraint"}, [](TrainConfig& c) { scale_lambda(c, 3.0); }},
      {"ltn_fast_scheduling", {"fast_scheduling"}, [](TrainConfig& c) { scale_ramp(c, 0.25); }},
      {"ltn_slow_scheduling", {"slow_scheduling"}, [](TrainConfig& c) { scale_ramp(c, 2.0); }},
  };
  static const std::vector<VariantEntry> ring = {
      {"baseline_gan", {"baseline"}, strip_logic},
      {"full_ltn_gan", {"full_ltn", "full"}, [](TrainConfig&) {}},
      {"no_constraints", {"ltn_no_constraints"}, strip_logic},
      {"no_hierarchical_weights", {}, [](TrainConfig& c) { c.adaptive_weights = false; }},
      {"no_progressive_phases", {},
       [](TrainConfig& c) {
         c.ring_tighten = false;
         c.lambda = sched::LambdaSchedule::constant(c.lambda.end);
       }},
      {"simple_constraints", {}, [](TrainConfig& c) { c.ring_simple = true; }},
  };
  static const std::vector<VariantEntry> mnist = {
      {"baseline_gan", {"baseline"}, strip_logic},
      {"full_ltn_gan", {"full_ltn", "full"}, [](TrainConfig&) {}},
      {"no_ltn_constraints", {"no_constraints"}, strip_logic},
      {"no_templates", {}, [](TrainConfig& c) { c.use_templates = false; }},
      {"weak_ltn", {}, [](TrainConfig& c) { scale_lambda(c, 0.5); }},
      {"strong_ltn", {}, [](TrainConfig& c) { scale_lambda(c, 3.0); }},
  };
  switch (d) {
    case Dataset::kRing: return ring;
    case Dataset::kMnist: return mnist;
    default: return planar;
  }
}

const VariantEntry& find_variant(Dataset d, const std::string& name) {
  for (const auto& v : registry(d)) {
    if (v.name == name) return v;
    for (const auto& a : v.aliases) {
      if (a == name) return v;
    }
  }
  std::string known;
  for (const auto& n : variant_names(d)) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown variant '" + name + "' for " + train::to_string(d) + "; valid variants: " + known);
}

Json parse_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config '" + path.string() + "'");
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

Json config_to_json(const TrainConfig& cfg) {
  Json j = Json::object();
  for (const auto& f : fields()) j[f.name] = f.get(cfg);
  return j;
}

TrainConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) find_field(k);  // reject unknown keys up front
  Dataset d = Dataset::kGaussian;
  if (j.contains("dataset")) {
    TrainConfig probe;
    find_field("dataset").set(probe, j.at("dataset"));
    d = probe.dataset;
  }
  TrainConfig cfg = make_config(d, j.contains("variant") ? convert<std::string>("variant", j.at("variant")) : "full_ltn_gan");
  for (const auto& [k, v] : j.items()) find_field(k).set(cfg, v);
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) { return config_from_json(parse_json_file(path)); }

void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  write_text(path, config_to_json(cfg).dump(2) + "\n");
}

void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const Field& f = find_field(key);
  Json j;
  try {
    j = Json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    j = value;
  }
  // Text fields take the raw value even when it looks like a number.
  if (f.get(cfg).is_string() && !j.is_string()) j = value;
  if (key == "dataset") {
    // Switching dataset restarts from that dataset's defaults for the current variant.
    TrainConfig probe;
    f.set(probe, j);
    const std::string variant = cfg.variant;
    cfg = make_config(probe.dataset, variant);
    return;
  }
  f.set(cfg, j);
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  apply_override(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

const std::vector<std::string>& variant_names(Dataset d) {
  static const auto names = [] {
    std::vector<std::vector<std::string>> out;
    for (Dataset ds : {Dataset::kGaussian, Dataset::kGrid, Dataset::kRing, Dataset::kMnist}) {
      std::vector<std::string> n;
      for (const auto& v : registry(ds)) n.push_back(v.name);
      out.push_back(n);
    }
    return out;
  }();
  return names[static_cast<std::size_t>(d)];
}

std::string canonical_variant(Dataset d, const std::string& name) { return find_variant(d, name).name; }

TrainConfig make_config(Dataset d, const std::string& variant) {
  TrainConfig cfg = train::default_config(d);
  apply_variant(cfg, variant);
  return cfg;
}

void apply_variant(TrainConfig& cfg, const std::string& variant) {
  const auto& v = find_variant(cfg.dataset, variant);
  v.delta(cfg);
  cfg.variant = v.name;
}

bool reports_logic(const TrainConfig& cfg) { return cfg.variant != "baseline_gan"; }

metrics::MetricReport evaluate(train::Trainer& trainer, const train::RunLog& log) {
  const TrainConfig& cfg = trainer.config();
  Rng rng = RngStreams::derive(cfg.seed, kMetricStream);
  std::vector<int> labels;
  const ad::Var samples = trainer.sample(cfg.eval_samples, rng, &labels);

  metrics::MetricReport report;
  switch (cfg.dataset) {
    case Dataset::kGaussian: report = metrics::to_report(metrics::gaussian_metrics(data::Batch2D::from(samples))); break;
    case Dataset::kGrid: {
      const auto centers = data::default_grid_centers();
      report = metrics::to_report(metrics::grid_metrics(data::Batch2D::from(samples), centers, cfg.grid_tolerance));
      break;
    }
    case Dataset::kRing: report = metrics::to_report(metrics::ring_metrics(data::Batch2D::from(samples), cfg.ring)); break;
    case Dataset::kMnist: {
      nn::Mlp* classifier = trainer.classifier();
      if (classifier == nullptr) throw std::logic_error("MNIST trainer without a classifier");
      std::vector<double> templates = trainer.templates();
      if (templates.empty()) templates = predicates::class_templates(*trainer.mnist());
      report = metrics::to_report(metrics::mnist_metrics(samples.data(), labels, *classifier, templates));
      break;
    }
  }
  const double s = (reports_logic(cfg) && !log.records.empty()) ? log.records.back().s_logic : 0.0;
  report.set("logic_satisfaction", s);
  report.samples = cfg.eval_samples;
  report.seed = cfg.seed;
  return report;
}

std::string version_string() { return std::string("ltngan ") + LTNGAN_VERSION + " (" + LTNGAN_GIT + ")"; }

Json manifest(const TrainConfig& cfg) {
  Json m = Json::object();
  m["tool"] = "ltngan";
  m["version"] = version_string();
  m["dataset"] = train::to_string(cfg.dataset);
  m["variant"] = cfg.variant;
  m["seed"] = cfg.seed;
  m["config"] = config_to_json(cfg);
  return m;
}

TrainConfig config_from_run_dir(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw ConfigError("no manifest.json in '" + dir.string() + "'");
  const Json m = parse_json_file(path);
  if (!m.contains("config")) throw ConfigError("'" + path.string() + "' has no config section");
  return config_from_json(m.at("config"));
}

void write_metrics_csv(const std::filesystem::path& path, const metrics::MetricReport& report) {
  write_text(path, report.csv_header() + "\n" + report.csv_row() + "\n");
}

metrics::MetricReport read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  const auto h = split(header), r = split(row);
  if (h.size() < 3 || h.size() != r.size() || h[0] != "dataset") {
    throw std::runtime_error("'" + path.string() + "' is not a metrics CSV");
  }
  metrics::MetricReport rep;
  rep.dataset = r[0];
  rep.seed = std::stoull(r[1]);
  rep.samples = std::stoull(r[2]);
  for (std::size_t i = 3; i < h.size(); ++i) rep.values.emplace_back(h[i], std::stod(r[i]));
  return rep;
}

RunOutcome run_experiment(const TrainConfig& cfg, train::Trainer::EpochHook hook) {
  cfg.validate();
  const bool persist = !cfg.out_dir.empty();
  const std::filesystem::path dir(cfg.out_dir);
  if (persist) {
    std::filesystem::create_directories(dir);
    write_text(dir / "manifest.json", manifest(cfg).dump(2) + "\n");
  }
  train::Trainer trainer(cfg);
  if (hook) trainer.set_epoch_hook(std::move(hook));
  RunOutcome out;
  out.log = trainer.run();
  out.report = evaluate(trainer, out.log);
  if (persist) write_metrics_csv(dir / "metrics.csv", out.report);
  return out;
}

metrics::MetricReport evaluate_run_dir(const std::filesystem::path& dir) {
  TrainConfig cfg = config_from_run_dir(dir);
  const auto ckpt = dir / "checkpoint.bin";
  if (!std::filesystem::exists(ckpt)) throw std::runtime_error("no checkpoint.bin in '" + dir.string() + "'");
  const auto log = train::RunLog::read_csv(dir / "runlog.csv");
  if (cfg.dataset == Dataset::kMnist && cfg.classifier_path.empty()) cfg.classifier_path = ckpt.string();
  cfg.out_dir.clear();
  train::Trainer trainer(cfg);
  trainer.load_checkpoint(ckpt);
  auto report = evaluate(trainer, log);
  write_metrics_csv(dir / "metrics.csv", report);
  return report;
}

std::vector<std::pair<std::string, metrics::MetricReport>> run_ablation(Dataset d, const std::filesystem::path& out_dir,
                                                                        const std::vector<std::string>& overrides,
                                                                        int epochs, std::optional<std::uint64_t> seed) {
  std::vector<std::pair<std::string, metrics::MetricReport>> rows;
  for (const auto& name : variant_names(d)) {
    TrainConfig cfg = make_config(d, name);
    for (const auto& o : overrides) apply_override(cfg, o);
    if (epochs > 0) cfg.epochs = epochs;
    if (seed) cfg.seed = *seed;
    cfg.out_dir = (out_dir / name).string();
    rows.emplace_back(name, run_experiment(cfg).report);
  }
  if (!out_dir.empty()) {
    std::ofstream os(out_dir / "ablation.csv", std::ios::binary | std::ios::trunc);
    if (!rows.empty()) os << "variant," << rows.front().second.csv_header() << "\n";
    for (const auto& [name, rep] : rows) os << name << "," << rep.csv_row() << "\n";
  }
  return rows;
}

}  // namespace ltngan::exp
