#include "ltngan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

namespace ltngan::train {

namespace {

const std::vector<std::string> kDatasetNames{"gaussian", "grid", "ring", "mnist"};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

std::string to_string(Dataset d) { return kDatasetNames.at(static_cast<std::size_t>(d)); }

const std::vector<std::string>& dataset_names() { return kDatasetNames; }

Dataset dataset_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kDatasetNames.size(); ++i) {
    if (kDatasetNames[i] == s) return static_cast<Dataset>(i);
  }
  std::string msg = "unknown dataset '" + s + "'; expected one of:";
  for (const auto& n : kDatasetNames) msg += " " + n;
  throw std::invalid_argument(msg);
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid config: " + what); };
  if (epochs <= 0) fail("epochs must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (batches_per_epoch == 0) fail("batches_per_epoch must be positive");
  if (alpha < 0.0) fail("alpha must be nonnegative");
  if (beta < 0.0) fail("beta must be nonnegative");
  if (lambda.start < 0.0 || lambda.end < 0.0) fail("lambda endpoints must be nonnegative");
  if (lambda.kind == sched::LambdaSchedule::Kind::kLinearRamp && lambda.ramp_epochs <= 0) {
    fail("lambda.ramp_epochs must be positive for a linear ramp");
  }
  if (real_label < 0.0 || real_label > 1.0 || fake_label < 0.0 || fake_label > 1.0) fail("labels must lie in [0, 1]");
  if (latent_dim == 0) fail("latent_dim must be positive");
  if (hidden == 0) fail("hidden must be positive");
  if (d_dropout < 0.0 || d_dropout >= 1.0) fail("d_dropout must lie in [0, 1)");
  if (forall_p == 0.0 || exists_p == 0.0) fail("quantifier exponents must be nonzero");
  if (grid_sigma < 0.0) fail("grid_sigma must be nonnegative");
  if (grid_tolerance <= 0.0) fail("grid_tolerance must be positive");
  if (adaptive.w_min <= 0.0 || adaptive.w_min > adaptive.w_max) fail("adaptive weight bounds are invalid");
  if (adaptive.momentum < 0.0 || adaptive.momentum >= 1.0) fail("adaptive.momentum must lie in [0, 1)");
  if (backtrack.capacity == 0 || backtrack.window == 0) fail("backtrack capacity and window must be positive");
  if (eval_samples < 2) fail("eval_samples must be at least 2");
  if (lr_anneal.factor <= 0.0) fail("lr_anneal.factor must be positive");
  try {
    ring.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (ring_final_band <= 0.0 || ring_final_band > ring.band) fail("ring_final_band must lie in (0, ring.band]");
  if (ring_r_max <= ring.r_outer) fail("ring_r_max must exceed the outer radius");
  if (dataset == Dataset::kMnist && classifier_epochs <= 0) fail("classifier_epochs must be positive");
}

TrainConfig default_config(Dataset d) {
  TrainConfig c;
  c.dataset = d;
  switch (d) {
    case Dataset::kGaussian:
      c.epochs = 100;
      c.alpha = 0.1;  // at alpha = 1 the adversarial term holds the spread near 1
      c.lambda = sched::LambdaSchedule::ramp(0.05, 0.30, 80);
      break;
    case Dataset::kGrid:
      c.epochs = 120;
      c.batches_per_epoch = 128;
      c.alpha = 0.5;
      c.lambda = sched::LambdaSchedule::ramp(0.5, 2.0, 100);
      // Adam at full rate keeps the cluster centres jittering by about the tolerance.
      c.lr_anneal = {100, 0.1};
      break;
    case Dataset::kRing:
      c.epochs = 150;
      c.lambda = sched::LambdaSchedule::ramp(0.01, 0.2, 100);
      c.adaptive_weights = true;
      c.backtrack.enabled = true;
      break;
    case Dataset::kMnist:
      c.epochs = 5;
      c.batch_size = 64;
      c.batches_per_epoch = 1;
      c.alpha = 0.6;
      c.beta = 0.3;
      c.lambda = sched::LambdaSchedule::constant(0.1);
      c.real_label = 1.0;
      c.fake_label = 0.0;
      c.backtrack.enabled = true;
      c.latent_dim = 100;
      c.latent_noise = 0.0;
      break;
  }
  return c;
}

// ---- run log ----

std::string RunLog::header() const {
  std::string h = "epoch,lambda,loss_g,loss_g_adv,loss_logic,loss_aux,loss_d,d_accuracy,s_logic,aux_accuracy,backtracks";
  for (const auto& n : rule_names) h += ",sat_" + n;
  for (const auto& n : rule_names) h += ",w_" + n;
  return h;
}

std::string RunLog::row(const EpochRecord& r) const {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.lambda, r.loss_g, r.loss_g_adv, r.loss_logic, r.loss_aux, r.loss_d, r.d_accuracy, r.s_logic,
                   r.aux_accuracy}) {
    s += "," + fmt(v);
  }
  s += "," + std::to_string(r.backtracks);
  for (double v : r.rule_sats) s += "," + fmt(v);
  for (double v : r.rule_weights) s += "," + fmt(v);
  return s;
}

std::string RunLog::to_csv() const {
  std::string out = header() + "\n";
  for (const auto& r : records) out += row(r) + "\n";
  return out;
}

void RunLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << to_csv();
}

RunLog RunLog::read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read '" + path.string() + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("'" + path.string() + "' is empty");
  const auto cols = split(line);
  constexpr std::size_t kFixed = 11;
  if (cols.size() < kFixed || cols[0] != "epoch") throw std::runtime_error("'" + path.string() + "' is not a run log");
  RunLog log;
  const std::size_t rules = (cols.size() - kFixed) / 2;
  for (std::size_t i = 0; i < rules; ++i) log.rule_names.push_back(cols[kFixed + i].substr(4));
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto v = split(line);
    if (v.size() != cols.size()) throw std::runtime_error("ragged row in '" + path.string() + "'");
    EpochRecord r;
    r.epoch = std::stoi(v[0]);
    r.lambda = std::stod(v[1]);
    r.loss_g = std::stod(v[2]);
    r.loss_g_adv = std::stod(v[3]);
    r.loss_logic = std::stod(v[4]);
    r.loss_aux = std::stod(v[5]);
    r.loss_d = std::stod(v[6]);
    r.d_accuracy = std::stod(v[7]);
    r.s_logic = std::stod(v[8]);
    r.aux_accuracy = std::stod(v[9]);
    r.backtracks = std::stoul(v[10]);
    for (std::size_t i = 0; i < rules; ++i) r.rule_sats.push_back(std::stod(v[kFixed + i]));
    for (std::size_t i = 0; i < rules; ++i) r.rule_weights.push_back(std::stod(v[kFixed + rules + i]));
    log.records.push_back(std::move(r));
  }
  return log;
}

double accuracy_from_outputs(const std::vector<double>& p_real, const std::vector<double>& p_fake) {
  if (p_real.empty() || p_fake.empty()) throw std::invalid_argument("accuracy needs nonempty batches");
  const double real_ok = static_cast<double>(std::count_if(p_real.begin(), p_real.end(), [](double p) { return p >= 0.5; }));
  const double fake_ok = static_cast<double>(std::count_if(p_fake.begin(), p_fake.end(), [](double p) { return p < 0.5; }));
  return 0.5 * (real_ok / static_cast<double>(p_real.size()) + fake_ok / static_cast<double>(p_fake.size()));
}

// ---- networks ----

Generator::Generator(const TrainConfig& cfg, Rng& init, std::vector<double> templates)
    : dataset_(cfg.dataset),
      latent_dim_(cfg.latent_dim),
      latent_noise_(cfg.latent_noise),
      r_max_(cfg.ring_r_max),
      templates_(std::move(templates)) {
  nn::MlpSpec spec;
  spec.leaky_slope = cfg.leaky_slope;
  if (dataset_ == Dataset::kMnist) {
    const std::size_t in = latent_dim_ + data::kMnistClasses;
    spec.layer_sizes = {in, 256, 512, 1024, data::kMnistPixels};
    spec.use_batchnorm = true;
    spec.output = nn::Activation::kSigmoid;
    net_ = nn::Mlp(spec, init);
    if (!templates_.empty()) {
      if (templates_.size() != data::kMnistClasses * data::kMnistPixels) {
        throw std::invalid_argument("templates must be 10 x 784");
      }
      nn::MlpSpec head;
      head.layer_sizes = {in, 1};
      blend_ = nn::Mlp(head, init);
    }
  } else {
    spec.layer_sizes = {latent_dim_, cfg.hidden, cfg.hidden, 2};
    net_ = nn::Mlp(spec, init);
  }
}

Var Generator::sample_latent(std::size_t n, const std::vector<int>& labels, Rng& rng) const {
  std::normal_distribution<double> g(0.0, 1.0);
  if (dataset_ == Dataset::kMnist) {
    if (labels.size() != n) throw std::invalid_argument("one label per latent row required");
    const std::size_t w = latent_dim_ + data::kMnistClasses;
    std::vector<double> z(n * w, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < latent_dim_; ++j) z[i * w + j] = g(rng);
      z[i * w + latent_dim_ + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return Var::constant({n, w}, std::move(z));
  }
  std::vector<double> z(n * latent_dim_);
  for (auto& v : z) v = g(rng);
  if (latent_noise_ > 0.0) {
    for (auto& v : z) v += latent_noise_ * g(rng);
  }
  return Var::constant({n, latent_dim_}, std::move(z));
}

Var Generator::forward(const Var& z, const std::vector<int>& labels, nn::Mode mode, double fade) {
  Var out = net_.forward(z, mode);
  if (dataset_ == Dataset::kRing) {
    Var t = ad::tanh(out);
    Var r = (ad::slice_cols(t, 0, 1) + 1.0) * (0.5 * r_max_);
    Var theta = ad::slice_cols(t, 1, 1) * std::numbers::pi;
    return nn::polar_to_cartesian(ad::concat_cols({r, theta}));
  }
  if (dataset_ == Dataset::kMnist && !templates_.empty()) {
    const std::size_t n = z.rows();
    if (labels.size() != n) throw std::invalid_argument("one label per generated image required");
    std::vector<double> t(n * data::kMnistPixels);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(templates_.begin() + static_cast<std::ptrdiff_t>(labels[i] * data::kMnistPixels), data::kMnistPixels,
                  t.begin() + static_cast<std::ptrdiff_t>(i * data::kMnistPixels));
    }
    Var w = (ad::sigmoid(blend_.forward(z, mode)) * 0.1 + 0.1) * std::max(0.0, fade);
    return ad::one_minus(w) * out + w * Var::constant({n, data::kMnistPixels}, std::move(t));
  }
  return out;
}

std::vector<Var> Generator::parameters() const {
  auto p = net_.parameters();
  for (auto& v : blend_.parameters()) p.push_back(v);
  return p;
}

std::vector<std::vector<double>> Generator::snapshot() const {
  auto s = net_.snapshot();
  for (auto& v : blend_.snapshot()) s.push_back(std::move(v));
  return s;
}

void Generator::restore(const std::vector<std::vector<double>>& state) {
  const std::size_t n = net_.snapshot().size();
  if (state.size() != n + blend_.snapshot().size()) throw std::invalid_argument("generator snapshot size mismatch");
  net_.restore({state.begin(), state.begin() + static_cast<std::ptrdiff_t>(n)});
  if (!blend_.layers().empty()) blend_.restore({state.begin() + static_cast<std::ptrdiff_t>(n), state.end()});
}

Discriminator::Discriminator(const TrainConfig& cfg, Rng& init) {
  nn::MlpSpec spec;
  spec.leaky_slope = cfg.leaky_slope;
  spec.dropout_rate = cfg.d_dropout;
  spec.output = nn::Activation::kSigmoid;
  if (cfg.dataset == Dataset::kMnist) {
    spec.layer_sizes = {data::kMnistPixels, 512, 256, 1};
    net_ = nn::Mlp(spec, init);
    nn::MlpSpec aux;
    aux.layer_sizes = {256, data::kMnistClasses};
    aux_ = nn::Mlp(aux, init);
  } else {
    spec.layer_sizes = {2, cfg.hidden, cfg.hidden, 1};
    net_ = nn::Mlp(spec, init);
  }
}

Discriminator::Output Discriminator::forward(const Var& x, nn::Mode mode, Rng* dropout_rng) {
  Var h = net_.hidden(x, mode, dropout_rng);
  Output out{net_.head(h), {}};
  if (has_aux()) out.aux_logits = aux_.forward(h, nn::Mode::kEval);
  return out;
}

std::vector<Var> Discriminator::parameters() const {
  auto p = net_.parameters();
  for (auto& v : aux_.parameters()) p.push_back(v);
  return p;
}

double discriminator_accuracy(Discriminator& d, const Var& real, const Var& fake) {
  return accuracy_from_outputs(d.forward(real, nn::Mode::kEval, nullptr).prob.data(),
                               d.forward(fake, nn::Mode::kEval, nullptr).prob.data());
}

std::filesystem::path mnist_dir(const TrainConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("LTN_GAN_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data/mnist";
}

void write_pgm_montage(const std::filesystem::path& path, std::span<const double> images, std::size_t columns) {
  constexpr std::size_t side = data::kMnistSide;
  if (images.size() % data::kMnistPixels != 0 || images.empty()) throw std::invalid_argument("montage needs whole 28x28 images");
  if (columns == 0) throw std::invalid_argument("montage needs at least one column");
  const std::size_t n = images.size() / data::kMnistPixels;
  const std::size_t cols = std::min(columns, n);
  const std::size_t rows = (n + cols - 1) / cols;
  const std::size_t w = cols * side, h = rows * side;
  std::vector<unsigned char> px(w * h, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t oy = (i / cols) * side, ox = (i % cols) * side;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double v = std::clamp(images[i * data::kMnistPixels + y * side + x], 0.0, 1.0);
        px[(oy + y) * w + ox + x] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

// ---- trainer ----

namespace {

constexpr std::uint64_t kClassifierStream = 0xC1A551F1;

nn::Mlp load_or_train_classifier(const TrainConfig& cfg, const data::MnistSet& set) {
  if (!cfg.classifier_path.empty() && std::filesystem::exists(cfg.classifier_path)) {
    const auto ck = nn::load_checkpoint(cfg.classifier_path);
    const auto& state = ck.model("classifier");
    Rng dummy(0);
    nn::Mlp net(state.spec, dummy);
    nn::apply(state, net);
    predicates::freeze(net);
    return net;
  }
  // Independent of the run seed so every run is judged by the same classifier.
  Rng rng = RngStreams::derive(0, kClassifierStream);
  nn::Mlp net = predicates::train_digit_classifier(set, cfg.classifier_epochs, 64, rng);
  if (!cfg.classifier_path.empty()) {
    nn::Checkpoint ck;
    ck.models.push_back(nn::capture("classifier", net));
    const auto parent = std::filesystem::path(cfg.classifier_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    nn::save_checkpoint(cfg.classifier_path, ck);
  }
  return net;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), streams_(cfg_.seed) {
  cfg_.validate();
  if (cfg_.dataset == Dataset::kMnist) {
    mnist_ = data::load_mnist_dir(mnist_dir(cfg_), true);
    if (cfg_.mnist_train_limit > 0 && cfg_.mnist_train_limit < mnist_->size()) {
      mnist_->labels.resize(cfg_.mnist_train_limit);
      mnist_->images.resize(cfg_.mnist_train_limit * data::kMnistPixels);
    }
    if (mnist_->size() < cfg_.batch_size) throw std::invalid_argument("fewer MNIST images than one batch");
    if (cfg_.use_templates) templates_ = predicates::class_templates(*mnist_);
  } else {
    const std::size_t n = cfg_.batch_size * cfg_.batches_per_epoch;
    data::Batch2D real;
    switch (cfg_.dataset) {
      case Dataset::kGaussian: real = data::sample_gaussian(n, streams_.data); break;
      case Dataset::kGrid: {
        const auto centers = data::default_grid_centers();
        real = data::sample_grid(n, centers, cfg_.grid_sigma, streams_.data);
        break;
      }
      case Dataset::kRing: real = data::sample_ring(n, cfg_.ring, streams_.data); break;
      case Dataset::kMnist: break;
    }
    real_points_ = std::move(real.xy);
  }

  gen_ = std::make_unique<Generator>(cfg_, streams_.init, templates_);
  disc_ = std::make_unique<Discriminator>(cfg_, streams_.init);

  const predicates::QuantifierExponents q{cfg_.forall_p, cfg_.exists_p};
  switch (cfg_.dataset) {
    case Dataset::kGaussian: constraints_ = std::make_unique<predicates::GaussianConstraints>(); break;
    case Dataset::kGrid: {
      predicates::GridPredicateConfig gc;
      gc.on_grid_scale = cfg_.grid_on_scale;
      gc.in_cell_scale = cfg_.grid_cell_scale;
      gc.exponents = q;
      constraints_ = std::make_unique<predicates::GridConstraints>(gc, streams_.init);
      break;
    }
    case Dataset::kRing: {
      predicates::RingPredicateConfig rc;
      rc.geometry = cfg_.ring;
      rc.final_band = cfg_.ring_final_band;
      rc.tighten = cfg_.ring_tighten;
      rc.adaptive = cfg_.adaptive_weights;
      rc.simple = cfg_.ring_simple;
      rc.exponents = q;
      constraints_ = std::make_unique<predicates::RingConstraints>(rc, streams_.init);
      break;
    }
    case Dataset::kMnist:
      constraints_ = std::make_unique<predicates::MnistConstraints>(load_or_train_classifier(cfg_, *mnist_), cfg_.forall_p);
      break;
  }

  opt_g_ = nn::Adam(gen_->net().parameters(), cfg_.adam_g);
  opt_blend_ = nn::Adam(gen_->blend_head().parameters(), cfg_.adam_g);
  opt_d_ = nn::Adam(disc_->net().parameters(), cfg_.adam_d);
  opt_aux_ = nn::Adam(disc_->aux().parameters(), cfg_.adam_d);
  opt_c_ = nn::Adam(constraints_->parameters(), cfg_.adam_predicates);
}

nn::Mlp* Trainer::classifier() {
  if (auto* m = dynamic_cast<predicates::MnistConstraints*>(constraints_.get())) return &m->classifier();
  return nullptr;
}

std::vector<int> Trainer::random_labels(std::size_t n, Rng& rng) const {
  if (cfg_.dataset != Dataset::kMnist) return {};
  std::uniform_int_distribution<int> pick(0, static_cast<int>(data::kMnistClasses) - 1);
  std::vector<int> out(n);
  for (auto& l : out) l = pick(rng);
  return out;
}

Var Trainer::real_batch(const std::vector<std::size_t>& idx, std::vector<int>* labels) const {
  const std::size_t n = idx.size();
  if (mnist_) {
    std::vector<double> x(n * data::kMnistPixels);
    if (labels) labels->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto img = mnist_->image(idx[i]);
      std::copy(img.begin(), img.end(), x.begin() + static_cast<std::ptrdiff_t>(i * data::kMnistPixels));
      if (labels) (*labels)[i] = mnist_->labels[idx[i]];
    }
    return Var::constant({n, data::kMnistPixels}, std::move(x));
  }
  std::vector<double> x(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    x[2 * i] = real_points_[2 * idx[i]];
    x[2 * i + 1] = real_points_[2 * idx[i] + 1];
  }
  return Var::constant({n, 2}, std::move(x));
}

DStepResult Trainer::discriminator_step(const Var& real, const std::vector<int>& real_labels) {
  if (real.rows() == 0) throw std::invalid_argument("discriminator step needs a nonempty batch");
  const std::size_t n = real.rows();
  opt_d_.zero_grad();
  opt_aux_.zero_grad();

  const auto labels = random_labels(n, streams_.latent);
  const Var z = gen_->sample_latent(n, labels, streams_.latent);
  const Var fake = ad::detach(gen_->forward(z, labels, nn::Mode::kTrain, fade_));

  auto out_real = disc_->forward(real, nn::Mode::kTrain, &streams_.dropout);
  auto out_fake = disc_->forward(fake, nn::Mode::kTrain, &streams_.dropout);
  Var l_real = ad::bce_loss(out_real.prob, cfg_.real_label);
  Var l_fake = ad::bce_loss(out_fake.prob, cfg_.fake_label);
  Var loss = l_real + l_fake;

  DStepResult r;
  r.loss_real = l_real.item();
  r.loss_fake = l_fake.item();
  r.loss = loss.item();
  if (disc_->has_aux() && cfg_.beta > 0.0 && !real_labels.empty()) {
    Var aux = ad::cross_entropy_logits(out_real.aux_logits, real_labels);
    r.loss_aux = aux.item();
    loss = loss + aux;
  }
  if (!finite(r.loss) || !finite(r.loss_aux)) throw TrainingError("non-finite discriminator loss " + fmt(r.loss));
  r.accuracy = accuracy_from_outputs(out_real.prob.data(), out_fake.prob.data());

  ad::backward(loss);
  opt_d_.step();
  opt_aux_.step();
  opt_g_.zero_grad();
  opt_blend_.zero_grad();
  return r;
}

GStepResult Trainer::generator_step(const Var& real, double lambda, double fade) {
  const std::size_t n = real.rows();
  opt_g_.zero_grad();
  opt_blend_.zero_grad();
  opt_c_.zero_grad();

  const auto labels = random_labels(n, streams_.latent);
  const Var z = gen_->sample_latent(n, labels, streams_.latent);
  GStepResult r;
  r.fake = gen_->forward(z, labels, nn::Mode::kTrain, fade);
  auto out = disc_->forward(r.fake, nn::Mode::kTrain, &streams_.dropout);
  Var adv = ad::bce_loss(out.prob, cfg_.real_label);
  r.loss_adv = adv.item();
  Var total = adv * cfg_.alpha;

  r.report = constraints_->evaluate(r.fake);
  r.loss_logic = r.report.loss;
  if (cfg_.attach_kb && lambda > 0.0) total = total + r.report.loss_node * lambda;

  if (disc_->has_aux() && cfg_.beta > 0.0) {
    Var aux = ad::cross_entropy_logits(out.aux_logits, labels);
    r.loss_aux = aux.item();
    total = total + aux * cfg_.beta;
  }
  if (disc_->has_aux()) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < data::kMnistClasses; ++k) {
        if (out.aux_logits.at(i, k) > out.aux_logits.at(i, best)) best = k;
      }
      if (static_cast<int>(best) == labels[i]) ++correct;
    }
    r.aux_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  r.loss = total.item();
  if (!finite(r.loss) || !finite(r.loss_logic)) {
    throw TrainingError("non-finite generator loss (total " + fmt(r.loss) + ", logic " + fmt(r.loss_logic) + ")");
  }

  ad::backward(total);
  if (cfg_.train_predicates && !opt_c_.params().empty()) {
    if (auto ground = constraints_->grounding_loss(real, ad::detach(r.fake), streams_.predicate)) {
      if (!finite(ground->item())) throw TrainingError("non-finite predicate grounding loss");
      ad::backward(*ground);
    }
    opt_c_.step();
  }
  opt_g_.step();
  opt_blend_.step();
  opt_d_.zero_grad();
  opt_aux_.zero_grad();
  return r;
}

Var Trainer::sample(std::size_t n, Rng& rng, std::vector<int>* labels) {
  std::vector<int> ls;
  if (cfg_.dataset == Dataset::kMnist) {
    ls.resize(n);
    for (std::size_t i = 0; i < n; ++i) ls[i] = static_cast<int>(i % data::kMnistClasses);
  }
  const Var z = gen_->sample_latent(n, ls, rng);
  double fade = 1.0;
  if (cfg_.template_fade_epochs > 0) {
    fade = std::max(0.0, 1.0 - static_cast<double>(cfg_.epochs) / cfg_.template_fade_epochs);
  }
  Var out = ad::detach(gen_->forward(z, ls, nn::Mode::kEval, fade));
  if (labels) *labels = std::move(ls);
  return out;
}

void Trainer::dump_samples(int epoch_number) {
  const std::filesystem::path dir(cfg_.out_dir);
  Rng rng = RngStreams::derive(cfg_.seed, RngStreams::kEval + 1000 + static_cast<std::uint64_t>(epoch_number));
  const std::string stem = "samples_epoch" + std::to_string(epoch_number);
  if (cfg_.dataset == Dataset::kMnist) {
    const Var images = sample(100, rng);
    write_pgm_montage(dir / (stem + ".pgm"), images.data(), 10);
  } else {
    data::write_points_csv(dir / (stem + ".csv"), data::Batch2D::from(sample(cfg_.eval_samples, rng)));
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path, int epoch) const {
  nn::Checkpoint ck;
  ck.epoch = epoch;
  std::ostringstream rs;
  rs << streams_.latent;
  ck.rng_state = rs.str();
  ck.models.push_back(nn::capture("generator", gen_->net(), &opt_g_));
  if (gen_->has_templates()) ck.models.push_back(nn::capture("template_blend", gen_->blend_head(), &opt_blend_));
  ck.models.push_back(nn::capture("discriminator", disc_->net(), &opt_d_));
  if (disc_->has_aux()) ck.models.push_back(nn::capture("discriminator_aux", disc_->aux(), &opt_aux_));
  auto* cs = constraints_.get();
  auto add_preds = [&](std::vector<predicates::LearnedPredicate>& preds) {
    for (auto& p : preds) ck.models.push_back(nn::capture("predicate_" + p.name, p.net));
  };
  if (auto* g = dynamic_cast<predicates::GridConstraints*>(cs)) add_preds(g->predicates());
  if (auto* r = dynamic_cast<predicates::RingConstraints*>(cs)) add_preds(r->predicates());
  if (auto* m = dynamic_cast<predicates::MnistConstraints*>(cs)) ck.models.push_back(nn::capture("classifier", m->classifier()));
  nn::save_checkpoint(path, ck);
}

std::int64_t Trainer::load_checkpoint(const std::filesystem::path& path) {
  const auto ck = nn::load_checkpoint(path);
  nn::apply(ck.model("generator"), gen_->net(), &opt_g_);
  if (gen_->has_templates()) nn::apply(ck.model("template_blend"), gen_->blend_head(), &opt_blend_);
  nn::apply(ck.model("discriminator"), disc_->net(), &opt_d_);
  if (disc_->has_aux()) nn::apply(ck.model("discriminator_aux"), disc_->aux(), &opt_aux_);
  auto load_preds = [&](std::vector<predicates::LearnedPredicate>& preds) {
    for (auto& p : preds) nn::apply(ck.model("predicate_" + p.name), p.net);
  };
  auto* cs = constraints_.get();
  if (auto* g = dynamic_cast<predicates::GridConstraints*>(cs)) load_preds(g->predicates());
  if (auto* r = dynamic_cast<predicates::RingConstraints*>(cs)) load_preds(r->predicates());
  return ck.epoch;
}

RunLog Trainer::run() {
  RunLog log;
  log.rule_names = constraints_->kb().rule_names();

  std::ofstream stream;
  const bool persist = !cfg_.out_dir.empty();
  if (persist) {
    std::filesystem::create_directories(cfg_.out_dir);
    stream.open(std::filesystem::path(cfg_.out_dir) / "runlog.csv", std::ios::binary | std::ios::trunc);
    if (!stream) throw std::runtime_error("cannot write run log under '" + cfg_.out_dir + "'");
    stream << log.header() << "\n" << std::flush;
  }
  std::ofstream rules;
  if (persist) rules.open(std::filesystem::path(cfg_.out_dir) / "rules.log", std::ios::binary | std::ios::trunc);

  sched::Backtracker backtracker(cfg_.backtrack);
  const std::size_t pool = mnist_ ? mnist_->size() : real_points_.size() / 2;
  std::vector<std::size_t> order(pool);
  for (std::size_t i = 0; i < pool; ++i) order[i] = i;
  const std::size_t k = constraints_->kb().size();

  for (int e = 0; e < cfg_.epochs; ++e) {
    constraints_->begin_epoch(e, cfg_.epochs);
    const double lambda = sched::lambda_at(cfg_.lambda, e);
    const double lr_scale = cfg_.lr_anneal.start >= 0 && e >= cfg_.lr_anneal.start ? cfg_.lr_anneal.factor : 1.0;
    for (auto* opt : {&opt_g_, &opt_blend_}) opt->set_lr(cfg_.adam_g.lr * lr_scale);
    for (auto* opt : {&opt_d_, &opt_aux_}) opt->set_lr(cfg_.adam_d.lr * lr_scale);
    opt_c_.set_lr(cfg_.adam_predicates.lr * lr_scale);
    double fade = 1.0;
    if (cfg_.template_fade_epochs > 0) fade = std::max(0.0, 1.0 - static_cast<double>(e) / cfg_.template_fade_epochs);
    fade_ = fade;
    std::shuffle(order.begin(), order.end(), streams_.data);

    EpochRecord rec;
    rec.epoch = e;
    rec.lambda = lambda;
    rec.rule_sats.assign(k, 0.0);
    const double inv = 1.0 / static_cast<double>(cfg_.batches_per_epoch);
    for (std::size_t b = 0; b < cfg_.batches_per_epoch; ++b) {
      std::vector<std::size_t> idx(cfg_.batch_size);
      for (std::size_t i = 0; i < cfg_.batch_size; ++i) idx[i] = order[(b * cfg_.batch_size + i) % pool];
      std::vector<int> labels;
      const Var real = real_batch(idx, &labels);
      const auto d = discriminator_step(real, labels);
      GStepResult g;
      try {
        g = generator_step(real, lambda, fade);
      } catch (const TrainingError&) {
        if (persist) rules << "aborted at epoch " << e << " batch " << b << "\n" << std::flush;
        throw;
      }
      rec.loss_d += d.loss * inv;
      rec.d_accuracy += d.accuracy * inv;
      rec.loss_g += g.loss * inv;
      rec.loss_g_adv += g.loss_adv * inv;
      rec.loss_logic += g.loss_logic * inv;
      rec.loss_aux += g.loss_aux * inv;
      rec.aux_accuracy += g.aux_accuracy * inv;
      rec.s_logic += g.report.s_logic * inv;
      for (std::size_t i = 0; i < k; ++i) rec.rule_sats[i] += g.report.rule_sats[i] * inv;
    }
    if (cfg_.attach_kb && cfg_.adaptive_weights) constraints_->update_weights(rec.rule_sats, cfg_.adaptive);
    rec.rule_weights = constraints_->kb().weights();

    if (cfg_.backtrack.enabled) {
      if (auto restored = backtracker.maybe_backtrack(e, rec.s_logic, gen_->snapshot())) gen_->restore(*restored);
      rec.backtracks = backtracker.restores();
    }

    log.records.push_back(rec);
    if (persist) {
      stream << log.row(rec) << "\n" << std::flush;
      logic::SatisfactionReport shown;
      shown.rule_sats = rec.rule_sats;
      rules << "epoch " << e << " lambda " << fmt(lambda) << " s_logic " << fmt(rec.s_logic) << "\n"
            << logic::dump(constraints_->kb(), &shown) << std::flush;
      if (cfg_.dump_every > 0 && ((e + 1) % cfg_.dump_every == 0 || e + 1 == cfg_.epochs)) dump_samples(e + 1);
    }
    if (hook_) hook_(rec, *this);
  }
  if (persist && cfg_.write_checkpoint) save_checkpoint(std::filesystem::path(cfg_.out_dir) / "checkpoint.bin", cfg_.epochs);
  return log;
}

}  // namespace ltngan::train
