#include <bit>
#include <cstring>
#include <fstream>

#include "ltngan/neural.hpp"

namespace ltngan::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'T', 'N', 'G', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <typename T>
  void pod(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensors(const std::vector<std::vector<double>>& ts) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(ts.size()));
    for (const auto& t : ts) {
      pod<std::uint64_t>(t.size());
      os_.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::uint64_t size) : is_(is), remaining_(size) {}

  template <typename T>
  T pod() {
    T v{};
    raw(&v, sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    check(n);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<std::vector<double>> tensors() {
    const auto count = pod<std::uint32_t>();
    std::vector<std::vector<double>> out;
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto n = pod<std::uint64_t>();
      check(n * sizeof(double));
      std::vector<double> t(n);
      raw(t.data(), n * sizeof(double));
      out.push_back(std::move(t));
    }
    return out;
  }

 private:
  void check(std::uint64_t n) const {
    if (n > remaining_) throw CheckpointError("checkpoint truncated");
  }
  void raw(void* dst, std::uint64_t n) {
    check(n);
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!is_) throw CheckpointError("checkpoint truncated");
    remaining_ -= n;
  }

  std::istream& is_;
  std::uint64_t remaining_;
};

void write_spec(Writer& w, const MlpSpec& s) {
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.layer_sizes.size()));
  for (auto v : s.layer_sizes) w.pod<std::uint64_t>(v);
  w.pod<double>(s.leaky_slope);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(s.output));
  w.pod<double>(s.dropout_rate);
  w.pod<std::uint8_t>(s.use_batchnorm ? 1 : 0);
  w.pod<double>(s.batchnorm_momentum);
}

MlpSpec read_spec(Reader& r) {
  MlpSpec s;
  const auto n = r.pod<std::uint32_t>();
  if (n > 64) throw CheckpointError("checkpoint spec has implausible depth");
  for (std::uint32_t i = 0; i < n; ++i) s.layer_sizes.push_back(r.pod<std::uint64_t>());
  s.leaky_slope = r.pod<double>();
  const auto act = r.pod<std::uint8_t>();
  if (act > static_cast<std::uint8_t>(Activation::kSoftmax)) throw CheckpointError("checkpoint has unknown activation");
  s.output = static_cast<Activation>(act);
  s.dropout_rate = r.pod<double>();
  s.use_batchnorm = r.pod<std::uint8_t>() != 0;
  s.batchnorm_momentum = r.pod<double>();
  return s;
}

}  // namespace

const ModelState& Checkpoint::model(const std::string& name) const {
  for (const auto& m : models) {
    if (m.name == name) return m;
  }
  throw CheckpointError("checkpoint has no model named '" + name + "'");
}

ModelState capture(const std::string& name, const Mlp& mlp, const Adam* opt) {
  ModelState s;
  s.name = name;
  s.spec = mlp.spec();
  s.tensors = mlp.snapshot();
  if (opt != nullptr) {
    s.adam_steps = opt->steps();
    s.adam_m = opt->first_moments();
    s.adam_v = opt->second_moments();
  }
  return s;
}

void apply(const ModelState& state, Mlp& mlp, Adam* opt) {
  if (!(state.spec == mlp.spec())) throw CheckpointError("checkpoint model '" + state.name + "' has a different spec");
  mlp.restore(state.tensors);
  if (opt != nullptr) {
    if (state.adam_m.size() != opt->first_moments().size()) {
      throw CheckpointError("checkpoint optimizer state does not match model '" + state.name + "'");
    }
    opt->first_moments() = state.adam_m;
    opt->second_moments() = state.adam_v;
    opt->set_steps(state.adam_steps);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  Writer w(os);
  w.pod<std::uint32_t>(Checkpoint::kVersion);
  w.pod<std::int64_t>(ckpt.epoch);
  w.str(ckpt.rng_state);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.models.size()));
  for (const auto& m : ckpt.models) {
    w.str(m.name);
    write_spec(w, m.spec);
    w.tensors(m.tensors);
    w.pod<std::int64_t>(m.adam_steps);
    w.tensors(m.adam_m);
    w.tensors(m.adam_v);
  }
  if (!os) throw CheckpointError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const auto size = std::filesystem::file_size(path);
  char magic[8] = {};
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  Reader r(is, size - sizeof(kMagic));
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.epoch = r.pod<std::int64_t>();
  ckpt.rng_state = r.str();
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    ModelState m;
    m.name = r.str();
    m.spec = read_spec(r);
    m.tensors = r.tensors();
    m.adam_steps = r.pod<std::int64_t>();
    m.adam_m = r.tensors();
    m.adam_v = r.tensors();
    ckpt.models.push_back(std::move(m));
  }
  return ckpt;
}

}  // namespace ltngan::nn
