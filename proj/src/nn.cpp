#include "gae/nn.hpp"

#include "gae/error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <unordered_set>

namespace gae {

// ParamStore ---------------------------------------------------------------

Tensor ParamStore::create(const std::string& name, Mat init, int rank) {
  if (name.empty()) throw UsageError("param: empty name");
  if (name.size() > 0xffff) throw UsageError("param: name too long: " + name);
  if (rank < 0 || rank > 2) throw UsageError("param '" + name + "': rank must be 0, 1, or 2");
  if (index_.count(name)) throw UsageError("param '" + name + "': duplicate name");
  if (rank == 1 && init.cols() != 1) throw UsageError("param '" + name + "': rank-1 values must be single-column");
  if (rank == 0 && init.size() != 1) throw UsageError("param '" + name + "': rank-0 values must be 1x1");
  Entry e;
  e.name = name;
  e.rank = rank;
  e.param = Tensor::matrix(std::move(init), true);
  e.m = Mat::Zero(e.param.rows(), e.param.cols());
  e.v = Mat::Zero(e.param.rows(), e.param.cols());
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return entries_.back().param;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

Tensor ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("param '" + name + "': not registered");
  return entries_[it->second].param;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.param.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.param.zero_grad();
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& e : entries_) sq += e.param.grad().squaredNorm();
  return std::sqrt(sq);
}

void ParamStore::clip_grad_norm(double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be > 0");
  const double norm = grad_norm();
  if (norm <= max_norm) return;
  // Scale via zero + add: computing the delta g*(s - 1) instead would round
  // (s - 1) to exactly -1 once norm exceeds ~1e17 and silently zero the grads.
  const double s = max_norm / norm;
  for (auto& e : entries_) {
    Mat g = e.param.grad() * s;
    e.param.zero_grad();
    e.param.add_grad(g);
  }
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("adam: lr must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
  for (auto& e : entries_) {
    const Mat& g = e.param.grad();
    e.m = beta1 * e.m + (1.0 - beta1) * g;
    e.v = (beta2 * e.v.array() + (1.0 - beta2) * g.array().square()).matrix();
    e.step += 1;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(e.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(e.step));
    Mat update = ((e.m.array() / c1) / ((e.v.array() / c2).sqrt() + eps)).matrix();
    e.param.set_value(e.param.value() - lr * update);
  }
}

void ParamStore::accumulate_sink(const GradSink& sink, double weight) {
  for (auto& e : entries_) {
    auto it = sink.find(e.param.id());
    if (it == sink.end()) continue;
    if (weight == 1.0)
      e.param.add_grad(it->second);
    else
      e.param.add_grad(it->second * weight);
  }
}

// checkpoint ----------------------------------------------------------------

namespace {

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(os, b, sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::string& path) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T)))
    throw CheckpointError(path + ": truncated checkpoint");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

struct RawEntry {
  int rank = 2;
  std::vector<std::uint64_t> dims;
  Mat values;
};

}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError(path + ": cannot open for writing");
  put_bytes(os, "GAE1", 4);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    put_bytes(os, e.name.data(), e.name.size());
    const int rank = e.rank;
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(rank));
    const Mat& v = e.param.value();
    if (rank == 2) {
      put_le<std::uint64_t>(os, static_cast<std::uint64_t>(v.rows()));
      put_le<std::uint64_t>(os, static_cast<std::uint64_t>(v.cols()));
    } else if (rank == 1) {
      put_le<std::uint64_t>(os, static_cast<std::uint64_t>(v.rows()));
    }
    for (Index i = 0; i < v.rows(); ++i)
      for (Index j = 0; j < v.cols(); ++j)
        put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v(i, j)));
  }
  if (!os) throw CheckpointError(path + ": write failed");
}

void ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(path + ": cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "GAE1")
    throw CheckpointError(path + ": bad magic, not a GAE1 checkpoint");
  const auto count = get_le<std::uint32_t>(is, path);
  if (count != entries_.size())
    throw CheckpointError(path + ": parameter count " + std::to_string(count) + " does not match model (" +
                          std::to_string(entries_.size()) + ")");
  std::unordered_map<std::string, RawEntry> raw;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = get_le<std::uint16_t>(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw CheckpointError(path + ": truncated checkpoint");
    RawEntry re;
    re.rank = static_cast<int>(get_le<std::uint8_t>(is, path));
    if (re.rank < 0 || re.rank > 2) throw CheckpointError(path + ": parameter '" + name + "' has unsupported rank");
    for (int d = 0; d < re.rank; ++d) re.dims.push_back(get_le<std::uint64_t>(is, path));
    Index rows = 1, cols = 1;
    if (re.rank == 1) rows = static_cast<Index>(re.dims[0]);
    if (re.rank == 2) {
      rows = static_cast<Index>(re.dims[0]);
      cols = static_cast<Index>(re.dims[1]);
    }
    re.values.resize(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j)
        re.values(i, j) = std::bit_cast<double>(get_le<std::uint64_t>(is, path));
    if (raw.count(name)) throw CheckpointError(path + ": duplicate parameter '" + name + "'");
    raw.emplace(std::move(name), std::move(re));
  }
  for (auto& e : entries_) {
    auto it = raw.find(e.name);
    if (it == raw.end()) throw CheckpointError(path + ": missing parameter '" + e.name + "'");
    const RawEntry& re = it->second;
    if (re.rank != e.rank)
      throw CheckpointError(path + ": rank mismatch for '" + e.name + "'");
    if (re.values.rows() != e.param.rows() || re.values.cols() != e.param.cols())
      throw CheckpointError(path + ": shape mismatch for '" + e.name + "'");
    e.param.set_value(re.values);
    e.m.setZero();
    e.v.setZero();
    e.step = 0;
  }
}

// MLP ------------------------------------------------------------------------

Mat glorot(Index fan_in, Index fan_out, Rng& rng) {
  return glorot_block(fan_in, fan_out, fan_in, fan_out, rng);
}

Mat glorot_block(Index rows, Index cols, Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat w(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-bound, bound);
  return w;
}

namespace {

void validate_spec(const MlpSpec& spec) {
  if (spec.layer_widths.size() < 2) throw ConfigError("mlp: need at least [d_in, d_out] widths");
  for (Index w : spec.layer_widths)
    if (w < 1) throw ConfigError("mlp: layer widths must be >= 1");
}

}  // namespace

Mlp make_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
  validate_spec(spec);
  Mlp m;
  m.spec = spec;
  const auto& w = spec.layer_widths;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    m.weights.push_back(store.create(prefix + ".w" + std::to_string(i), glorot(w[i], w[i + 1], rng), 2));
    m.biases.push_back(store.create(prefix + ".b" + std::to_string(i), Mat::Zero(w[i + 1], 1), 1));
  }
  if (spec.layer_norm_after) {
    m.ln_gain = store.create(prefix + ".ln_g", Mat::Ones(w.back(), 1), 1);
    m.ln_bias = store.create(prefix + ".ln_b", Mat::Zero(w.back(), 1), 1);
  }
  return m;
}

Mlp find_mlp(const ParamStore& store, const std::string& prefix, const MlpSpec& spec) {
  validate_spec(spec);
  Mlp m;
  m.spec = spec;
  for (std::size_t i = 0; i + 1 < spec.layer_widths.size(); ++i) {
    m.weights.push_back(store.at(prefix + ".w" + std::to_string(i)));
    m.biases.push_back(store.at(prefix + ".b" + std::to_string(i)));
  }
  if (spec.layer_norm_after) {
    m.ln_gain = store.at(prefix + ".ln_g");
    m.ln_bias = store.at(prefix + ".ln_b");
  }
  return m;
}

Tensor mlp_apply(const Mlp& mlp, const Tensor& x) {
  validate_spec(mlp.spec);
  const auto& w = mlp.spec.layer_widths;
  if (x.cols() != w.front())
    throw DimensionError("mlp_apply: input width " + std::to_string(x.cols()) + " != d_in " + std::to_string(w.front()));
  Tensor h = x;
  const std::size_t n_affine = w.size() - 1;
  for (std::size_t i = 0; i < n_affine; ++i) {
    h = add_rowvec(matmul(h, mlp.weights[i]), mlp.biases[i]);
    if (i + 1 < n_affine) h = elu(h);
  }
  if (mlp.spec.layer_norm_after) h = layer_norm(h, mlp.ln_gain, mlp.ln_bias, kLayerNormEps);
  if (w.front() == w.back()) h = add(h, x);
  return h;
}

}  // namespace gae
