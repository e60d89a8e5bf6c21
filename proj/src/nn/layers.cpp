#include "sparsepose/nn/layers.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace sparsepose::nn {

Tensor ParameterStore::add(const std::string& name, Matrix value) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor t(std::move(value), true, name);
  by_name_[name] = params_.size();
  params_.push_back(t);
  return t;
}

Tensor ParameterStore::uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols, double fan_in) {
  const double bound = 1.0 / std::sqrt(std::max(fan_in, 1.0));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng_.uniform(-bound, bound);
  return add(name, std::move(m));
}

Tensor ParameterStore::constant(const std::string& name, Matrix value) { return add(name, std::move(value)); }

Tensor ParameterStore::find(const std::string& name) const {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value().size());
  return n;
}

namespace {

constexpr char kMagic[8] = {'S', 'P', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  return v;
}

}  // namespace

void ParameterStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, params_.size());
  for (const auto& p : params_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name().size()));
    out.write(p.name().data(), static_cast<std::streamsize>(p.name().size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.cols()));
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c) put<double>(out, p.value()(r, c));
  }
  if (!out) throw DataError("checkpoint write failed: " + path.string());
}

void ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw DataError("checkpoint: bad magic");
  if (get<std::uint32_t>(in) != kVersion) throw DataError("checkpoint: unsupported version");
  const auto count = get<std::uint64_t>(in);
  if (count != params_.size()) throw DataError("checkpoint: parameter count does not match the model");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = static_cast<Eigen::Index>(get<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(get<std::uint64_t>(in));
    Tensor p = find(name);
    if (p.rows() != rows || p.cols() != cols) throw DataError("checkpoint: shape mismatch for " + name);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) p.mutable_value()(r, c) = get<double>(in);
  }
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, bool with_bias, bool zero) {
  weight = zero ? store.constant(name + ".weight", Matrix::Zero(in, out)) : store.uniform(name + ".weight", in, out, in);
  if (with_bias) bias = store.constant(name + ".bias", Matrix::Zero(1, out));
}

SubmConv3::SubmConv3(ParameterStore& store, const std::string& name, int in, int out) {
  weight = store.uniform(name + ".weight", 27 * in, out, 27.0 * in);
  bias = store.constant(name + ".bias", Matrix::Zero(1, out));
}

Tensor SubmConv3::operator()(const Tensor& x, const NeighborTable& nbr, Exec exec) const {
  return add_row(submanifold_conv(x, weight, nbr, exec), bias);
}

void AttentionConfig::validate() const {
  if (heads < 1 || channels % heads != 0) throw ConfigError("attention: channels must equal heads * head_dim");
  if (window_small < 1 || window_small >= window_medium) {
    throw ConfigError("attention: need 1 <= window_small < window_medium");
  }
}

WindowMhsa::WindowMhsa(ParameterStore& store, const std::string& name, const AttentionConfig& cfg) {
  cfg.validate();
  q = Linear(store, name + ".q", cfg.channels, cfg.channels);
  k = Linear(store, name + ".k", cfg.channels, cfg.channels);
  v = Linear(store, name + ".v", cfg.channels, cfg.channels);
  out_proj = store.uniform(name + ".out", cfg.channels, cfg.channels, cfg.channels);
  heads = cfg.heads;
  logit_scale = cfg.scale_logits ? 1.0 / std::sqrt(static_cast<double>(cfg.head_dim())) : 1.0;
}

Tensor WindowMhsa::operator()(const Tensor& x, const std::vector<Window>& windows, Exec exec) const {
  const Tensor z = window_attention(q(x), k(x), v(x), windows, heads, logit_scale, exec);
  return matmul(z, out_proj);
}

DualBranchBlock::DualBranchBlock(ParameterStore& store, const std::string& name, const AttentionConfig& cfg)
    : small(store, name + ".small", cfg),
      medium(store, name + ".medium", cfg),
      fuse(store, name + ".fuse", 2 * cfg.channels, cfg.channels) {}

Tensor DualBranchBlock::operator()(const Tensor& x, const std::vector<Window>& small_windows,
                                   const std::vector<Window>& medium_windows, Exec exec) const {
  const Tensor z = concat_cols({small(x, small_windows, exec), medium(x, medium_windows, exec)});
  return layernorm_rows(add(x, fuse(z)));
}

namespace {

void check_finite(const std::vector<Tensor>& params) {
  for (const auto& p : params) {
    if (p.has_grad() && !p.node()->grad.allFinite()) {
      throw NumericalError("non-finite gradient in parameter " + p.name());
    }
  }
}

}  // namespace

void Sgd::step(const std::vector<Tensor>& params) {
  check_finite(params);
  for (auto p : params) {
    if (!p.has_grad()) continue;
    auto [it, fresh] = velocity_.try_emplace(p.node().get(), Matrix::Zero(p.rows(), p.cols()));
    it->second = momentum_ * it->second + p.node()->grad;
    p.mutable_value() -= lr_ * it->second;
  }
}

void Adam::step(const std::vector<Tensor>& params) {
  check_finite(params);
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (auto p : params) {
    if (!p.has_grad()) continue;
    auto [it, fresh] = moments_.try_emplace(p.node().get(), Matrix::Zero(p.rows(), p.cols()),
                                            Matrix::Zero(p.rows(), p.cols()));
    auto& [m, v] = it->second;
    const Matrix& g = p.node()->grad;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    p.mutable_value().array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

}  // namespace sparsepose::nn
