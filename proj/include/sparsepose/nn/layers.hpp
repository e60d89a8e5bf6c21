#pragma once

#include "sparsepose/nn/ops.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sparsepose::nn {

/// Named, ordered parameter table. Initialization is seeded fan-in uniform.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols, double fan_in);
  Tensor constant(const std::string& name, Matrix value);

  const std::vector<Tensor>& parameters() const { return params_; }
  Tensor find(const std::string& name) const;
  void zero_grad();
  std::size_t scalar_count() const;

  /// Little-endian: magic, version, count, then per parameter name length,
  /// name, rows, cols, float64 payload (row-major).
  void save(const std::filesystem::path& path) const;
  /// Loads values into an already constructed store; names and shapes must match.
  void load(const std::filesystem::path& path);

 private:
  Tensor add(const std::string& name, Matrix value);

  Rng rng_;
  std::vector<Tensor> params_;
  std::map<std::string, std::size_t> by_name_;
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, bool with_bias = true, bool zero = false);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct SubmConv3 {
  Tensor weight;  // 27 * in x out
  Tensor bias;

  SubmConv3() = default;
  SubmConv3(ParameterStore& store, const std::string& name, int in, int out);
  Tensor operator()(const Tensor& x, const NeighborTable& nbr, Exec exec = Exec::Parallel) const;
};

struct AttentionConfig {
  int channels = 32;
  int heads = 4;
  int window_small = 4;
  int window_medium = 8;
  bool scale_logits = true;  // 1 / sqrt(head dim)

  int head_dim() const { return channels / heads; }
  void validate() const;
};

/// q/k/v projections, per-window multi-head attention, output projection W (no bias).
struct WindowMhsa {
  Linear q, k, v;
  Tensor out_proj;  // C x C
  int heads = 1;
  double logit_scale = 1.0;

  WindowMhsa() = default;
  WindowMhsa(ParameterStore& store, const std::string& name, const AttentionConfig& cfg);
  Tensor operator()(const Tensor& x, const std::vector<Window>& windows, Exec exec = Exec::Parallel) const;
};

/// Small- and medium-window attention branches, concatenated, fused 2C -> C,
/// residual add, layer norm.
struct DualBranchBlock {
  WindowMhsa small, medium;
  Linear fuse;

  DualBranchBlock() = default;
  DualBranchBlock(ParameterStore& store, const std::string& name, const AttentionConfig& cfg);
  Tensor operator()(const Tensor& x, const std::vector<Window>& small_windows,
                    const std::vector<Window>& medium_windows, Exec exec = Exec::Parallel) const;
};

/// Classical momentum: v = mu v + g; p -= lr v.
class Sgd {
 public:
  Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  /// Throws NumericalError naming the first parameter with a non-finite gradient.
  void step(const std::vector<Tensor>& params);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_;
  double momentum_;
  std::map<const Node*, Matrix> velocity_;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Tensor>& params);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::map<const Node*, std::pair<Matrix, Matrix>> moments_;
};

}  // namespace sparsepose::nn
