#pragma once

#include "sparsepose/common.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sparsepose::nn {

using Matrix = Eigen::MatrixXd;

struct Node {
  Matrix value;
  Matrix grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  std::string name;

  void accumulate(const Matrix& g);
};

/// 2-D float64 value with reverse-mode gradient. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false, std::string name = {});

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Gradient, or zeros of the value's shape when none was accumulated.
  Matrix grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }
  const std::string& name() const { return node_->name; }

  /// Seeds d(this)/d(this) = 1 (this must be 1x1) and propagates to leaves.
  void backward() const;
  Tensor detach() const { return Tensor::constant(node_->value); }

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Creates an op output; requires_grad is inherited from the parents.
  static Tensor make(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward);

 private:
  std::shared_ptr<Node> node_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace sparsepose::nn
