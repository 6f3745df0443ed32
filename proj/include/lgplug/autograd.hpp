#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lgplug/matrix.hpp"

namespace lgplug::ad {

// Define-by-run reverse-mode autodiff over Matrix values. Each op records
// its parents and a backprop closure; creation order doubles as the
// topological order, so backward() is a single sorted sweep. Leaves created
// with requires_grad=true accumulate into .grad(); everything else is
// transient per step.

struct Node {
  Matrix val;
  Matrix grad;
  bool requires_grad = false;
  std::uint64_t order = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Matrix& ensure_grad() {
    if (grad.rows() != val.rows() || grad.cols() != val.cols())
      grad = Matrix(val.rows(), val.cols());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var leaf(Matrix value, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->val; }
  Matrix& value() { return node_->val; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() {
    if (node_) node_->grad = Matrix(node_->val.rows(), node_->val.cols());
  }
  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix m);
Var param(Matrix m);

Var matmul(Var a, Var b);       // a·b
Var matmul_nt(Var a, Var b);    // a·bᵀ
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
Var scale_by(Var a, Var s);     // s is 1×1
Var add_row_bias(Var a, Var bias);
Var add_scalar(Var a, double c);
Var sub_from_scalar(double c, Var a);
Var negate(Var a);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var gelu(Var a);
Var square(Var a);
Var exp_elem(Var a);
Var row_l2_normalize(Var a);
Var softmax_rows(Var a);
Var rows_gather(Var a, std::vector<std::size_t> idx);
Var spmm(const SparseMatrix& s, Var a);  // s is a constant operand
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var mean_rows(Var a);           // 1×c
Var mean_all(Var a);            // 1×1
Var sum_all(Var a);             // 1×1
Var row_dot(Var a, Var b);      // n×1
Var row_max(Var a);             // n×1, subgradient to the first argmax
Var neg_logsumexp_rows(Var a, double temperature);  // n×1
Var cross_entropy_identity(Var logits);             // scalar, targets = row index
Var cross_entropy(Var logits, const std::vector<std::size_t>& targets);
Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);

// Backpropagate from a 1×1 loss node through every reachable node that
// requires gradients. Leaf .grad() fields accumulate; call zero_grad on
// parameters between steps.
void backward(Var loss);

// Named trainable leaves plus their Adam state. Ordering is the checkpoint
// serialization order.
class ParamStore {
 public:
  Var create(const std::string& name, Matrix init);
  void adopt(const std::string& name, Var v);
  Var get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<std::pair<std::string, Var>>& items() { return items_; }
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 added to gradients
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(ParamStore& params);
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace lgplug::ad
