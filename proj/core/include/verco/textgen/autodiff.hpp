#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "verco/textgen/tensor.hpp"

// Tensor-level reverse-mode differentiation. Every op records its parents
// and a closure that pushes the output gradient back into them; backward()
// runs the closures in reverse topological order. Nodes that need no
// gradient (frozen weights, constants, anything built under NoGradGuard)
// carry no closure and are skipped.
namespace verco::textgen::ad {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  // Direct write access for optimizers and weight loading.
  Tensor& mutable_value() { return node_->value; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }
  bool requires_grad() const { return node_->requires_grad; }
  int rows() const { return node_->value.rows; }
  int cols() const { return node_->value.cols; }
  // Value of a 1x1 variable.
  Scalar item() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  std::shared_ptr<Node> node_;
};

// A persistent leaf; gradients accumulate into it when `trainable`.
Var parameter(Tensor value, bool trainable);
Var constant(Tensor value);
Var scalar(Scalar v);

bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Accumulates d(loss)/d(leaf) into every trainable leaf reachable from the
// 1x1 `loss`. Throws UsageError when loss is not a scalar or carries no
// graph to any trainable parameter.
void backward(const Var& loss);

// --- linear algebra ------------------------------------------------------
Var matmul_nt(const Var& x, const Var& w);  // x[T x k] * w[d x k]^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);        // elementwise
Var add_row(const Var& x, const Var& bias);  // x[T x d] + bias[1 x d]
Var scale(const Var& a, Scalar s);
Var add_scalar(const Var& a, Scalar s);
Var neg(const Var& a);

// --- elementwise ---------------------------------------------------------
Var exp(const Var& a);
Var square(const Var& a);
Var gelu(const Var& a);
Var clamp(const Var& a, Scalar lo, Scalar hi);
// Elementwise min/max; ties take the first argument's gradient.
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);

// --- reductions and reshaping ----------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var gather_rows(const Var& x, std::span<const int> rows);
Var concat_rows(std::span<const Var> parts);
// out[s] = sum of x[i] over i with segment[i] == s; x is n x 1.
Var segment_sum(const Var& x, std::span<const int> segment, int num_segments);
Var detach(const Var& x);

// --- sequence model pieces -------------------------------------------------
Var embedding(const Var& table, std::span<const int> ids);
Var rms_norm(const Var& x, const Var& gain, Scalar eps = 1e-5);
// Rotary position encoding applied per head to consecutive feature pairs.
Var rope(const Var& x, std::span<const int> positions, int n_heads);

// Row i may attend to column j iff allowed[i * T + j]; an empty mask means
// plain causal. Allowed sets must be subsets of the causal set (j <= i).
struct AttentionMask {
  int size = 0;
  std::vector<std::uint8_t> allowed;
  bool causal_only() const { return allowed.empty(); }
  bool permits(int i, int j) const {
    return j <= i && (allowed.empty() || allowed[static_cast<std::size_t>(i) * size + j] != 0);
  }
};
Var attention(const Var& q, const Var& k, const Var& v, int n_heads, std::shared_ptr<const AttentionMask> mask);

// out[i] = log_softmax(x[i])[cols[i]], x is n x V, out n x 1.
Var log_softmax_pick(const Var& x, std::span<const int> cols);
// Treats all entries of x (n x 1) as one distribution.
Var log_softmax_vector(const Var& x);

}  // namespace verco::textgen::ad
