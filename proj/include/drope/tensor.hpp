// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense row-major tensors of doubles with a reverse-mode tape.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their parents and an adjoint closure; backward()
// orders the reachable nodes topologically and replays the adjoints in
// reverse. Broadcasting is never implicit except where an op documents it
// (a trailing-suffix second operand, or a shared weight in matmul).

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace drope::nd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents
  const char* op = "leaf";

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

class Tensor {
 public:
  Tensor();  // rank-0 zero

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  /// Extent of axis i; negative i counts from the back.
  std::size_t dim(int i) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> data() { return node_->value; }
  std::vector<double> to_vector() const { return node_->value; }
  /// Gradient buffer; empty when no gradient has reached this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->parents.empty(); }
  void zero_grad() { node_->grad.clear(); }

  /// Seeds d(this)/d(this) = 1 and accumulates into every reachable leaf.
  /// Rejects non-scalar tensors.
  void backward() const;

  /// Same values, no history, no gradient.
  Tensor detach() const;
  Tensor clone() const;

  const NodePtr& node() const { return node_; }
  static Tensor wrap(NodePtr node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Topologically ordered record of the nodes reachable from a root.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  /// Parents precede children; each node appears exactly once.
  const std::vector<Node*>& nodes() const { return order_; }
  /// Seeds the root gradient with ones and runs every adjoint in reverse.
  void replay_backward();

 private:
  NodePtr root_;
  std::vector<Node*> order_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Elementwise. The second operand may have a shape equal to a trailing suffix
// of the first operand's shape; it is then repeated over the leading axes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---------------------------------------------------------------------------
// Shape manipulation.

Tensor reshape(const Tensor& a, Shape shape);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor permute(const Tensor& a, std::span<const std::size_t> axes);
Tensor permute(const Tensor& a, std::initializer_list<std::size_t> axes);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Selects sub-tensors along axis 0: out[i] = a[indices[i]].
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
/// out.flat[i] = a.flat[indices[i]]; the adjoint scatter-adds.
Tensor gather_flat(const Tensor& a, std::span<const std::size_t> indices, Shape out_shape);
/// Explicit numpy-style broadcast: a's rank must equal shape's rank and each
/// extent must match or be 1.
Tensor expand(const Tensor& a, Shape shape);

// ---------------------------------------------------------------------------
// Linear algebra and layers.

/// a [..., m, k] x b [..., k, n]. Leading dims must match exactly, or b may
/// be rank 2 (a shared matrix), or a may be rank 2.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [..., in] * weight[out, in]^T + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor linear(const Tensor& x, const Tensor& weight);
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);
/// Softmax over the last axis; -inf entries map to exactly 0.
Tensor softmax(const Tensor& a);
/// Normalizes the last axis then applies gamma * x_hat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Mean of (pred - target)^2 over positions where mask is true.
Tensor masked_mse(const Tensor& pred, const Tensor& target, std::span<const char> mask);
/// 3x3x3 convolution, stride 1, zero padding 1. x is [C_in, D, H, W] or
/// [N, C_in, D, H, W]; w is [C_out, C_in, 3, 3, 3]; b is [C_out].
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b);

/// Per-pair rotation angles for relative rotary attention: entry
/// (m, n, i) is the angle applied to the i-th 2D sub-pair of the head
/// dimension when query m meets key n.
struct RotaryTable {
  std::size_t lq = 0, lk = 0, pairs = 0;
  std::vector<double> cos, sin;  // lq * lk * pairs

  static RotaryTable from_angles(std::size_t lq, std::size_t lk, std::size_t pairs,
                                 std::span<const double> angles);
};

/// scores[b, m, n] = q[b, m]^T R(m, n) k[b, n] where R is block diagonal with
/// 2x2 blocks [[cos, -sin], [sin, cos]] taken from the table. q is
/// [B, Lq, dh], k is [B, Lk, dh], dh = 2 * table.pairs.
Tensor rotary_scores(const Tensor& q, const Tensor& k,
                     std::shared_ptr<const RotaryTable> table);

}  // namespace drope::nd
