// SPDX-License-Identifier: Apache-2.0
#include "drope/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "drope/kernels.hpp"

namespace drope::nd {
namespace {

thread_local bool g_grad_enabled = true;

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return node;
}

NodePtr make_node(Shape shape) {
  const std::size_t n = numel(shape);
  return make_node(std::move(shape), std::vector<double>(n, 0.0));
}

// Attaches parents and the adjoint when recording is on and some input
// requires a gradient; otherwise the result is a plain constant.
Tensor finish(NodePtr out, std::vector<NodePtr> parents, const char* op,
              std::function<void(Node&)> backward) {
  out->op = op;
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
      out->requires_grad = true;
      out->parents = std::move(parents);
      out->backward = std::move(backward);
    }
  }
  return Tensor::wrap(std::move(out));
}

bool wants(const NodePtr& p) { return p->requires_grad; }

// b's shape must equal a trailing suffix of a's shape.
std::size_t suffix_inner(const Shape& a, const Shape& b, const char* op) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    throw ShapeError(std::string(op) + ": shape " + to_string(b) +
                     " is not a trailing suffix of " + to_string(a));
  }
  return numel(b);
}

Shape batch_of(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

std::size_t normalize_axis(int i, std::size_t rank) {
  const auto r = static_cast<int>(rank);
  const int j = i < 0 ? i + r : i;
  if (j < 0 || j >= r) throw ShapeError("axis " + std::to_string(i) + " out of range");
  return static_cast<std::size_t>(j);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------

Tensor::Tensor() : node_(make_node({}, {0.0})) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto node = make_node(std::move(shape));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = nd::numel(shape);
  auto node = make_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (nd::numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + to_string(shape));
  }
  auto node = make_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

std::size_t Tensor::dim(int i) const { return shape()[normalize_axis(i, rank())]; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("at(): rank mismatch");
  std::size_t flat = 0, i = 0;
  for (std::size_t v : index) {
    if (v >= shape()[i]) throw std::out_of_range("at(): index out of range");
    flat = flat * shape()[i] + v;
    ++i;
  }
  return node_->value[flat];
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar, got shape " + to_string(shape()));
  }
  Tape tape(*this);
  tape.replay_backward();
}

Tensor Tensor::detach() const { return Tensor(make_node(shape(), node_->value)); }

Tensor Tensor::clone() const {
  auto node = make_node(shape(), node_->value);
  node->requires_grad = node_->requires_grad;
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------

Tape::Tape(const Tensor& root) : root_(root.node()) {
  // Iterative post-order DFS; parents are emitted before their children.
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root_.get(), 0);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void Tape::replay_backward() {
  auto& seed = root_->ensure_grad();
  std::fill(seed.begin(), seed.end(), 1.0);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    for (auto& p : node->parents)
      if (p->requires_grad) p->ensure_grad();
    node->backward(*node);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* node : order_)
    if (!node->parents.empty()) node->grad.clear();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t inner = suffix_inner(a.shape(), b.shape(), "add");
  auto out = make_node(a.shape());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i % inner];
  return finish(out, {a.node(), b.node()}, "add", [inner](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants(pa))
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    if (wants(pb))
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i % inner] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const std::size_t inner = suffix_inner(a.shape(), b.shape(), "sub");
  auto out = make_node(a.shape());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i % inner];
  return finish(out, {a.node(), b.node()}, "sub", [inner](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants(pa))
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    if (wants(pb))
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i % inner] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t inner = suffix_inner(a.shape(), b.shape(), "mul");
  auto out = make_node(a.shape());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i % inner];
  return finish(out, {a.node(), b.node()}, "mul", [inner](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants(pa))
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->value[i % inner];
    if (wants(pb))
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i % inner] += self.grad[i] * pa->value[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  auto out = make_node(a.shape());
  const auto av = a.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * s;
  return finish(out, {a.node()}, "scale", [s](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += s * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  auto out = make_node(a.shape());
  const auto av = a.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + s;
  return finish(out, {a.node()}, "add_scalar", [](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

Tensor square(const Tensor& a) {
  auto out = make_node(a.shape());
  const auto av = a.data();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * av[i];
  return finish(out, {a.node()}, "square", [](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += 2.0 * pa->value[i] * self.grad[i];
  });
}

Tensor gelu(const Tensor& a) {
  auto out = make_node(a.shape());
  const auto av = a.data();
  const double r2 = std::numbers::sqrt2;
  for (std::size_t i = 0; i < av.size(); ++i)
    out->value[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] / r2));
  return finish(out, {a.node()}, "gelu", [r2](Node& self) {
    auto& pa = self.parents[0];
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = pa->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(x / r2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      pa->grad[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return finish(make_node({}, {acc}), {a.node()}, "sum", [](Node& self) {
    auto& pa = self.parents[0];
    const double g = self.grad[0];
    for (double& v : pa->grad) v += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  auto out = make_node(std::move(shape), a.to_vector());
  return finish(out, {a.node()}, "reshape", [](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

Tensor gather_flat(const Tensor& a, std::span<const std::size_t> indices, Shape out_shape) {
  if (numel(out_shape) != indices.size()) {
    throw ShapeError("gather_flat: index count does not match " + to_string(out_shape));
  }
  const auto av = a.data();
  auto out = make_node(std::move(out_shape));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.size()) throw std::out_of_range("gather_flat: index out of range");
    out->value[i] = av[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return finish(out, {a.node()}, "gather", [idx = std::move(idx)](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < idx.size(); ++i) pa->grad[idx[i]] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, std::span<const std::size_t> axes) {
  const Shape& s = a.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) throw ShapeError("permute: axis count mismatch");
  std::vector<bool> used(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || used[axes[i]]) throw ShapeError("permute: invalid axes");
    used[axes[i]] = true;
    out_shape[i] = s[axes[i]];
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  std::vector<std::size_t> idx(a.numel());
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t flat = 0; flat < idx.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += counter[i] * in_stride[axes[i]];
    idx[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  return gather_flat(a, idx, std::move(out_shape));
}

Tensor permute(const Tensor& a, std::initializer_list<std::size_t> axes) {
  return permute(a, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(a, axes);
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i])
        throw ShapeError("concat: " + to_string(s) + " vs " + to_string(first));
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = numel(Shape(first.begin(), first.begin() + axis));
  const std::size_t inner = numel(Shape(first.begin() + axis + 1, first.end()));
  auto out = make_node(out_shape);
  std::vector<std::size_t> extents;
  std::vector<NodePtr> parents;
  std::size_t offset = 0;
  const std::size_t out_row = out_shape[axis] * inner;
  for (const auto& p : parts) {
    const std::size_t block = p.shape()[axis] * inner;
    const auto pv = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * block, block, out->value.begin() + o * out_row + offset);
    offset += block;
    extents.push_back(block);
    parents.push_back(p.node());
  }
  return finish(out, std::move(parents), "concat", [extents, outer, out_row](Node& self) {
    std::size_t off = 0;
    for (std::size_t j = 0; j < self.parents.size(); ++j) {
      auto& pj = self.parents[j];
      const std::size_t block = extents[j];
      if (wants(pj))
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < block; ++i)
            pj->grad[o * block + i] += self.grad[o * out_row + off + i];
      off += block;
    }
  });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw ShapeError("slice out of range on " + to_string(s));
  }
  const std::size_t outer = numel(Shape(s.begin(), s.begin() + axis));
  const std::size_t inner = numel(Shape(s.begin() + axis + 1, s.end()));
  std::vector<std::size_t> idx;
  idx.reserve(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < length; ++j)
      for (std::size_t i = 0; i < inner; ++i) idx.push_back((o * s[axis] + start + j) * inner + i);
  Shape out_shape = s;
  out_shape[axis] = length;
  return gather_flat(a, idx, std::move(out_shape));
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  if (a.rank() == 0) throw ShapeError("gather_rows on scalar");
  const std::size_t rows = a.shape()[0];
  const std::size_t row = a.numel() / std::max<std::size_t>(rows, 1);
  std::vector<std::size_t> idx;
  idx.reserve(indices.size() * row);
  for (std::size_t r : indices) {
    if (r >= rows) throw std::out_of_range("gather_rows: row index out of range");
    for (std::size_t i = 0; i < row; ++i) idx.push_back(r * row + i);
  }
  Shape out_shape = a.shape();
  out_shape[0] = indices.size();
  return gather_flat(a, idx, std::move(out_shape));
}

Tensor expand(const Tensor& a, Shape shape) {
  const Shape& s = a.shape();
  if (s.size() != shape.size()) throw ShapeError("expand: rank mismatch");
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] != shape[i] && s[i] != 1)
      throw ShapeError("expand: " + to_string(s) + " -> " + to_string(shape));
  const std::size_t r = s.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  std::vector<std::size_t> idx(numel(shape));
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t flat = 0; flat < idx.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += (s[i] == 1 ? 0 : counter[i]) * in_stride[i];
    idx[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < shape[i]) break;
      counter[i] = 0;
    }
  }
  return gather_flat(a, idx, std::move(shape));
}

// ---------------------------------------------------------------------------
// Linear algebra and layers

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul inner extents differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const Shape ba = batch_of(a.shape()), bb = batch_of(b.shape());

  if (bb.empty()) {
    // Shared right operand: fold a's batch into rows.
    const std::size_t rows = numel(ba) * m;
    Shape out_shape = ba;
    out_shape.push_back(m);
    out_shape.push_back(n);
    auto out = make_node(out_shape);
    kernels::gemm(a.data().data(), b.data().data(), out->value.data(), rows, k, n, false, false,
                  false);
    return finish(out, {a.node(), b.node()}, "matmul", [rows, k, n](Node& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (wants(pa))
        kernels::gemm(self.grad.data(), pb->value.data(), pa->grad.data(), rows, n, k, false,
                      true, true);
      if (wants(pb))
        kernels::gemm(pa->value.data(), self.grad.data(), pb->grad.data(), k, rows, n, true,
                      false, true);
    });
  }

  if (ba == bb) {
    const std::size_t batch = numel(ba);
    Shape out_shape = ba;
    out_shape.push_back(m);
    out_shape.push_back(n);
    auto out = make_node(out_shape);
    kernels::gemm_batched(a.data().data(), b.data().data(), out->value.data(), batch, m, k, n,
                          false, false, false);
    return finish(out, {a.node(), b.node()}, "matmul", [batch, m, k, n](Node& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (wants(pa))
        kernels::gemm_batched(self.grad.data(), pb->value.data(), pa->grad.data(), batch, m, n,
                              k, false, true, true);
      if (wants(pb))
        kernels::gemm_batched(pa->value.data(), self.grad.data(), pb->grad.data(), batch, k, m,
                              n, true, false, true);
    });
  }

  if (ba.empty()) {
    const std::size_t batch = numel(bb);
    Shape out_shape = bb;
    out_shape.push_back(m);
    out_shape.push_back(n);
    auto out = make_node(out_shape);
    for (std::size_t i = 0; i < batch; ++i)
      kernels::gemm(a.data().data(), b.data().data() + i * k * n, out->value.data() + i * m * n,
                    m, k, n, false, false, false);
    return finish(out, {a.node(), b.node()}, "matmul", [batch, m, k, n](Node& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      for (std::size_t i = 0; i < batch; ++i) {
        if (wants(pa))
          kernels::gemm(self.grad.data() + i * m * n, pb->value.data() + i * k * n,
                        pa->grad.data(), m, n, k, false, true, true);
        if (wants(pb))
          kernels::gemm(pa->value.data(), self.grad.data() + i * m * n,
                        pb->grad.data() + i * k * n, k, m, n, true, false, true);
      }
    });
  }

  throw ShapeError("matmul batch dims not broadcastable: " + to_string(a.shape()) + " x " +
                   to_string(b.shape()));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() == 0 || x.dim(-1) != weight.dim(1)) {
    throw ShapeError("linear: x " + to_string(x.shape()) + " vs weight " +
                     to_string(weight.shape()));
  }
  const std::size_t in = weight.dim(1), outf = weight.dim(0);
  const bool has_bias = bias.numel() > 0 && bias.rank() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != outf)) {
    throw ShapeError("linear: bias " + to_string(bias.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outf;
  auto out = make_node(out_shape);
  kernels::gemm(x.data().data(), weight.data().data(), out->value.data(), rows, in, outf, false,
                true, false);
  if (has_bias) {
    const auto bv = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < outf; ++o) out->value[r * outf + o] += bv[o];
  }
  std::vector<NodePtr> parents{x.node(), weight.node()};
  if (has_bias) parents.push_back(bias.node());
  return finish(out, std::move(parents), "linear", [rows, in, outf, has_bias](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    if (wants(px))
      kernels::gemm(self.grad.data(), pw->value.data(), px->grad.data(), rows, outf, in, false,
                    false, true);
    if (wants(pw))
      kernels::gemm(self.grad.data(), px->value.data(), pw->grad.data(), outf, rows, in, true,
                    false, true);
    if (has_bias && wants(self.parents[2])) {
      auto& gb = self.parents[2]->grad;
      for (std::size_t o = 0; o < outf; ++o) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r) acc += self.grad[r * outf + o];
        gb[o] += acc;
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight) {
  return linear(x, weight, Tensor::zeros({0}));
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) throw ShapeError("embedding table must be rank 2");
  return gather_rows(table, ids);
}

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax on scalar");
  const std::size_t n = a.dim(-1);
  const std::size_t rows = a.numel() / std::max<std::size_t>(n, 1);
  auto out = make_node(a.shape());
  const auto av = a.data();
#pragma omp parallel for schedule(static) if (rows * n > 65536)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const double* x = av.data() + r * n;
    double* y = out->value.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    if (mx == -std::numeric_limits<double>::infinity()) {
      std::fill(y, y + n, 0.0);
      continue;
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - mx);
      z += y[i];
    }
    for (std::size_t i = 0; i < n; ++i) y[i] /= z;
  }
  return finish(out, {a.node()}, "softmax", [rows, n](Node& self) {
    auto& pa = self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < n; ++i) pa->grad[r * n + i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm on scalar");
  const std::size_t n = x.dim(-1);
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw ShapeError("layer_norm: scale/shift must be [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.numel() / n;
  auto out = make_node(x.shape());
  std::vector<double> xhat(x.numel()), rstd(rows);
  const auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (xr[i] - mu) * rstd[r];
      out->value[r * n + i] = gv[i] * xhat[r * n + i] + bv[i];
    }
  }
  return finish(out, {x.node(), gamma.node(), beta.node()}, "layer_norm",
                [rows, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                  auto& px = self.parents[0];
                  auto& pg = self.parents[1];
                  auto& pb = self.parents[2];
                  const double inv_n = 1.0 / static_cast<double>(n);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* g = self.grad.data() + r * n;
                    const double* xh = xhat.data() + r * n;
                    if (wants(pg))
                      for (std::size_t i = 0; i < n; ++i) pg->grad[i] += g[i] * xh[i];
                    if (wants(pb))
                      for (std::size_t i = 0; i < n; ++i) pb->grad[i] += g[i];
                    if (wants(px)) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t i = 0; i < n; ++i) {
                        const double d = g[i] * pg->value[i];
                        m1 += d;
                        m2 += d * xh[i];
                      }
                      m1 *= inv_n;
                      m2 *= inv_n;
                      for (std::size_t i = 0; i < n; ++i)
                        px->grad[r * n + i] +=
                            rstd[r] * (g[i] * pg->value[i] - m1 - xh[i] * m2);
                    }
                  }
                });
}

Tensor masked_mse(const Tensor& pred, const Tensor& target, std::span<const char> mask) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("masked_mse: " + to_string(pred.shape()) + " vs " +
                     to_string(target.shape()));
  }
  if (mask.size() != pred.numel()) throw ShapeError("masked_mse: mask length mismatch");
  const std::size_t count =
      static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](char c) { return c; }));
  if (count == 0) throw std::invalid_argument("masked_mse: mask selects no elements");
  const auto pv = pred.data(), tv = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i)
    if (mask[i]) acc += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<char> m(mask.begin(), mask.end());
  return finish(make_node({}, {acc * inv}), {pred.node(), target.node()}, "masked_mse",
                [m = std::move(m), inv](Node& self) {
                  auto& pp = self.parents[0];
                  auto& pt = self.parents[1];
                  const double g = 2.0 * inv * self.grad[0];
                  for (std::size_t i = 0; i < m.size(); ++i) {
                    if (!m[i]) continue;
                    const double d = g * (pp->value[i] - pt->value[i]);
                    if (wants(pp)) pp->grad[i] += d;
                    if (wants(pt)) pt->grad[i] -= d;
                  }
                });
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b) {
  const bool batched = x.rank() == 5;
  if (!batched && x.rank() != 4) throw ShapeError("conv3d: x must be rank 4 or 5");
  if (w.rank() != 5 || w.dim(2) != 3 || w.dim(3) != 3 || w.dim(4) != 3)
    throw ShapeError("conv3d: weight must be [C_out, C_in, 3, 3, 3]");
  kernels::ConvDims dims;
  const std::size_t off = batched ? 1 : 0;
  dims.batch = batched ? x.dim(0) : 1;
  dims.c_in = x.shape()[off];
  dims.d = x.shape()[off + 1];
  dims.h = x.shape()[off + 2];
  dims.w = x.shape()[off + 3];
  dims.c_out = w.dim(0);
  if (w.dim(1) != dims.c_in) {
    throw ShapeError("conv3d: input has " + std::to_string(dims.c_in) +
                     " channels, weight expects " + std::to_string(w.dim(1)));
  }
  if (b.shape() != Shape{dims.c_out}) throw ShapeError("conv3d: bias must be [C_out]");
  Shape out_shape = x.shape();
  out_shape[off] = dims.c_out;
  auto out = make_node(out_shape);
  kernels::conv3d_forward(x.data().data(), w.data().data(), b.data().data(), out->value.data(),
                          dims);
  return finish(out, {x.node(), w.node(), b.node()}, "conv3d", [dims](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    if (wants(px))
      kernels::conv3d_backward_input(self.grad.data(), pw->value.data(), px->grad.data(), dims);
    if (wants(pw) || wants(pb)) {
      std::vector<double> dw_scratch;
      double* dw = nullptr;
      if (wants(pw)) {
        dw = pw->grad.data();
      } else {
        dw_scratch.assign(pw->value.size(), 0.0);
        dw = dw_scratch.data();
      }
      kernels::conv3d_backward_weight(self.grad.data(), px->value.data(), dw,
                                      wants(pb) ? pb->grad.data() : nullptr, dims);
    }
  });
}

RotaryTable RotaryTable::from_angles(std::size_t lq, std::size_t lk, std::size_t pairs,
                                     std::span<const double> angles) {
  if (angles.size() != lq * lk * pairs) throw ShapeError("RotaryTable: angle count mismatch");
  RotaryTable t;
  t.lq = lq;
  t.lk = lk;
  t.pairs = pairs;
  t.cos.resize(angles.size());
  t.sin.resize(angles.size());
  for (std::size_t i = 0; i < angles.size(); ++i) {
    t.cos[i] = std::cos(angles[i]);
    t.sin[i] = std::sin(angles[i]);
  }
  return t;
}

Tensor rotary_scores(const Tensor& q, const Tensor& k, std::shared_ptr<const RotaryTable> table) {
  if (!table) throw std::invalid_argument("rotary_scores: null table");
  if (q.rank() != 3 || k.rank() != 3 || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2))
    throw ShapeError("rotary_scores: q " + to_string(q.shape()) + ", k " + to_string(k.shape()));
  kernels::RotaryDims dims{q.dim(0), q.dim(1), k.dim(1), table->pairs};
  if (q.dim(2) != dims.head_dim() || table->lq != dims.lq || table->lk != dims.lk)
    throw ShapeError("rotary_scores: table does not match q/k extents");
  auto out = make_node({dims.batch, dims.lq, dims.lk});
  kernels::rotary_scores_forward(q.data().data(), k.data().data(), table->cos.data(),
                                 table->sin.data(), out->value.data(), dims);
  return finish(out, {q.node(), k.node()}, "rotary_scores",
                [dims, table = std::move(table)](Node& self) {
                  auto& pq = self.parents[0];
                  auto& pk = self.parents[1];
                  kernels::rotary_scores_backward(
                      self.grad.data(), pq->value.data(), pk->value.data(), table->cos.data(),
                      table->sin.data(), wants(pq) ? pq->grad.data() : nullptr,
                      wants(pk) ? pk->grad.data() : nullptr, dims);
                });
}

}  // namespace drope::nd
