// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "drope/rng.hpp"
#include "drope/tensor.hpp"

namespace drope::layers {

/// A trainable tensor with a stable name for checkpoints. `decay` marks
/// matrices that receive weight decay; biases, norms and tokens do not.
struct Parameter {
  std::string name;
  nd::Tensor tensor;
  bool decay = true;
};

using ParameterList = std::vector<Parameter>;

nd::Tensor uniform_tensor(nd::Shape shape, double bound, Rng& rng);

struct Linear {
  nd::Tensor weight;  // [out, in]
  nd::Tensor bias;    // [out]

  Linear() = default;
  /// Weights uniform in +-1/sqrt(in), zero bias.
  Linear(std::size_t in, std::size_t out, Rng& rng);

  nd::Tensor operator()(const nd::Tensor& x) const { return nd::linear(x, weight, bias); }
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct LayerNorm {
  nd::Tensor gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t n);

  nd::Tensor operator()(const nd::Tensor& x) const { return nd::layer_norm(x, gamma, beta); }
  void collect(ParameterList& out, const std::string& prefix) const;
};

std::size_t parameter_count(const ParameterList& params);

}  // namespace drope::layers
