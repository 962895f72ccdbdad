// SPDX-License-Identifier: Apache-2.0
#include "drope/layers.hpp"

#include <cmath>

namespace drope::layers {

nd::Tensor uniform_tensor(nd::Shape shape, double bound, Rng& rng) {
  std::vector<double> v(nd::numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return nd::Tensor::from(std::move(shape), std::move(v), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(uniform_tensor({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias(nd::Tensor::zeros({out}, true)) {}

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, false});
}

LayerNorm::LayerNorm(std::size_t n)
    : gamma(nd::Tensor::full({n}, 1.0, true)), beta(nd::Tensor::zeros({n}, true)) {}

void LayerNorm::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".gamma", gamma, false});
  out.push_back({prefix + ".beta", beta, false});
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace drope::layers
