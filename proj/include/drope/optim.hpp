// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "drope/layers.hpp"

namespace drope::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One AdamW step on a flat buffer, t >= 1. Decay (p -= lr * wd * p) uses
/// the pre-step value and is skipped when `decay` is false. An empty `g`
/// counts as a zero gradient. Throws NonFiniteGradient before touching
/// anything if g holds a NaN or infinity.
void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                  std::span<double> v, double lr, double wd, const AdamWConfig& cfg,
                  std::size_t t, bool decay = true);

class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(layers::ParameterList params, AdamWConfig cfg = {});

  /// Applies one update from the gradients currently stored on the
  /// parameters. The whole step is rejected if any gradient is not finite.
  void step(double lr, double wd);
  void zero_grad();

  std::size_t steps() const { return t_; }
  void set_steps(std::size_t t) { t_ = t; }
  const layers::ParameterList& params() const { return params_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  layers::ParameterList params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Linear warmup from 0 to `start` over the first `warmup` steps, then a
/// half-cosine from `start` (at t = warmup) to `final` (at t = T).
double cosine_schedule(double t, double T, double warmup, double start, double final);

}  // namespace drope::optim
