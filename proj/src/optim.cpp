// SPDX-License-Identifier: Apache-2.0
#include "drope/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace drope::optim {
namespace {

bool all_finite(std::span<const double> g) {
  for (double x : g)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                  std::span<double> v, double lr, double wd, const AdamWConfig& cfg,
                  std::size_t t, bool decay) {
  if (t == 0) throw std::invalid_argument("adamw_update: step counter starts at 1");
  if (m.size() != p.size() || v.size() != p.size() || (!g.empty() && g.size() != p.size()))
    throw std::invalid_argument("adamw_update: buffer sizes differ");
  if (!all_finite(g)) throw NonFiniteGradient("adamw_update: non-finite gradient");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g.empty() ? 0.0 : g[i];
    if (decay) p[i] -= lr * wd * p[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
    p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
  }
}

AdamW::AdamW(layers::ParameterList params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(double lr, double wd) {
  for (const auto& p : params_)
    if (!all_finite(p.tensor.grad()))
      throw NonFiniteGradient("non-finite gradient in parameter '" + p.name + "'");
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto tensor = params_[i].tensor;
    adamw_update(tensor.data(), tensor.grad(), m_[i], v_[i], lr, wd, cfg_, t_, params_[i].decay);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double cosine_schedule(double t, double T, double warmup, double start, double final) {
  if (warmup < 0.0 || warmup > T) throw std::invalid_argument("cosine_schedule: warmup > T");
  if (t < 0.0 || t > T) throw std::invalid_argument("cosine_schedule: t outside [0, T]");
  if (t < warmup) return start * t / warmup;
  if (t == warmup) return start;
  const double progress = (t - warmup) / (T - warmup);
  // Anchored at `final` so that t == T returns it exactly (cos(pi) == -1).
  return final + (start - final) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

}  // namespace drope::optim
