// SPDX-License-Identifier: Apache-2.0
#include "drope/dspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace drope::dspace {

BVector::BVector(double x, double y, double z) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
    throw std::invalid_argument("BVector: non-finite component");
  const double norm = std::sqrt(x * x + y * y + z * z);
  if (norm == 0.0) throw std::invalid_argument("BVector: zero vector");
  v_ = {x / norm, y / norm, z / norm};
}

DiffusionPoint::DiffusionPoint(double b_value, BVector direction) : b(b_value), dir(direction) {
  if (std::isnan(b_value) || b_value < 0.0)
    throw std::invalid_argument("DiffusionPoint: b-value must be a non-negative number");
}

void DistanceParams::validate() const {
  if (std::isnan(gamma) || gamma < 0.0)
    throw std::invalid_argument("DistanceParams: gamma must be >= 0");
  if (!(b_scale > 0.0)) throw std::invalid_argument("DistanceParams: b_scale must be > 0");
}

GradientTable::GradientTable(std::vector<DiffusionPoint> entries) : entries_(std::move(entries)) {}

std::vector<std::size_t> GradientTable::reference_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].is_reference()) out.push_back(i);
  return out;
}

std::vector<std::size_t> GradientTable::weighted_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (!entries_[i].is_reference()) out.push_back(i);
  return out;
}

GradientTable GradientTable::weighted() const { return subset(weighted_indices()); }

GradientTable GradientTable::subset(std::span<const std::size_t> indices) const {
  std::vector<DiffusionPoint> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(entries_.at(i));
  return GradientTable(std::move(out));
}

double GradientTable::max_b() const {
  double m = 0.0;
  for (const auto& e : entries_) m = std::max(m, e.b);
  return m;
}

double drope_distance(const DiffusionPoint& p, const DiffusionPoint& q,
                      const DistanceParams& params) {
  params.validate();
  if (std::isnan(p.b) || std::isnan(q.b)) throw std::invalid_argument("drope_distance: NaN b");
  if (p.b <= 0.0 || q.b <= 0.0)
    throw std::invalid_argument("drope_distance: reference (b = 0) volumes have no distance");
  // arccos(|v_p . v_q|) evaluated as atan2(|v_p x v_q|, |v_p . v_q|): equal for
  // unit vectors, exact zero for parallel or antipodal inputs, and accurate
  // for small angles where arccos of a clamped dot loses half the digits.
  const auto& a = p.dir.components();
  const auto& b = q.dir.components();
  const double cx = a[1] * b[2] - a[2] * b[1];
  const double cy = a[2] * b[0] - a[0] * b[2];
  const double cz = a[0] * b[1] - a[1] * b[0];
  const double cosang = std::clamp(std::abs(p.dir.dot(q.dir)), 0.0, 1.0);
  const double angle = std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), cosang);
  const double db = (p.b - q.b) / params.b_scale;
  return std::sqrt(params.gamma * db * db + angle * angle);
}

SphericalCoord to_spherical(const DiffusionPoint& p, double b_max) {
  if (!(b_max > 0.0)) throw std::invalid_argument("to_spherical: b_max must be > 0");
  if (p.b > b_max) throw std::invalid_argument("to_spherical: b exceeds b_max");
  SphericalCoord s;
  s.rho = p.b / b_max;
  s.theta = std::acos(std::clamp(p.dir.z(), -1.0, 1.0));
  s.phi = std::atan2(p.dir.y(), p.dir.x());
  // atan2 can return +pi; keep the azimuth in [-pi, pi).
  if (s.phi >= std::numbers::pi) s.phi -= 2.0 * std::numbers::pi;
  return s;
}

BVector from_spherical(double theta, double phi) {
  return BVector(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                 std::cos(theta));
}

nd::Tensor pairwise_distance_matrix(std::span<const DiffusionPoint> points,
                                    const DistanceParams& params) {
  params.validate();
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("pairwise_distance_matrix: no weighted entries");
  for (const auto& p : points)
    if (!(p.b > 0.0)) throw std::invalid_argument("pairwise_distance_matrix: b must be > 0");
  std::vector<double> d(n * n, 0.0);
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = drope_distance(points[i], points[j], params);
      d[i * n + j] = v;
      d[j * n + i] = v;
    }
  }
  return nd::Tensor::from({n, n}, std::move(d));
}

nd::Tensor pairwise_distance_matrix(const GradientTable& table, const DistanceParams& params) {
  const auto w = table.weighted();
  return pairwise_distance_matrix(std::span<const DiffusionPoint>(w.entries()), params);
}

}  // namespace drope::dspace
