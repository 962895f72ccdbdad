// SPDX-License-Identifier: Apache-2.0
#pragma once

// Diffusion-space geometry: gradient directions, acquisition points on
// (b-value x sphere), spherical coordinates and the rotary distance used by
// diffusion attention.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "drope/tensor.hpp"

namespace drope::dspace {

/// Unit gradient direction. The constructor normalizes; zero and non-finite
/// vectors are rejected.
class BVector {
 public:
  BVector() = default;  // (0, 0, 1)
  BVector(double x, double y, double z);

  double x() const { return v_[0]; }
  double y() const { return v_[1]; }
  double z() const { return v_[2]; }
  const std::array<double, 3>& components() const { return v_; }

  double dot(const BVector& o) const {
    return v_[0] * o.v_[0] + v_[1] * o.v_[1] + v_[2] * o.v_[2];
  }
  /// Exact componentwise negation (no renormalization).
  BVector negated() const {
    BVector r = *this;
    for (double& c : r.v_) c = -c;
    return r;
  }

 private:
  std::array<double, 3> v_{0.0, 0.0, 1.0};
};

/// One acquisition: b-value in s/mm^2 and its gradient direction.
struct DiffusionPoint {
  double b = 0.0;
  BVector dir;

  DiffusionPoint() = default;
  DiffusionPoint(double b_value, BVector direction);

  bool is_reference() const { return b == 0.0; }
};

struct SphericalCoord {
  double rho = 0.0;    // b / b_max
  double theta = 0.0;  // polar angle, [0, pi]
  double phi = 0.0;    // azimuth, [-pi, pi)
};

struct DistanceParams {
  double gamma = 1.0;      // weight of the b-value term
  double b_scale = 1000.0; // divisor applied to b before differencing

  void validate() const;
};

/// Acquisition table in source order. Entries with b == 0 are references.
class GradientTable {
 public:
  GradientTable() = default;
  explicit GradientTable(std::vector<DiffusionPoint> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const DiffusionPoint& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<DiffusionPoint>& entries() const { return entries_; }

  std::vector<std::size_t> reference_indices() const;
  std::vector<std::size_t> weighted_indices() const;
  /// Table restricted to the diffusion-weighted entries, order preserved.
  GradientTable weighted() const;
  GradientTable subset(std::span<const std::size_t> indices) const;
  double max_b() const;

 private:
  std::vector<DiffusionPoint> entries_;
};

/// sqrt(gamma * ((b_p - b_q) / b_scale)^2 + arccos^2(|v_p . v_q|)).
/// Antipodal directions are at distance zero.
double drope_distance(const DiffusionPoint& p, const DiffusionPoint& q,
                      const DistanceParams& params);

SphericalCoord to_spherical(const DiffusionPoint& p, double b_max);
BVector from_spherical(double theta, double phi);

/// Symmetric Nd x Nd matrix of drope_distance over the weighted entries of
/// the table (references are skipped). Rows are filled in parallel.
nd::Tensor pairwise_distance_matrix(const GradientTable& table,
                                    const DistanceParams& params);
nd::Tensor pairwise_distance_matrix(std::span<const DiffusionPoint> points,
                                    const DistanceParams& params);

}  // namespace drope::dspace
