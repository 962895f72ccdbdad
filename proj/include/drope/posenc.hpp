// SPDX-License-Identifier: Apache-2.0
#pragma once

// Absolute positional codes: a fixed 3D sinusoidal code for the patch grid
// and a learnable linear code for the acquisition point, concatenated into
// one d-vector that is added to each token.

#include <cstddef>
#include <span>
#include <vector>

#include "drope/dspace.hpp"
#include "drope/layers.hpp"
#include "drope/rng.hpp"
#include "drope/tensor.hpp"

namespace drope::posenc {

struct SpatialIndex {
  std::size_t ix = 0, iy = 0, iz = 0;
  bool operator==(const SpatialIndex&) const = default;
};

/// d_half/3 entries per axis (x, y, z bands in that order), each band made of
/// interleaved (sin(i w_j), cos(i w_j)) with w_j = 10000^(-2j / (d_half/3)).
/// d_half must be a positive multiple of 6.
nd::Tensor sinusoidal_3d(SpatialIndex idx, std::size_t d_half);

/// [S, width] spatial codes. Uses the largest multiple of 6 not above
/// `width` for the sinusoid and zero-fills the remaining columns.
nd::Tensor spatial_code_table(std::span<const SpatialIndex> slots, std::size_t width);

/// weight [d/2, 3] * (rho, theta, phi) + bias [d/2].
nd::Tensor diffusion_pe(const dspace::SphericalCoord& coord, const nd::Tensor& weight,
                        const nd::Tensor& bias);

/// Learnable half of the absolute code plus the assembly of the full
/// [S, Nd, d] table.
class AbsolutePositionalEncoding {
 public:
  AbsolutePositionalEncoding() = default;
  /// d must be even. Weights and bias are uniform in +-1/sqrt(3).
  AbsolutePositionalEncoding(std::size_t d, Rng& rng);

  std::size_t width() const { return d_; }

  /// [Nd, d/2] learnable codes for the given acquisition points.
  nd::Tensor diffusion_codes(std::span<const dspace::DiffusionPoint> points, double b_max) const;
  /// [S, Nd, d]: spatial code in the first half, diffusion code in the second.
  nd::Tensor grid(std::span<const SpatialIndex> slots,
                  std::span<const dspace::DiffusionPoint> points, double b_max) const;

  void collect(layers::ParameterList& out, const std::string& prefix) const;

  nd::Tensor weight;  // [d/2, 3]
  nd::Tensor bias;    // [d/2]

 private:
  std::size_t d_ = 0;
};

}  // namespace drope::posenc
