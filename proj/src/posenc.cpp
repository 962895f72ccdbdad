// SPDX-License-Identifier: Apache-2.0
#include "drope/posenc.hpp"

#include <cmath>
#include <stdexcept>

namespace drope::posenc {
namespace {

void fill_sinusoid(SpatialIndex idx, std::size_t d_half, double* out) {
  const std::size_t band = d_half / 3;
  const std::size_t pairs = band / 2;
  const std::size_t pos[3] = {idx.ix, idx.iy, idx.iz};
  for (std::size_t axis = 0; axis < 3; ++axis) {
    for (std::size_t j = 0; j < pairs; ++j) {
      const double w = std::pow(10000.0, -2.0 * static_cast<double>(j) / static_cast<double>(band));
      const double a = static_cast<double>(pos[axis]) * w;
      out[axis * band + 2 * j] = std::sin(a);
      out[axis * band + 2 * j + 1] = std::cos(a);
    }
  }
}

}  // namespace

nd::Tensor sinusoidal_3d(SpatialIndex idx, std::size_t d_half) {
  if (d_half == 0 || d_half % 6 != 0)
    throw std::invalid_argument("sinusoidal_3d: d_half must be a positive multiple of 6");
  std::vector<double> v(d_half);
  fill_sinusoid(idx, d_half, v.data());
  return nd::Tensor::from({d_half}, std::move(v));
}

nd::Tensor spatial_code_table(std::span<const SpatialIndex> slots, std::size_t width) {
  const std::size_t used = width - width % 6;
  if (used == 0) throw std::invalid_argument("spatial_code_table: width below 6");
  std::vector<double> v(slots.size() * width, 0.0);
  for (std::size_t s = 0; s < slots.size(); ++s) fill_sinusoid(slots[s], used, v.data() + s * width);
  return nd::Tensor::from({slots.size(), width}, std::move(v));
}

nd::Tensor diffusion_pe(const dspace::SphericalCoord& coord, const nd::Tensor& weight,
                        const nd::Tensor& bias) {
  if (weight.rank() != 2 || weight.dim(1) != 3)
    throw nd::ShapeError("diffusion_pe: weight must be [d/2, 3]");
  const auto x = nd::Tensor::from({3}, {coord.rho, coord.theta, coord.phi});
  return nd::linear(x, weight, bias);
}

AbsolutePositionalEncoding::AbsolutePositionalEncoding(std::size_t d, Rng& rng) : d_(d) {
  if (d == 0 || d % 2 != 0)
    throw std::invalid_argument("AbsolutePositionalEncoding: d must be even");
  const double bound = 1.0 / std::sqrt(3.0);
  weight = layers::uniform_tensor({d / 2, 3}, bound, rng);
  bias = layers::uniform_tensor({d / 2}, bound, rng);
}

nd::Tensor AbsolutePositionalEncoding::diffusion_codes(
    std::span<const dspace::DiffusionPoint> points, double b_max) const {
  std::vector<double> coords;
  coords.reserve(points.size() * 3);
  for (const auto& p : points) {
    const auto c = dspace::to_spherical(p, b_max);
    coords.insert(coords.end(), {c.rho, c.theta, c.phi});
  }
  return nd::linear(nd::Tensor::from({points.size(), 3}, std::move(coords)), weight, bias);
}

nd::Tensor AbsolutePositionalEncoding::grid(std::span<const SpatialIndex> slots,
                                            std::span<const dspace::DiffusionPoint> points,
                                            double b_max) const {
  const std::size_t s = slots.size(), n = points.size(), h = d_ / 2;
  const auto spatial = nd::expand(nd::reshape(spatial_code_table(slots, h), {s, 1, h}), {s, n, h});
  const auto diffusion =
      nd::expand(nd::reshape(diffusion_codes(points, b_max), {1, n, h}), {s, n, h});
  return nd::concat({spatial, diffusion}, 2);
}

void AbsolutePositionalEncoding::collect(layers::ParameterList& out,
                                         const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, false});
}

}  // namespace drope::posenc
