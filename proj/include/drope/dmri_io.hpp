// SPDX-License-Identifier: Apache-2.0
#pragma once

// FSL gradient tables, b0 normalization and patch tokenization.

#include <array>
#include <filesystem>
#include <vector>

#include "drope/attention.hpp"
#include "drope/dspace.hpp"
#include "drope/layers.hpp"
#include "drope/tensor.hpp"

namespace drope::io {

/// b-values below this are treated as b = 0 references.
inline constexpr double kReferenceThreshold = 50.0;
inline constexpr double kClipMax = 2.0;
inline constexpr double kS0Floor = 1e-6;

/// bvals: whitespace-separated values (any line layout); bvecs: three rows
/// of N values (x, y, z).
dspace::GradientTable read_bvals_bvecs(const std::filesystem::path& bvals,
                                       const std::filesystem::path& bvecs);
void write_bvals_bvecs(const dspace::GradientTable& table, const std::filesystem::path& bvals,
                       const std::filesystem::path& bvecs);

struct DWIVolumeSet {
  nd::Tensor signal;            // [Nx, Ny, Nz, Nd] attenuation S / S0
  dspace::GradientTable table;  // diffusion-weighted entries only
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  std::size_t nx() const { return signal.dim(0); }
  std::size_t ny() const { return signal.dim(1); }
  std::size_t nz() const { return signal.dim(2); }
  std::size_t volumes() const { return signal.dim(3); }
  void validate() const;
};

/// S0 is the voxelwise mean of the reference volumes; the output keeps the
/// weighted volumes as S / S0 clipped to [0, 2], with S0 <= 1e-6 mapped to 0.
DWIVolumeSet normalize_by_b0(const nd::Tensor& raw, const dspace::GradientTable& table,
                             std::array<double, 3> spacing = {1.0, 1.0, 1.0});

struct PatchSize {
  std::size_t px = 8, py = 8, pz = 4;
  std::size_t voxels() const { return px * py * pz; }
};

/// Patch-grid extents; throws when a volume extent is not divisible.
std::array<std::size_t, 3> patch_grid(std::size_t nx, std::size_t ny, std::size_t nz,
                                      const PatchSize& patch);
/// Slot s = (gx * Gy + gy) * Gz + gz.
std::vector<posenc::SpatialIndex> slot_indices(const std::array<std::size_t, 3>& grid);

/// [Nx, Ny, Nz, Nd] -> [S, Nd, P], voxels of a patch in (x, y, z) row-major
/// order. Differentiable.
nd::Tensor extract_patches(const nd::Tensor& signal, const PatchSize& patch);
/// [S, Nd, P * C] -> [Nd, C, Nx, Ny, Nz]; feature f = p * C + c of a token
/// is channel c of patch voxel p. With C = 1 followed by a permute this
/// inverts extract_patches. Differentiable.
nd::Tensor unpatchify_channels(const nd::Tensor& features, const std::array<std::size_t, 3>& extents,
                               const PatchSize& patch, std::size_t channels);
/// [S, Nd, P] -> [Nx, Ny, Nz, Nd]; exact inverse of extract_patches.
nd::Tensor unpatchify(const nd::Tensor& patches, const std::array<std::size_t, 3>& extents,
                      const PatchSize& patch);

/// Tokens = proj(flattened patch) with spatial and diffusion metadata.
attn::TokenGrid patchify(const DWIVolumeSet& vol, const PatchSize& patch,
                         const layers::Linear& proj);

}  // namespace drope::io
