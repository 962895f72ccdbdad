// SPDX-License-Identifier: Apache-2.0
#pragma once

// Masked autoencoder over the (spatial slot x diffusion volume) token grid.
//
// Both masking strategies leave a rectangular visible sub-grid (a set of
// slots times a set of volumes), so the encoder runs on visible tokens only.
// The decoder sees the full grid with masked positions filled by a shared
// learnable token plus the absolute code, and a 3D convolutional head maps
// per-token voxel features back to the signal.

#include <array>
#include <string>
#include <vector>

#include "drope/attention.hpp"
#include "drope/dmri_io.hpp"
#include "drope/layers.hpp"
#include "drope/posenc.hpp"
#include "drope/rng.hpp"
#include "drope/tensor.hpp"

namespace drope::mae {

enum class Strategy { spatial, diffusion, alternating };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

inline constexpr double kSpatialRatio = 0.75;
inline constexpr double kDiffusionRatio = 0.5;

struct MaskPlan {
  Strategy requested = Strategy::spatial;
  Strategy applied = Strategy::spatial;  // never alternating
  std::size_t slots = 0, volumes = 0;
  std::vector<char> mask;  // [S * Nd], row-major (slot, volume); 1 = masked
  std::uint64_t seed = 0;
  std::size_t epoch = 0;

  bool masked(std::size_t s, std::size_t n) const { return mask[s * volumes + n] != 0; }
  std::size_t masked_count() const;
  /// Slots with at least one visible volume, ascending.
  std::vector<std::size_t> visible_slots() const;
  /// Volumes with at least one visible slot, ascending.
  std::vector<std::size_t> visible_volumes() const;

  /// Every token visible. Only useful for feature extraction and tests.
  static MaskPlan all_visible(std::size_t slots, std::size_t volumes);
};

/// Alternating plans use the spatial strategy on even epochs and the
/// diffusion strategy on odd ones. The stream is Rng::mix(seed, epoch).
MaskPlan make_mask(std::size_t slots, std::size_t volumes, Strategy strategy, std::size_t epoch,
                   std::uint64_t seed);

/// [Nx, Ny, Nz, Nd] voxel flags (1 = voxel belongs to a masked token).
std::vector<char> voxel_mask(const MaskPlan& plan, const std::array<std::size_t, 3>& extents,
                             const io::PatchSize& patch, std::size_t volumes);

/// Linear ramp from lo at epoch 0 to hi at epoch epochs - 1.
double tau(std::size_t epoch, std::size_t epochs, double lo = 0.05, double hi = 0.95);

struct MAEConfig {
  std::size_t d_model = 384;
  std::size_t n_heads = 3;
  std::size_t encoder_blocks = 10;  // single-axis blocks, diffusion first
  std::size_t decoder_layers = 3;   // each one spatial block then one diffusion block
  io::PatchSize patch{8, 8, 4};
  std::size_t conv_channels = 8;
  attn::RelativePE diffusion_pe = attn::RelativePE::drope;
  attn::RelativePE spatial_pe = attn::RelativePE::none;
  dspace::DistanceParams distance;
  double b_norm = 3000.0;  // b-value scale for the absolute diffusion code

  void validate() const;
};

class MAEModel {
 public:
  MAEModel() = default;
  MAEModel(const MAEConfig& cfg, std::uint64_t seed);

  const MAEConfig& config() const { return cfg_; }
  /// Stable parameter order used by the optimizer and checkpoints.
  layers::ParameterList parameters() const;

  layers::Linear patch_proj;  // P -> d
  posenc::AbsolutePositionalEncoding position;
  attn::FactorizedEncoder encoder;
  nd::Tensor mask_token;  // [d]
  layers::Linear decoder_embed;
  attn::BlockStack decoder;
  layers::LayerNorm head_norm;
  layers::Linear head;  // d -> P * C0
  std::array<nd::Tensor, 3> conv_w, conv_b;

 private:
  MAEConfig cfg_;
};

/// Embeds the visible tokens and runs the encoder.
attn::EncoderOutput mae_encode(const MAEModel& model, const io::DWIVolumeSet& vol,
                               const MaskPlan& plan);
/// Reconstruction [Nx, Ny, Nz, Nd].
nd::Tensor mae_forward(const MAEModel& model, const io::DWIVolumeSet& vol, const MaskPlan& plan);

struct LossParts {
  nd::Tensor total, masked, unmasked;
};

/// (1 - tau) * MSE(visible voxels) + tau * MSE(masked voxels). Rejects plans
/// with no masked voxel. The unmasked term is zero when nothing is visible.
LossParts mae_loss_parts(const nd::Tensor& recon, const nd::Tensor& target, const MaskPlan& plan,
                         const io::PatchSize& patch, double tau);
nd::Tensor mae_loss(const nd::Tensor& recon, const nd::Tensor& target, const MaskPlan& plan,
                    const io::PatchSize& patch, double tau);
/// Plain blend of two component losses.
double blend(double unmasked, double masked, double tau);

struct CropSpec {
  std::size_t slices = 4;
  std::size_t directions = 15;
};

struct CropInfo {
  std::size_t z0 = 0;
  std::vector<std::size_t> directions;  // source volume indices in draw order
};

/// Contiguous slab of z-slices and a random subset of volumes drawn without
/// replacement, with the matching gradient-table entries.
io::DWIVolumeSet sample_training_crop(const io::DWIVolumeSet& vol, Rng& rng, CropSpec spec = {},
                                      CropInfo* info = nullptr);

}  // namespace drope::mae
