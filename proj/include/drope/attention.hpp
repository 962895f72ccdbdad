// SPDX-License-Identifier: Apache-2.0
#pragma once

// Factorized attention over a (spatial slot x diffusion volume) token grid.
//
// Diffusion attention mixes the Nd volumes of one spatial slot; its logits
// are q_m^T R(D(m, n)) k_n / sqrt(dh), where R is the rotary block matrix
// evaluated at the diffusion-space distance D instead of an index offset.
// Spatial attention mixes the S slots of one volume, optionally with a 3D
// ordinal rotary code. Blocks alternate the two axes with pre-norm
// residual attention followed by a GELU MLP.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "drope/dspace.hpp"
#include "drope/layers.hpp"
#include "drope/posenc.hpp"
#include "drope/rng.hpp"
#include "drope/tensor.hpp"

namespace drope::attn {

enum class Axis { spatial, diffusion };
enum class RelativePE { none, drope, ordinal_rope };

const char* to_string(Axis axis);
const char* to_string(RelativePE pe);
RelativePE relative_pe_from_string(const std::string& s);

/// alpha_i = 10000^(-2(i-1)/dh), i = 1..dh/2.
struct RotationSpec {
  std::vector<double> alpha;

  static RotationSpec for_head_dim(std::size_t head_dim);
  std::size_t head_dim() const { return 2 * alpha.size(); }
};

struct AttentionConfig {
  std::size_t d_model = 0;
  std::size_t n_heads = 1;
  Axis axis = Axis::diffusion;
  RelativePE relative_pe = RelativePE::drope;
  dspace::DistanceParams distance;

  std::size_t head_dim() const { return d_model / n_heads; }
  void validate() const;
};

struct TokenGrid {
  nd::Tensor tokens;  // [S, Nd, d]
  std::vector<posenc::SpatialIndex> spatial;
  std::vector<dspace::DiffusionPoint> diffusion;

  std::size_t slots() const { return tokens.dim(0); }
  std::size_t volumes() const { return tokens.dim(1); }
  std::size_t width() const { return tokens.dim(2); }
  /// Rank 3 tokens with metadata lengths matching the extents.
  void validate() const;
};

/// Fast cos/sin form of q^T R(D) k, O(dh).
double drope_score(std::span<const double> q, std::span<const double> k, double distance,
                   const RotationSpec& spec);

using TablePtr = std::shared_ptr<const nd::RotaryTable>;

/// Angle D(m, n) * alpha_i for an Nd x Nd distance matrix.
TablePtr distance_table(const nd::Tensor& distances, std::size_t head_dim);
/// Standard 1D rotary angles (m - n) * alpha_i for positions 0..L-1.
TablePtr ordinal_table_1d(std::size_t length, std::size_t head_dim);
/// The head's sub-pairs split into x, y, z groups (remainder to the first
/// groups); group g rotates by the signed index difference on its axis with
/// frequencies computed from the group's own width.
TablePtr ordinal_table_3d(std::span<const posenc::SpatialIndex> slots, std::size_t head_dim);
/// Number of sub-pairs given to each axis by ordinal_table_3d.
std::array<std::size_t, 3> axis_pair_split(std::size_t head_dim);

/// Pre-norm multi-head self-attention with residual: x + W_o attn(LN(x)).
class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(AttentionConfig cfg, Rng& rng);

  const AttentionConfig& config() const { return cfg_; }

  /// x is [B, L, d]; `table` covers L x L pairs, or is null for plain dot
  /// products.
  nd::Tensor forward(const nd::Tensor& x, const TablePtr& table) const;
  /// Scaled pre-softmax logits [B * H, L, L].
  nd::Tensor logits(const nd::Tensor& x, const TablePtr& table) const;
  /// Softmax of logits, [B * H, L, L].
  nd::Tensor weights(const nd::Tensor& x, const TablePtr& table) const;

  void collect(layers::ParameterList& out, const std::string& prefix) const;

  layers::LayerNorm norm;
  layers::Linear qkv;   // d -> 3d
  layers::Linear proj;  // d -> d

 private:
  struct Heads {
    nd::Tensor q, k, v;  // [B * H, L, dh]
  };
  Heads split_heads(const nd::Tensor& x) const;
  nd::Tensor scores(const Heads& h, const TablePtr& table) const;

  AttentionConfig cfg_;
};

/// Pre-norm GELU MLP with residual, hidden width 4d.
struct MlpLayer {
  MlpLayer() = default;
  MlpLayer(std::size_t d, Rng& rng);

  nd::Tensor forward(const nd::Tensor& x) const;
  void collect(layers::ParameterList& out, const std::string& prefix) const;

  layers::LayerNorm norm;
  layers::Linear fc1, fc2;
};

struct Block {
  AttentionLayer attention;
  MlpLayer mlp;
};

/// Rotary table for one attention layer on this grid; null when the layer
/// uses plain dot products.
TablePtr table_for(const AttentionConfig& cfg, const TokenGrid& grid);

/// Attention across the Nd volumes of every spatial slot (residual
/// included, no MLP). `distances` is the Nd x Nd matrix for the grid.
TokenGrid diffusion_attention(const TokenGrid& grid, const AttentionLayer& layer,
                              const nd::Tensor& distances);
/// Attention across the S slots of every volume (residual included).
TokenGrid spatial_attention(const TokenGrid& grid, const AttentionLayer& layer);

struct StackConfig {
  std::size_t d_model = 384;
  std::size_t n_heads = 3;
  std::size_t n_blocks = 10;
  Axis first_axis = Axis::diffusion;
  RelativePE diffusion_pe = RelativePE::drope;
  RelativePE spatial_pe = RelativePE::none;
  dspace::DistanceParams distance;
};

/// Blocks alternating between the two axes, starting at `first_axis`.
class BlockStack {
 public:
  BlockStack() = default;
  BlockStack(const StackConfig& cfg, Rng& rng);

  const StackConfig& config() const { return cfg_; }
  std::vector<Block>& blocks() { return blocks_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  TokenGrid forward(const TokenGrid& grid) const;
  void collect(layers::ParameterList& out, const std::string& prefix) const;

 private:
  StackConfig cfg_;
  std::vector<Block> blocks_;
};

struct EncoderOutput {
  TokenGrid grid;
  nd::Tensor cls;  // [d]
};

/// Block stack plus a CLS vector produced by one global pooling attention
/// (identity rotation) from a learnable query over all S * Nd tokens.
class FactorizedEncoder {
 public:
  FactorizedEncoder() = default;
  FactorizedEncoder(const StackConfig& cfg, Rng& rng);

  const BlockStack& stack() const { return stack_; }
  BlockStack& stack() { return stack_; }

  EncoderOutput forward(const TokenGrid& grid) const;
  nd::Tensor pool(const nd::Tensor& tokens) const;
  void collect(layers::ParameterList& out, const std::string& prefix) const;

  nd::Tensor cls_token;  // [d]
  layers::LayerNorm pool_norm;
  layers::Linear pool_q, pool_k, pool_v, pool_out;

 private:
  BlockStack stack_;
};

EncoderOutput encoder_forward(const TokenGrid& grid, const FactorizedEncoder& encoder);

}  // namespace drope::attn
