// SPDX-License-Identifier: Apache-2.0
#include "drope/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace drope::attn {

const char* to_string(Axis axis) { return axis == Axis::spatial ? "spatial" : "diffusion"; }

const char* to_string(RelativePE pe) {
  switch (pe) {
    case RelativePE::none: return "none";
    case RelativePE::drope: return "drope";
    case RelativePE::ordinal_rope: return "ordinal_rope";
  }
  return "?";
}

RelativePE relative_pe_from_string(const std::string& s) {
  if (s == "none") return RelativePE::none;
  if (s == "drope") return RelativePE::drope;
  if (s == "ordinal_rope") return RelativePE::ordinal_rope;
  throw std::invalid_argument("unknown relative positional encoding: " + s);
}

RotationSpec RotationSpec::for_head_dim(std::size_t head_dim) {
  if (head_dim == 0 || head_dim % 2 != 0)
    throw std::invalid_argument("RotationSpec: head dimension must be even");
  RotationSpec spec;
  spec.alpha.resize(head_dim / 2);
  for (std::size_t i = 0; i < spec.alpha.size(); ++i)
    spec.alpha[i] =
        std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
  return spec;
}

void AttentionConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw std::invalid_argument("AttentionConfig: d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0)
    throw std::invalid_argument("AttentionConfig: per-head dimension must be even");
  if (axis == Axis::spatial && relative_pe == RelativePE::drope)
    throw std::invalid_argument("AttentionConfig: diffusion-space rotation needs the diffusion axis");
  if (axis == Axis::diffusion && relative_pe == RelativePE::ordinal_rope)
    throw std::invalid_argument("AttentionConfig: ordinal rotation is defined on the spatial axis");
  distance.validate();
}

void TokenGrid::validate() const {
  if (tokens.rank() != 3) throw nd::ShapeError("TokenGrid: tokens must be [S, Nd, d]");
  if (spatial.size() != tokens.dim(0))
    throw nd::ShapeError("TokenGrid: spatial metadata does not match S");
  if (diffusion.size() != tokens.dim(1))
    throw nd::ShapeError("TokenGrid: diffusion metadata does not match Nd");
}

double drope_score(std::span<const double> q, std::span<const double> k, double distance,
                   const RotationSpec& spec) {
  if (q.size() != spec.head_dim() || k.size() != spec.head_dim())
    throw nd::ShapeError("drope_score: vector length does not match rotation spec");
  double acc = 0.0;
  for (std::size_t i = 0; i < spec.alpha.size(); ++i) {
    const double a = distance * spec.alpha[i];
    const double q1 = q[2 * i], q2 = q[2 * i + 1], k1 = k[2 * i], k2 = k[2 * i + 1];
    acc += std::cos(a) * (q1 * k1 + q2 * k2) + std::sin(a) * (q2 * k1 - q1 * k2);
  }
  return acc;
}

TablePtr distance_table(const nd::Tensor& distances, std::size_t head_dim) {
  if (distances.rank() != 2 || distances.dim(0) != distances.dim(1))
    throw nd::ShapeError("distance_table: distances must be square");
  const auto spec = RotationSpec::for_head_dim(head_dim);
  const std::size_t n = distances.dim(0), pairs = spec.alpha.size();
  std::vector<double> angles(n * n * pairs);
  const auto d = distances.data();
  for (std::size_t mn = 0; mn < n * n; ++mn)
    for (std::size_t i = 0; i < pairs; ++i) angles[mn * pairs + i] = d[mn] * spec.alpha[i];
  return std::make_shared<nd::RotaryTable>(nd::RotaryTable::from_angles(n, n, pairs, angles));
}

TablePtr ordinal_table_1d(std::size_t length, std::size_t head_dim) {
  const auto spec = RotationSpec::for_head_dim(head_dim);
  const std::size_t pairs = spec.alpha.size();
  std::vector<double> angles(length * length * pairs);
  for (std::size_t m = 0; m < length; ++m)
    for (std::size_t n = 0; n < length; ++n) {
      const double delta = static_cast<double>(m) - static_cast<double>(n);
      for (std::size_t i = 0; i < pairs; ++i)
        angles[(m * length + n) * pairs + i] = delta * spec.alpha[i];
    }
  return std::make_shared<nd::RotaryTable>(
      nd::RotaryTable::from_angles(length, length, pairs, angles));
}

std::array<std::size_t, 3> axis_pair_split(std::size_t head_dim) {
  const std::size_t pairs = head_dim / 2;
  std::array<std::size_t, 3> split{pairs / 3, pairs / 3, pairs / 3};
  for (std::size_t r = 0; r < pairs % 3; ++r) ++split[r];
  return split;
}

TablePtr ordinal_table_3d(std::span<const posenc::SpatialIndex> slots, std::size_t head_dim) {
  if (head_dim == 0 || head_dim % 2 != 0)
    throw std::invalid_argument("ordinal_table_3d: head dimension must be even");
  const auto split = axis_pair_split(head_dim);
  const std::size_t pairs = head_dim / 2, s = slots.size();
  // Per-pair (axis, frequency) assignment.
  std::vector<std::size_t> axis_of(pairs);
  std::vector<double> freq(pairs);
  std::size_t p = 0;
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t i = 0; i < split[g]; ++i, ++p) {
      axis_of[p] = g;
      freq[p] = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                      static_cast<double>(2 * split[g]));
    }
  std::vector<double> angles(s * s * pairs);
  for (std::size_t m = 0; m < s; ++m)
    for (std::size_t n = 0; n < s; ++n) {
      const double delta[3] = {
          static_cast<double>(slots[m].ix) - static_cast<double>(slots[n].ix),
          static_cast<double>(slots[m].iy) - static_cast<double>(slots[n].iy),
          static_cast<double>(slots[m].iz) - static_cast<double>(slots[n].iz)};
      for (std::size_t i = 0; i < pairs; ++i)
        angles[(m * s + n) * pairs + i] = delta[axis_of[i]] * freq[i];
    }
  return std::make_shared<nd::RotaryTable>(nd::RotaryTable::from_angles(s, s, pairs, angles));
}

// ---------------------------------------------------------------------------

AttentionLayer::AttentionLayer(AttentionConfig cfg, Rng& rng)
    : norm(cfg.d_model),
      qkv(cfg.d_model, 3 * cfg.d_model, rng),
      proj(cfg.d_model, cfg.d_model, rng),
      cfg_(cfg) {
  cfg_.validate();
}

AttentionLayer::Heads AttentionLayer::split_heads(const nd::Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != cfg_.d_model)
    throw nd::ShapeError("attention input must be [B, L, d], got " + nd::to_string(x.shape()));
  const std::size_t b = x.dim(0), l = x.dim(1), h = cfg_.n_heads, dh = cfg_.head_dim();
  auto packed = nd::reshape(qkv(norm(x)), {b, l, 3, h, dh});
  packed = nd::reshape(nd::permute(packed, {2, 0, 3, 1, 4}), {3, b * h, l, dh});
  auto part = [&](std::size_t i) {
    return nd::reshape(nd::slice(packed, 0, i, 1), {b * h, l, dh});
  };
  return {part(0), part(1), part(2)};
}

nd::Tensor AttentionLayer::scores(const Heads& hd, const TablePtr& table) const {
  const double inv = 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim()));
  if (table) return nd::scale(nd::rotary_scores(hd.q, hd.k, table), inv);
  return nd::scale(nd::matmul(hd.q, nd::transpose(hd.k)), inv);
}

nd::Tensor AttentionLayer::logits(const nd::Tensor& x, const TablePtr& table) const {
  return scores(split_heads(x), table);
}

nd::Tensor AttentionLayer::weights(const nd::Tensor& x, const TablePtr& table) const {
  return nd::softmax(logits(x, table));
}

nd::Tensor AttentionLayer::forward(const nd::Tensor& x, const TablePtr& table) const {
  const std::size_t b = x.dim(0), l = x.dim(1), h = cfg_.n_heads, dh = cfg_.head_dim();
  const auto hd = split_heads(x);
  const auto w = nd::softmax(scores(hd, table));
  auto o = nd::reshape(nd::matmul(w, hd.v), {b, h, l, dh});
  o = nd::reshape(nd::permute(o, {0, 2, 1, 3}), {b, l, h * dh});
  return nd::add(x, proj(o));
}

void AttentionLayer::collect(layers::ParameterList& out, const std::string& prefix) const {
  norm.collect(out, prefix + ".norm");
  qkv.collect(out, prefix + ".qkv");
  proj.collect(out, prefix + ".proj");
}

MlpLayer::MlpLayer(std::size_t d, Rng& rng) : norm(d), fc1(d, 4 * d, rng), fc2(4 * d, d, rng) {}

nd::Tensor MlpLayer::forward(const nd::Tensor& x) const {
  return nd::add(x, fc2(nd::gelu(fc1(norm(x)))));
}

void MlpLayer::collect(layers::ParameterList& out, const std::string& prefix) const {
  norm.collect(out, prefix + ".norm");
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

// ---------------------------------------------------------------------------

TablePtr table_for(const AttentionConfig& cfg, const TokenGrid& grid) {
  switch (cfg.relative_pe) {
    case RelativePE::none:
      return nullptr;
    case RelativePE::drope:
      return distance_table(dspace::pairwise_distance_matrix(grid.diffusion, cfg.distance),
                            cfg.head_dim());
    case RelativePE::ordinal_rope:
      return ordinal_table_3d(grid.spatial, cfg.head_dim());
  }
  return nullptr;
}

TokenGrid diffusion_attention(const TokenGrid& grid, const AttentionLayer& layer,
                              const nd::Tensor& distances) {
  grid.validate();
  const auto& cfg = layer.config();
  if (cfg.axis != Axis::diffusion) throw std::invalid_argument("layer is not a diffusion layer");
  if (distances.rank() != 2 || distances.dim(0) != grid.volumes() ||
      distances.dim(1) != grid.volumes())
    throw nd::ShapeError("diffusion_attention: distance matrix does not match Nd");
  TablePtr table;
  if (cfg.relative_pe == RelativePE::drope) table = distance_table(distances, cfg.head_dim());
  TokenGrid out = grid;
  out.tokens = layer.forward(grid.tokens, table);
  return out;
}

TokenGrid spatial_attention(const TokenGrid& grid, const AttentionLayer& layer) {
  grid.validate();
  const auto& cfg = layer.config();
  if (cfg.axis != Axis::spatial) throw std::invalid_argument("layer is not a spatial layer");
  TokenGrid out = grid;
  const auto by_volume = nd::permute(grid.tokens, {1, 0, 2});
  out.tokens = nd::permute(layer.forward(by_volume, table_for(cfg, grid)), {1, 0, 2});
  return out;
}

// ---------------------------------------------------------------------------

BlockStack::BlockStack(const StackConfig& cfg, Rng& rng) : cfg_(cfg) {
  Axis axis = cfg.first_axis;
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    AttentionConfig ac;
    ac.d_model = cfg.d_model;
    ac.n_heads = cfg.n_heads;
    ac.axis = axis;
    ac.relative_pe = axis == Axis::diffusion ? cfg.diffusion_pe : cfg.spatial_pe;
    ac.distance = cfg.distance;
    Block block{AttentionLayer(ac, rng), MlpLayer(cfg.d_model, rng)};
    blocks_.push_back(std::move(block));
    axis = axis == Axis::diffusion ? Axis::spatial : Axis::diffusion;
  }
}

TokenGrid BlockStack::forward(const TokenGrid& grid) const {
  grid.validate();
  if (grid.width() != cfg_.d_model) throw nd::ShapeError("token width does not match the stack");
  // Tables depend only on metadata; build each kind once per call.
  TablePtr diffusion_table, spatial_table;
  bool have_diffusion = false, have_spatial = false;
  TokenGrid cur = grid;
  for (const auto& block : blocks_) {
    const auto& cfg = block.attention.config();
    if (cfg.axis == Axis::diffusion) {
      if (!have_diffusion) {
        diffusion_table = table_for(cfg, grid);
        have_diffusion = true;
      }
      cur.tokens = block.attention.forward(cur.tokens, diffusion_table);
    } else {
      if (!have_spatial) {
        spatial_table = table_for(cfg, grid);
        have_spatial = true;
      }
      const auto by_volume = nd::permute(cur.tokens, {1, 0, 2});
      cur.tokens = nd::permute(block.attention.forward(by_volume, spatial_table), {1, 0, 2});
    }
    cur.tokens = block.mlp.forward(cur.tokens);
  }
  return cur;
}

void BlockStack::collect(layers::ParameterList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    blocks_[i].attention.collect(out, p + ".attn");
    blocks_[i].mlp.collect(out, p + ".mlp");
  }
}

FactorizedEncoder::FactorizedEncoder(const StackConfig& cfg, Rng& rng)
    : pool_norm(cfg.d_model), stack_(cfg, rng) {
  cls_token = layers::uniform_tensor({cfg.d_model}, 0.02, rng);
  pool_q = layers::Linear(cfg.d_model, cfg.d_model, rng);
  pool_k = layers::Linear(cfg.d_model, cfg.d_model, rng);
  pool_v = layers::Linear(cfg.d_model, cfg.d_model, rng);
  pool_out = layers::Linear(cfg.d_model, cfg.d_model, rng);
}

nd::Tensor FactorizedEncoder::pool(const nd::Tensor& tokens) const {
  const std::size_t d = stack_.config().d_model, h = stack_.config().n_heads, dh = d / h;
  const std::size_t n = tokens.numel() / d;
  const auto flat = pool_norm(nd::reshape(tokens, {n, d}));
  const auto q = nd::permute(nd::reshape(pool_q(nd::reshape(cls_token, {1, d})), {1, h, dh}),
                             {1, 0, 2});
  const auto k = nd::permute(nd::reshape(pool_k(flat), {n, h, dh}), {1, 0, 2});
  const auto v = nd::permute(nd::reshape(pool_v(flat), {n, h, dh}), {1, 0, 2});
  const auto w = nd::softmax(
      nd::scale(nd::matmul(q, nd::transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh))));
  const auto o = nd::reshape(nd::permute(nd::matmul(w, v), {1, 0, 2}), {d});
  return nd::add(cls_token, pool_out(o));
}

EncoderOutput FactorizedEncoder::forward(const TokenGrid& grid) const {
  EncoderOutput out;
  out.grid = stack_.forward(grid);
  out.cls = pool(out.grid.tokens);
  return out;
}

void FactorizedEncoder::collect(layers::ParameterList& out, const std::string& prefix) const {
  stack_.collect(out, prefix);
  out.push_back({prefix + ".cls_token", cls_token, false});
  pool_norm.collect(out, prefix + ".pool_norm");
  pool_q.collect(out, prefix + ".pool_q");
  pool_k.collect(out, prefix + ".pool_k");
  pool_v.collect(out, prefix + ".pool_v");
  pool_out.collect(out, prefix + ".pool_out");
}

EncoderOutput encoder_forward(const TokenGrid& grid, const FactorizedEncoder& encoder) {
  return encoder.forward(grid);
}

}  // namespace drope::attn
