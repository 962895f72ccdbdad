// SPDX-License-Identifier: Apache-2.0
#include "drope/mae.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drope::mae {
namespace {

std::size_t masked_target(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n)));
}

nd::Tensor conv_weight(std::size_t c_out, std::size_t c_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(27.0 * static_cast<double>(c_in));
  return layers::uniform_tensor({c_out, c_in, 3, 3, 3}, bound, rng);
}

}  // namespace

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::spatial: return "spatial";
    case Strategy::diffusion: return "diffusion";
    case Strategy::alternating: return "alternating";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "spatial") return Strategy::spatial;
  if (s == "diffusion") return Strategy::diffusion;
  if (s == "alternating") return Strategy::alternating;
  throw std::invalid_argument("unknown masking strategy '" + s +
                              "' (expected spatial, diffusion or alternating)");
}

std::size_t MaskPlan::masked_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), char(1)));
}

std::vector<std::size_t> MaskPlan::visible_slots() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < slots; ++s)
    for (std::size_t n = 0; n < volumes; ++n)
      if (!masked(s, n)) {
        out.push_back(s);
        break;
      }
  return out;
}

std::vector<std::size_t> MaskPlan::visible_volumes() const {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < volumes; ++n)
    for (std::size_t s = 0; s < slots; ++s)
      if (!masked(s, n)) {
        out.push_back(n);
        break;
      }
  return out;
}

MaskPlan MaskPlan::all_visible(std::size_t slots, std::size_t volumes) {
  MaskPlan p;
  p.slots = slots;
  p.volumes = volumes;
  p.mask.assign(slots * volumes, 0);
  return p;
}

MaskPlan make_mask(std::size_t slots, std::size_t volumes, Strategy strategy, std::size_t epoch,
                   std::uint64_t seed) {
  if (slots == 0 || volumes == 0) throw std::invalid_argument("make_mask: empty token grid");
  MaskPlan p = MaskPlan::all_visible(slots, volumes);
  p.requested = strategy;
  p.seed = seed;
  p.epoch = epoch;
  p.applied = strategy;
  if (strategy == Strategy::alternating)
    p.applied = epoch % 2 == 0 ? Strategy::spatial : Strategy::diffusion;

  Rng rng(Rng::mix(seed, epoch));
  if (p.applied == Strategy::spatial) {
    const std::size_t k = masked_target(slots, kSpatialRatio);
    if (k >= slots)
      throw std::invalid_argument("make_mask: spatial ratio leaves no visible slot for S = " +
                                  std::to_string(slots));
    for (auto s : rng.sample_without_replacement(slots, k))
      for (std::size_t n = 0; n < volumes; ++n) p.mask[s * volumes + n] = 1;
  } else {
    const std::size_t k = masked_target(volumes, kDiffusionRatio);
    if (k >= volumes)
      throw std::invalid_argument("make_mask: diffusion ratio leaves no visible volume for Nd = " +
                                  std::to_string(volumes));
    for (auto n : rng.sample_without_replacement(volumes, k))
      for (std::size_t s = 0; s < slots; ++s) p.mask[s * volumes + n] = 1;
  }
  return p;
}

std::vector<char> voxel_mask(const MaskPlan& plan, const std::array<std::size_t, 3>& e,
                             const io::PatchSize& patch, std::size_t volumes) {
  const auto g = io::patch_grid(e[0], e[1], e[2], patch);
  if (plan.slots != g[0] * g[1] * g[2] || plan.volumes != volumes)
    throw nd::ShapeError("voxel_mask: plan does not match the token grid");
  std::vector<char> out(e[0] * e[1] * e[2] * volumes);
  std::size_t o = 0;
  for (std::size_t x = 0; x < e[0]; ++x)
    for (std::size_t y = 0; y < e[1]; ++y)
      for (std::size_t z = 0; z < e[2]; ++z) {
        const std::size_t s = ((x / patch.px) * g[1] + y / patch.py) * g[2] + z / patch.pz;
        for (std::size_t n = 0; n < volumes; ++n) out[o++] = plan.mask[s * volumes + n];
      }
  return out;
}

double tau(std::size_t epoch, std::size_t epochs, double lo, double hi) {
  if (epochs == 0) throw std::invalid_argument("tau: zero epochs");
  if (epoch >= epochs) throw std::invalid_argument("tau: epoch out of range");
  if (epochs == 1) return lo;
  return lo + (hi - lo) * static_cast<double>(epoch) / static_cast<double>(epochs - 1);
}

void MAEConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw std::invalid_argument("MAEConfig: d_model must be a positive multiple of n_heads");
  if ((d_model / n_heads) % 2 != 0) throw std::invalid_argument("MAEConfig: head dim must be even");
  if (patch.voxels() == 0) throw std::invalid_argument("MAEConfig: empty patch");
  if (conv_channels == 0) throw std::invalid_argument("MAEConfig: conv_channels must be > 0");
  if (!(b_norm > 0.0)) throw std::invalid_argument("MAEConfig: b_norm must be > 0");
}

MAEModel::MAEModel(const MAEConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t d = cfg.d_model, p = cfg.patch.voxels(), c = cfg.conv_channels;
  patch_proj = layers::Linear(p, d, rng);
  position = posenc::AbsolutePositionalEncoding(d, rng);

  attn::StackConfig enc;
  enc.d_model = d;
  enc.n_heads = cfg.n_heads;
  enc.n_blocks = cfg.encoder_blocks;
  enc.first_axis = attn::Axis::diffusion;
  enc.diffusion_pe = cfg.diffusion_pe;
  enc.spatial_pe = cfg.spatial_pe;
  enc.distance = cfg.distance;
  encoder = attn::FactorizedEncoder(enc, rng);

  mask_token = layers::uniform_tensor({d}, 0.02, rng);
  decoder_embed = layers::Linear(d, d, rng);
  attn::StackConfig dec = enc;
  dec.n_blocks = 2 * cfg.decoder_layers;
  dec.first_axis = attn::Axis::spatial;
  decoder = attn::BlockStack(dec, rng);

  head_norm = layers::LayerNorm(d);
  head = layers::Linear(d, p * c, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t out = i == 2 ? 1 : c;
    conv_w[i] = conv_weight(out, c, rng);
    conv_b[i] = nd::Tensor::zeros({out}, true);
  }
}

layers::ParameterList MAEModel::parameters() const {
  layers::ParameterList out;
  patch_proj.collect(out, "patch_proj");
  position.collect(out, "position");
  encoder.collect(out, "encoder");
  out.push_back({"mask_token", mask_token, false});
  decoder_embed.collect(out, "decoder_embed");
  decoder.collect(out, "decoder");
  head_norm.collect(out, "head_norm");
  head.collect(out, "head");
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back({"conv" + std::to_string(i) + ".weight", conv_w[i], true});
    out.push_back({"conv" + std::to_string(i) + ".bias", conv_b[i], false});
  }
  return out;
}

namespace {

struct Embedded {
  nd::Tensor tokens;  // [S, Nd, d] patch embedding + absolute code
  nd::Tensor code;    // [S, Nd, d] absolute code alone
  std::vector<posenc::SpatialIndex> slots;
};

Embedded embed(const MAEModel& model, const io::DWIVolumeSet& vol, const MaskPlan& plan) {
  vol.validate();
  const auto& cfg = model.config();
  const auto g = io::patch_grid(vol.nx(), vol.ny(), vol.nz(), cfg.patch);
  Embedded e;
  e.slots = io::slot_indices(g);
  if (plan.slots != e.slots.size() || plan.volumes != vol.volumes())
    throw nd::ShapeError("mask plan is " + std::to_string(plan.slots) + " x " +
                         std::to_string(plan.volumes) + " but the volume has " +
                         std::to_string(e.slots.size()) + " x " + std::to_string(vol.volumes()) +
                         " tokens");
  e.code = model.position.grid(e.slots, vol.table.entries(), cfg.b_norm);
  e.tokens = nd::add(model.patch_proj(io::extract_patches(vol.signal, cfg.patch)), e.code);
  return e;
}

attn::EncoderOutput encode_embedded(const MAEModel& model, const io::DWIVolumeSet& vol,
                                    const MaskPlan& plan, const Embedded& e) {
  const std::size_t d = model.config().d_model, nd_all = vol.volumes();
  const auto vs = plan.visible_slots(), vv = plan.visible_volumes();
  for (auto s : vs)
    for (auto n : vv)
      if (plan.masked(s, n))
        throw std::invalid_argument("mask plan does not leave a rectangular visible grid");
  std::vector<std::size_t> idx;
  idx.reserve(vs.size() * vv.size() * d);
  for (auto s : vs)
    for (auto n : vv)
      for (std::size_t c = 0; c < d; ++c) idx.push_back((s * nd_all + n) * d + c);
  attn::TokenGrid grid;
  grid.tokens = nd::gather_flat(e.tokens, idx, {vs.size(), vv.size(), d});
  for (auto s : vs) grid.spatial.push_back(e.slots[s]);
  for (auto n : vv) grid.diffusion.push_back(vol.table[n]);
  return model.encoder.forward(grid);
}

}  // namespace

attn::EncoderOutput mae_encode(const MAEModel& model, const io::DWIVolumeSet& vol,
                               const MaskPlan& plan) {
  return encode_embedded(model, vol, plan, embed(model, vol, plan));
}

nd::Tensor mae_forward(const MAEModel& model, const io::DWIVolumeSet& vol, const MaskPlan& plan) {
  const auto& cfg = model.config();
  const std::size_t d = cfg.d_model, c0 = cfg.conv_channels;
  const Embedded e = embed(model, vol, plan);
  const auto enc = encode_embedded(model, vol, plan, e);
  const std::size_t s_all = plan.slots, nd_all = plan.volumes;
  const std::size_t n_vis = enc.grid.slots() * enc.grid.volumes();

  // Rows 0..n_vis-1 hold encoded tokens in (slot, volume) order, the rest
  // hold mask tokens; `order` places every row at its grid position.
  std::vector<std::size_t> masked_rows, order(s_all * nd_all);
  std::size_t next_vis = 0;
  for (std::size_t i = 0; i < s_all * nd_all; ++i) {
    if (plan.mask[i]) {
      order[i] = n_vis + masked_rows.size();
      masked_rows.push_back(i);
    } else {
      order[i] = next_vis++;
    }
  }
  nd::Tensor rows = nd::reshape(model.decoder_embed(enc.grid.tokens), {n_vis, d});
  if (!masked_rows.empty()) {
    const std::size_t nm = masked_rows.size();
    const auto filler =
        nd::add(nd::gather_rows(nd::reshape(e.code, {s_all * nd_all, d}), masked_rows),
                nd::expand(nd::reshape(model.mask_token, {1, d}), {nm, d}));
    rows = nd::concat({rows, filler}, 0);
  }
  attn::TokenGrid full;
  full.tokens = nd::reshape(nd::gather_rows(rows, order), {s_all, nd_all, d});
  full.spatial = e.slots;
  full.diffusion = vol.table.entries();
  const auto decoded = model.decoder.forward(full);

  const auto feats = model.head(model.head_norm(decoded.tokens));
  const std::array<std::size_t, 3> ext{vol.nx(), vol.ny(), vol.nz()};
  auto x = io::unpatchify_channels(feats, ext, cfg.patch, c0);
  x = nd::gelu(nd::conv3d(x, model.conv_w[0], model.conv_b[0]));
  x = nd::gelu(nd::conv3d(x, model.conv_w[1], model.conv_b[1]));
  x = nd::conv3d(x, model.conv_w[2], model.conv_b[2]);
  return nd::permute(nd::reshape(x, {nd_all, ext[0], ext[1], ext[2]}), {1, 2, 3, 0});
}

LossParts mae_loss_parts(const nd::Tensor& recon, const nd::Tensor& target, const MaskPlan& plan,
                         const io::PatchSize& patch, double t) {
  if (recon.shape() != target.shape() || recon.rank() != 4)
    throw nd::ShapeError("mae_loss: recon " + nd::to_string(recon.shape()) + " vs target " +
                         nd::to_string(target.shape()));
  const auto vm = voxel_mask(plan, {recon.dim(0), recon.dim(1), recon.dim(2)}, patch, recon.dim(3));
  if (std::none_of(vm.begin(), vm.end(), [](char c) { return c; }))
    throw std::invalid_argument("mae_loss: plan has no masked voxel");
  std::vector<char> visible(vm.size());
  for (std::size_t i = 0; i < vm.size(); ++i) visible[i] = !vm[i];
  LossParts parts;
  parts.masked = nd::masked_mse(recon, target, vm);
  const bool any_visible = std::any_of(visible.begin(), visible.end(), [](char c) { return c; });
  parts.unmasked = any_visible ? nd::masked_mse(recon, target, visible) : nd::Tensor::scalar(0.0);
  parts.total = nd::add(nd::scale(parts.unmasked, 1.0 - t), nd::scale(parts.masked, t));
  return parts;
}

nd::Tensor mae_loss(const nd::Tensor& recon, const nd::Tensor& target, const MaskPlan& plan,
                    const io::PatchSize& patch, double t) {
  return mae_loss_parts(recon, target, plan, patch, t).total;
}

double blend(double unmasked, double masked, double t) { return (1.0 - t) * unmasked + t * masked; }

io::DWIVolumeSet sample_training_crop(const io::DWIVolumeSet& vol, Rng& rng, CropSpec spec,
                                      CropInfo* info) {
  vol.validate();
  if (vol.nz() < spec.slices)
    throw std::invalid_argument("sample_training_crop: volume has " + std::to_string(vol.nz()) +
                                " slices, need " + std::to_string(spec.slices));
  if (vol.volumes() < spec.directions)
    throw std::invalid_argument("sample_training_crop: volume has " +
                                std::to_string(vol.volumes()) + " directions, need " +
                                std::to_string(spec.directions));
  const std::size_t z0 = static_cast<std::size_t>(rng.below(vol.nz() - spec.slices + 1));
  const auto dirs = rng.sample_without_replacement(vol.volumes(), spec.directions);
  const std::size_t nx = vol.nx(), ny = vol.ny(), nz = vol.nz(), nd_in = vol.volumes();
  const auto src = vol.signal.data();
  std::vector<double> out;
  out.reserve(nx * ny * spec.slices * dirs.size());
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = z0; z < z0 + spec.slices; ++z)
        for (auto n : dirs) out.push_back(src[((x * ny + y) * nz + z) * nd_in + n]);
  io::DWIVolumeSet crop;
  crop.signal = nd::Tensor::from({nx, ny, spec.slices, dirs.size()}, std::move(out));
  crop.table = vol.table.subset(dirs);
  crop.spacing = vol.spacing;
  if (info) {
    info->z0 = z0;
    info->directions = dirs;
  }
  return crop;
}

}  // namespace drope::mae
