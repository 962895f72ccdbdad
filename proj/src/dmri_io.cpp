// SPDX-License-Identifier: Apache-2.0
#include "drope/dmri_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace drope::io {
namespace {

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw std::invalid_argument(what + ": non-numeric token \"" + tok + "\"");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  return lines;
}

}  // namespace

dspace::GradientTable read_bvals_bvecs(const std::filesystem::path& bvals,
                                       const std::filesystem::path& bvecs) {
  std::string all;
  for (const auto& l : read_lines(bvals)) all += l + '\n';
  const auto b = parse_numbers(all, bvals.string());

  const auto rows = read_lines(bvecs);
  if (rows.size() != 3)
    throw std::invalid_argument(bvecs.string() + ": expected 3 rows (x, y, z), found " +
                                std::to_string(rows.size()));
  std::array<std::vector<double>, 3> v;
  for (std::size_t r = 0; r < 3; ++r) v[r] = parse_numbers(rows[r], bvecs.string());
  for (std::size_t r = 0; r < 3; ++r)
    if (v[r].size() != b.size())
      throw std::invalid_argument("bvals/bvecs count mismatch: " + std::to_string(b.size()) +
                                  " b-values, " + std::to_string(v[r].size()) +
                                  " entries in bvecs row " + std::to_string(r));

  std::vector<dspace::DiffusionPoint> pts;
  pts.reserve(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!std::isfinite(b[i]) || b[i] < 0.0)
      throw std::invalid_argument("invalid b-value at entry " + std::to_string(i));
    const double x = v[0][i], y = v[1][i], z = v[2][i];
    const bool zero_dir = x == 0.0 && y == 0.0 && z == 0.0;
    if (b[i] < kReferenceThreshold) {
      pts.emplace_back(0.0, zero_dir ? dspace::BVector() : dspace::BVector(x, y, z));
      continue;
    }
    if (zero_dir)
      throw std::invalid_argument("zero gradient direction for b = " + std::to_string(b[i]) +
                                  " at entry " + std::to_string(i));
    pts.emplace_back(b[i], dspace::BVector(x, y, z));
  }
  return dspace::GradientTable(std::move(pts));
}

void write_bvals_bvecs(const dspace::GradientTable& table, const std::filesystem::path& bvals,
                       const std::filesystem::path& bvecs) {
  std::ofstream bo(bvals), vo(bvecs);
  if (!bo || !vo) throw std::runtime_error("cannot create gradient files");
  bo.precision(17);
  vo.precision(17);
  for (std::size_t i = 0; i < table.size(); ++i) bo << (i ? " " : "") << table[i].b;
  bo << '\n';
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < table.size(); ++i) {
      const double c = table[i].is_reference() ? 0.0 : table[i].dir.components()[r];
      vo << (i ? " " : "") << c;
    }
    vo << '\n';
  }
}

void DWIVolumeSet::validate() const {
  if (signal.rank() != 4) throw nd::ShapeError("DWIVolumeSet: signal must be [Nx, Ny, Nz, Nd]");
  if (table.size() != signal.dim(3))
    throw nd::ShapeError("DWIVolumeSet: gradient table length does not match Nd");
  for (const auto& p : table.entries())
    if (p.is_reference()) throw std::invalid_argument("DWIVolumeSet: reference entry in table");
}

DWIVolumeSet normalize_by_b0(const nd::Tensor& raw, const dspace::GradientTable& table,
                             std::array<double, 3> spacing) {
  if (raw.rank() != 4) throw nd::ShapeError("normalize_by_b0: raw data must be 4D");
  if (raw.dim(3) != table.size())
    throw nd::ShapeError("normalize_by_b0: gradient table has " + std::to_string(table.size()) +
                         " entries for " + std::to_string(raw.dim(3)) + " volumes");
  const auto refs = table.reference_indices();
  if (refs.empty()) throw std::invalid_argument("normalize_by_b0: no b = 0 volume");
  const auto dwi = table.weighted_indices();
  const std::size_t nvox = raw.dim(0) * raw.dim(1) * raw.dim(2), nt = raw.dim(3);
  const std::size_t nd_out = dwi.size();
  const auto in = raw.data();
  std::vector<double> out(nvox * nd_out);
  for (std::size_t v = 0; v < nvox; ++v) {
    const double* s = in.data() + v * nt;
    double s0 = 0.0;
    for (auto r : refs) s0 += s[r];
    s0 /= static_cast<double>(refs.size());
    for (std::size_t j = 0; j < nd_out; ++j) {
      double a = 0.0;
      if (s0 > kS0Floor) a = std::clamp(s[dwi[j]] / s0, 0.0, kClipMax);
      out[v * nd_out + j] = a;
    }
  }
  DWIVolumeSet set;
  set.signal = nd::Tensor::from({raw.dim(0), raw.dim(1), raw.dim(2), nd_out}, std::move(out));
  set.table = table.weighted();
  set.spacing = spacing;
  return set;
}

std::array<std::size_t, 3> patch_grid(std::size_t nx, std::size_t ny, std::size_t nz,
                                      const PatchSize& p) {
  if (p.px == 0 || p.py == 0 || p.pz == 0) throw std::invalid_argument("patch extents must be > 0");
  if (nx % p.px || ny % p.py || nz % p.pz || nx == 0 || ny == 0 || nz == 0)
    throw std::invalid_argument("volume extents (" + std::to_string(nx) + "," +
                                std::to_string(ny) + "," + std::to_string(nz) +
                                ") are not divisible by the patch size (" +
                                std::to_string(p.px) + "," + std::to_string(p.py) + "," +
                                std::to_string(p.pz) + ")");
  return {nx / p.px, ny / p.py, nz / p.pz};
}

std::vector<posenc::SpatialIndex> slot_indices(const std::array<std::size_t, 3>& g) {
  std::vector<posenc::SpatialIndex> out;
  out.reserve(g[0] * g[1] * g[2]);
  for (std::size_t x = 0; x < g[0]; ++x)
    for (std::size_t y = 0; y < g[1]; ++y)
      for (std::size_t z = 0; z < g[2]; ++z) out.push_back({x, y, z});
  return out;
}

nd::Tensor extract_patches(const nd::Tensor& signal, const PatchSize& p) {
  if (signal.rank() != 4) throw nd::ShapeError("extract_patches: signal must be 4D");
  const std::size_t ny = signal.dim(1), nz = signal.dim(2), nd = signal.dim(3);
  const auto g = patch_grid(signal.dim(0), ny, nz, p);
  const std::size_t s = g[0] * g[1] * g[2], pv = p.voxels();
  std::vector<std::size_t> idx(s * nd * pv);
  std::size_t o = 0;
  for (std::size_t gx = 0; gx < g[0]; ++gx)
    for (std::size_t gy = 0; gy < g[1]; ++gy)
      for (std::size_t gz = 0; gz < g[2]; ++gz)
        for (std::size_t n = 0; n < nd; ++n)
          for (std::size_t ix = 0; ix < p.px; ++ix)
            for (std::size_t iy = 0; iy < p.py; ++iy)
              for (std::size_t iz = 0; iz < p.pz; ++iz) {
                const std::size_t x = gx * p.px + ix, y = gy * p.py + iy, z = gz * p.pz + iz;
                idx[o++] = ((x * ny + y) * nz + z) * nd + n;
              }
  return nd::gather_flat(signal, idx, {s, nd, pv});
}

nd::Tensor unpatchify_channels(const nd::Tensor& features, const std::array<std::size_t, 3>& e,
                               const PatchSize& p, std::size_t channels) {
  const auto g = patch_grid(e[0], e[1], e[2], p);
  const std::size_t s = g[0] * g[1] * g[2], pv = p.voxels();
  if (features.rank() != 3 || features.dim(0) != s || features.dim(2) != pv * channels)
    throw nd::ShapeError("unpatchify_channels: expected [" + std::to_string(s) + ", Nd, " +
                         std::to_string(pv * channels) + "], got " +
                         nd::to_string(features.shape()));
  const std::size_t nd = features.dim(1);
  std::vector<std::size_t> idx(nd * channels * e[0] * e[1] * e[2]);
  std::size_t o = 0;
  for (std::size_t n = 0; n < nd; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t x = 0; x < e[0]; ++x)
        for (std::size_t y = 0; y < e[1]; ++y)
          for (std::size_t z = 0; z < e[2]; ++z) {
            const std::size_t slot = ((x / p.px) * g[1] + y / p.py) * g[2] + z / p.pz;
            const std::size_t pix = ((x % p.px) * p.py + y % p.py) * p.pz + z % p.pz;
            idx[o++] = (slot * nd + n) * pv * channels + pix * channels + c;
          }
  return nd::gather_flat(features, idx, {nd, channels, e[0], e[1], e[2]});
}

nd::Tensor unpatchify(const nd::Tensor& patches, const std::array<std::size_t, 3>& e,
                      const PatchSize& p) {
  const auto vols = unpatchify_channels(patches, e, p, 1);
  const std::size_t nd = patches.dim(1);
  return nd::permute(nd::reshape(vols, {nd, e[0], e[1], e[2]}), {1, 2, 3, 0});
}

attn::TokenGrid patchify(const DWIVolumeSet& vol, const PatchSize& patch,
                         const layers::Linear& proj) {
  vol.validate();
  attn::TokenGrid grid;
  grid.tokens = proj(extract_patches(vol.signal, patch));
  grid.spatial = slot_indices(patch_grid(vol.nx(), vol.ny(), vol.nz(), patch));
  grid.diffusion = vol.table.entries();
  return grid;
}

}  // namespace drope::io
