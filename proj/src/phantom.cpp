// SPDX-License-Identifier: Apache-2.0
#include "drope/phantom.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "drope/rng.hpp"

namespace drope::phantom {
namespace {

Eigen::Matrix3d to_matrix(const SymTensor& d) {
  Eigen::Matrix3d m;
  m << d[0], d[1], d[2], d[1], d[3], d[4], d[2], d[4], d[5];
  return m;
}

dspace::BVector random_direction(Rng& rng) {
  for (;;) {
    const double x = rng.normal(), y = rng.normal(), z = rng.normal();
    if (x * x + y * y + z * z > 1e-12) return dspace::BVector(x, y, z);
  }
}

bool inside(const Region& r, double u, double v, double w) {
  const double a = (u - r.center[0]) / r.radii[0];
  const double b = (v - r.center[1]) / r.radii[1];
  const double c = (w - r.center[2]) / r.radii[2];
  return a * a + b * b + c * c <= 1.0;
}

}  // namespace

SymTensor diagonal(double l1, double l2, double l3) { return {l1, 0.0, 0.0, l2, 0.0, l3}; }

SymTensor axial(double l_par, double l_perp, const dspace::BVector& axis) {
  const auto& u = axis.components();
  const double k = l_par - l_perp;
  return {l_perp + k * u[0] * u[0], k * u[0] * u[1], k * u[0] * u[2],
          l_perp + k * u[1] * u[1], k * u[1] * u[2], l_perp + k * u[2] * u[2]};
}

double quadratic(const SymTensor& d, const dspace::BVector& v) {
  const double x = v.x(), y = v.y(), z = v.z();
  return d[0] * x * x + d[3] * y * y + d[5] * z * z +
         2.0 * (d[1] * x * y + d[2] * x * z + d[4] * y * z);
}

double attenuation(const SymTensor& d, double b, const dspace::BVector& v) {
  return std::exp(-b * quadratic(d, v));
}

void PhantomSpec::validate() const {
  for (auto e : extents)
    if (e == 0) throw std::invalid_argument("PhantomSpec: zero extent");
  if (shells.empty()) throw std::invalid_argument("PhantomSpec: no shells");
  for (double b : shells)
    if (!(b >= io::kReferenceThreshold))
      throw std::invalid_argument("PhantomSpec: shell b-values must be >= 50");
  if (dirs_per_shell == 0) throw std::invalid_argument("PhantomSpec: no directions");
  if (b0_count == 0) throw std::invalid_argument("PhantomSpec: need at least one b0 volume");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("PhantomSpec: negative noise sigma");
  for (const auto& r : regions) {
    for (double x : r.radii)
      if (!(x > 0.0)) throw std::invalid_argument("PhantomSpec: region radii must be > 0");
    if (!(r.s0 > 0.0)) throw std::invalid_argument("PhantomSpec: region s0 must be > 0");
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(to_matrix(r.tensor));
    if (!(es.eigenvalues().minCoeff() > 0.0))
      throw std::invalid_argument("PhantomSpec: tensor of region '" + r.name +
                                  "' is not positive-definite");
  }
}

dspace::GradientTable acquisition_table(const PhantomSpec& spec) {
  Rng rng(Rng::mix(spec.seed, 1));
  std::vector<dspace::DiffusionPoint> pts(spec.b0_count, dspace::DiffusionPoint());
  for (double b : spec.shells)
    for (std::size_t i = 0; i < spec.dirs_per_shell; ++i)
      pts.emplace_back(b, random_direction(rng));
  return dspace::GradientTable(std::move(pts));
}

Phantom generate(const PhantomSpec& spec) {
  spec.validate();
  const auto [nx, ny, nz] = spec.extents;
  const std::size_t nvox = nx * ny * nz;
  Phantom ph;
  ph.full_table = acquisition_table(spec);
  const auto dwi = ph.full_table.weighted();
  const std::size_t nd = dwi.size();
  ph.tensors.assign(nvox, SymTensor{});
  ph.tissue.assign(nvox, 0);
  ph.s0.assign(nvox, 0.0);

  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = 0; z < nz; ++z) {
        const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(nx);
        const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(ny);
        const double w = (static_cast<double>(z) + 0.5) / static_cast<double>(nz);
        const std::size_t i = (x * ny + y) * nz + z;
        for (const auto& r : spec.regions)
          if (inside(r, u, v, w)) {
            ph.tensors[i] = r.tensor;
            ph.tissue[i] = 1;
            ph.s0[i] = r.s0;
          }
      }

  Rng noise(Rng::mix(spec.seed, 2));
  std::vector<double> sig(nvox * nd, 0.0);
  for (std::size_t i = 0; i < nvox; ++i) {
    if (!ph.tissue[i]) continue;
    for (std::size_t n = 0; n < nd; ++n) {
      double a = attenuation(ph.tensors[i], dwi[n].b, dwi[n].dir);
      if (spec.noise_sigma > 0.0) a += spec.noise_sigma * noise.normal();
      sig[i * nd + n] = std::clamp(a, 0.0, io::kClipMax);
    }
  }
  ph.volume.signal = nd::Tensor::from({nx, ny, nz, nd}, std::move(sig));
  ph.volume.table = dwi;
  ph.volume.spacing = spec.spacing;
  return ph;
}

nd::Tensor Phantom::raw_signal(double signal_scale) const {
  const auto refs = full_table.reference_indices();
  const auto dwi = full_table.weighted_indices();
  const std::size_t nx = volume.nx(), ny = volume.ny(), nz = volume.nz();
  const std::size_t nt = full_table.size(), nd = volume.volumes(), nvox = nx * ny * nz;
  const auto a = volume.signal.data();
  std::vector<double> out(nvox * nt, 0.0);
  for (std::size_t i = 0; i < nvox; ++i) {
    const double ref = signal_scale * s0[i];
    for (auto r : refs) out[i * nt + r] = ref;
    for (std::size_t n = 0; n < nd; ++n) out[i * nt + dwi[n]] = ref * a[i * nd + n];
  }
  return nd::Tensor::from({nx, ny, nz, nt}, std::move(out));
}

PhantomSpec random_spec(std::uint64_t seed, std::array<std::size_t, 3> extents,
                        std::vector<double> shells, std::size_t dirs_per_shell,
                        double noise_sigma) {
  Rng rng(Rng::mix(seed, 0));
  auto jitter = [&](double c, double a) { return c + rng.uniform(-a, a); };
  PhantomSpec s;
  s.extents = extents;
  s.shells = std::move(shells);
  s.dirs_per_shell = dirs_per_shell;
  s.noise_sigma = noise_sigma;
  s.seed = seed;

  const double cx = jitter(0.5, 0.04), cy = jitter(0.5, 0.04);
  Region gm{"grey_matter",
            {cx, cy, 0.5},
            {jitter(0.40, 0.04), jitter(0.44, 0.04), 0.95},
            diagonal(0, 0, 0),
            1.0};
  const double md_gm = rng.uniform(0.7e-3, 0.9e-3);
  gm.tensor = diagonal(md_gm, md_gm, md_gm);
  s.regions.push_back(gm);

  const double l_par = rng.uniform(1.5e-3, 1.9e-3);
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? -1.0 : 1.0;
    Region wm{side == 0 ? "white_matter_left" : "white_matter_right",
              {cx + sign * jitter(0.14, 0.03), jitter(cy, 0.03), 0.5},
              {jitter(0.10, 0.02), jitter(0.24, 0.04), 0.9},
              {},
              jitter(0.8, 0.05)};
    const double par = side == 0 ? l_par : rng.uniform(1.5e-3, 1.9e-3);
    const double perp = rng.uniform(0.2e-3, 0.4e-3);
    wm.tensor = axial(par, perp, random_direction(rng));
    s.regions.push_back(wm);
  }
  s.target = l_par * 1e3;

  const double csf = 3.0e-3;
  s.regions.push_back({"csf", {cx, cy, 0.5}, {jitter(0.05, 0.01), jitter(0.12, 0.02), 0.9},
                       diagonal(csf, csf, csf), 1.3});

  s.label = rng.uniform() < 0.5 ? 1 : 0;
  if (s.label) {
    const double md = rng.uniform(1.3e-3, 1.7e-3);
    s.regions.push_back({"lesion",
                         {cx + jitter(0.0, 0.2), cy + jitter(0.0, 0.2), 0.5},
                         {0.08, 0.08, 0.9},
                         diagonal(md, md, md),
                         1.1});
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json region_json(const Region& r) {
  return {{"name", r.name}, {"center", r.center}, {"radii", r.radii},
          {"tensor", r.tensor}, {"s0", r.s0}};
}

}  // namespace

std::string to_json(const PhantomSpec& s) {
  json j;
  j["extents"] = s.extents;
  j["spacing"] = s.spacing;
  j["shells"] = s.shells;
  j["dirs_per_shell"] = s.dirs_per_shell;
  j["b0_count"] = s.b0_count;
  j["noise_sigma"] = s.noise_sigma;
  j["signal_scale"] = s.signal_scale;
  j["seed"] = s.seed;
  j["target"] = s.target;
  j["label"] = s.label;
  j["regions"] = json::array();
  for (const auto& r : s.regions) j["regions"].push_back(region_json(r));
  return j.dump(2);
}

PhantomSpec from_json(const std::string& text) {
  const json j = json::parse(text);
  PhantomSpec s;
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("extents", s.extents);
  opt("spacing", s.spacing);
  opt("shells", s.shells);
  opt("dirs_per_shell", s.dirs_per_shell);
  opt("b0_count", s.b0_count);
  opt("noise_sigma", s.noise_sigma);
  opt("signal_scale", s.signal_scale);
  opt("seed", s.seed);
  opt("target", s.target);
  opt("label", s.label);
  if (j.contains("regions")) {
    for (const auto& rj : j.at("regions")) {
      Region r;
      if (rj.contains("name")) rj.at("name").get_to(r.name);
      rj.at("center").get_to(r.center);
      rj.at("radii").get_to(r.radii);
      rj.at("tensor").get_to(r.tensor);
      if (rj.contains("s0")) rj.at("s0").get_to(r.s0);
      s.regions.push_back(r);
    }
  }
  s.validate();
  return s;
}

PhantomSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void save_spec(const PhantomSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out << to_json(spec) << '\n';
}

}  // namespace drope::phantom
