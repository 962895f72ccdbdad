// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic diffusion-tensor phantoms. Each voxel belongs to at most one
// ellipsoidal tissue region (later regions paint over earlier ones) with a
// constant 3x3 SPD tensor D; the attenuation for acquisition (b, v) is
// exp(-b v^T D v) plus Gaussian noise, clipped to [0, 2]. Voxels outside
// every region have S0 = 0 and attenuation 0.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drope/dmri_io.hpp"
#include "drope/dspace.hpp"

namespace drope::phantom {

/// Symmetric tensor components (xx, xy, xz, yy, yz, zz) in mm^2/s.
using SymTensor = std::array<double, 6>;

SymTensor diagonal(double l1, double l2, double l3);
/// l_perp * I + (l_par - l_perp) u u^T for a unit axis u.
SymTensor axial(double l_par, double l_perp, const dspace::BVector& axis);
/// v^T D v.
double quadratic(const SymTensor& d, const dspace::BVector& v);
/// exp(-b v^T D v).
double attenuation(const SymTensor& d, double b, const dspace::BVector& v);

struct Region {
  std::string name;
  std::array<double, 3> center{0.5, 0.5, 0.5};  // fractions of the extents
  std::array<double, 3> radii{0.25, 0.25, 0.25};
  SymTensor tensor{};
  double s0 = 1.0;  // relative reference signal
};

struct PhantomSpec {
  std::array<std::size_t, 3> extents{32, 32, 8};
  std::array<double, 3> spacing{2.0, 2.0, 2.0};
  std::vector<Region> regions;
  std::vector<double> shells{1000.0, 2000.0};
  std::size_t dirs_per_shell = 15;
  std::size_t b0_count = 1;
  double noise_sigma = 0.02;
  double signal_scale = 1000.0;  // raw b0 intensity for S0 = 1
  std::uint64_t seed = 0;
  // Sample-level labels carried along for probing experiments.
  double target = 0.0;
  int label = 0;

  /// Rejects empty shells, zero directions, negative noise and any region
  /// tensor that is not symmetric positive-definite.
  void validate() const;
};

struct Phantom {
  io::DWIVolumeSet volume;          // normalized attenuation, weighted volumes only
  dspace::GradientTable full_table; // b0 references first, then the shells
  std::vector<SymTensor> tensors;   // per voxel, x slowest; zero outside tissue
  std::vector<char> tissue;         // per voxel
  std::vector<double> s0;           // per voxel relative reference signal

  /// [Nx, Ny, Nz, b0_count + Nd] raw intensities matching full_table.
  nd::Tensor raw_signal(double signal_scale) const;
};

/// Seeded uniform directions (normalized Gaussian triples), one set per shell.
dspace::GradientTable acquisition_table(const PhantomSpec& spec);
Phantom generate(const PhantomSpec& spec);

/// Brain-like layout with random jitter: an isotropic grey-matter ellipsoid,
/// two anisotropic white-matter bundles with random axes, CSF ventricles and
/// an optional lesion. `target` is the left bundle's axial diffusivity in
/// 1e-3 mm^2/s and `label` marks the lesion.
PhantomSpec random_spec(std::uint64_t seed, std::array<std::size_t, 3> extents,
                        std::vector<double> shells, std::size_t dirs_per_shell,
                        double noise_sigma);

PhantomSpec load_spec(const std::filesystem::path& path);
void save_spec(const PhantomSpec& spec, const std::filesystem::path& path);
std::string to_json(const PhantomSpec& spec);
PhantomSpec from_json(const std::string& text);

}  // namespace drope::phantom
