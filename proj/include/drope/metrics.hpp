// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reconstruction quality, diffusion-tensor fitting and probes on frozen
// features.

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "drope/dmri_io.hpp"
#include "drope/phantom.hpp"
#include "drope/tensor.hpp"

namespace drope::metrics {

/// Returned by psnr when the images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(range^2 / MSE). Shapes must match.
double psnr(const nd::Tensor& x, const nd::Tensor& y, double data_range = 2.0);
/// PSNR over the elements where mask is set.
double psnr(const nd::Tensor& x, const nd::Tensor& y, std::span<const char> mask,
            double data_range = 2.0);
/// PSNR for a pooled mean squared error.
double psnr_from_mse(double mse, double data_range = 2.0);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double data_range = 2.0;
};

/// Mean 2D SSIM of one [Nx, Ny] slice pair over the window-valid region.
double ssim_slice(std::span<const double> x, std::span<const double> y, std::size_t nx,
                  std::size_t ny, const SsimParams& p = {});
/// Axial slice-wise SSIM averaged over slices (and volumes for 4D input).
double ssim(const nd::Tensor& x, const nd::Tensor& y, const SsimParams& p = {});

struct DTensorFit {
  std::array<std::size_t, 3> extents{};
  std::vector<phantom::SymTensor> tensors;     // per voxel, x slowest
  std::vector<std::array<double, 3>> eigen;    // descending, clamped at 0
  std::vector<double> fa, md;
  std::vector<char> fitted;                    // voxels that were fitted
};

/// Fractional anisotropy of three eigenvalues; 0 when all are 0.
double fractional_anisotropy(const std::array<double, 3>& l);

/// Ordinary least squares on -ln(max(S, 1e-6)) = b v^T D v per voxel. Only
/// voxels with mask set are fitted (all voxels when mask is empty). Throws
/// when the design matrix has rank below 6.
DTensorFit fit_dti(const io::DWIVolumeSet& vol, std::span<const char> mask = {});

struct FaMdError {
  double fa = 0.0, md = 0.0;
};

FaMdError fa_md_error(const DTensorFit& a, const DTensorFit& b, std::span<const char> mask);

/// Pearson correlation; throws std::domain_error when either side is constant.
double pearson(std::span<const double> a, std::span<const double> b);
/// Rank-statistic AUROC with tied scores counted as one half.
double auroc(std::span<const double> scores, std::span<const int> labels);

enum class HeadKind { linear, mlp };
enum class Task { regression, classification };

struct ProbeHead {
  HeadKind kind = HeadKind::linear;
  Task task = Task::regression;
  double l2 = 1e-6;             // ridge / logistic penalty on standardized weights
  std::size_t hidden = 32;      // MLP only
  std::size_t mlp_steps = 500;  // full-batch Adam steps, MLP only
  double mlp_lr = 1e-2;
};

/// Trainable parameter count: d + 1 for the linear head.
std::size_t head_parameter_count(const ProbeHead& head, std::size_t d);

struct ProbeResult {
  double rho = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double auroc = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> predictions;  // out-of-fold, one per sample
  std::vector<std::size_t> fold_of;
};

/// k-fold cross-validation of a head on frozen features. Folds come from a
/// seeded shuffle (stratified for classification). Regression reports rho
/// and MSE; classification reports accuracy at 0.5 and AUROC of the
/// predicted probabilities. Throws when a fold holds a single class.
ProbeResult train_probe(const std::vector<std::vector<double>>& features,
                        std::span<const double> targets, const ProbeHead& head,
                        std::size_t folds, std::uint64_t seed);

/// Writes a header row and rows of already formatted cells.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
/// Shortest round-trip decimal form; "inf" / "nan" for non-finite values.
std::string format_number(double v);

}  // namespace drope::metrics
