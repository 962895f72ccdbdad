// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pretraining orchestration: configuration, checkpoints, the epoch loop and
// masked-reconstruction evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "drope/dmri_io.hpp"
#include "drope/mae.hpp"
#include "drope/optim.hpp"

namespace drope::train {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 4;
  std::size_t warmup_epochs = 40;
  double lr_start = 5e-5, lr_final = 1e-6;
  double wd_start = 0.04, wd_final = 0.4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t seed = 0;
  mae::Strategy strategy = mae::Strategy::alternating;
  io::PatchSize patch{8, 8, 4};
  std::size_t d_model = 384, n_heads = 3;
  std::size_t encoder_blocks = 10, decoder_layers = 3;
  std::size_t conv_channels = 8;
  bool use_drope = true;
  attn::RelativePE spatial_pe = attn::RelativePE::none;
  double gamma = 1.0, b_scale = 1000.0, b_norm = 3000.0;
  double tau_start = 0.05, tau_final = 0.95;
  std::size_t crop_slices = 4, crop_directions = 15;
  std::size_t eval_crops = 2;  // deterministic crops per validation volume

  void validate() const;
  mae::MAEConfig model_config() const;
  mae::CropSpec crop() const { return {crop_slices, crop_directions}; }
};

/// Keys mirror the field names; absent keys keep their defaults and unknown
/// keys are rejected.
std::string to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
/// FNV-1a 64 of the canonical JSON form.
std::uint64_t config_hash(const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints: "DRPK", u32 version, then records until end of file. A record
// is u32 name length, name bytes, u8 dtype, u32 rank, u64 extents and the
// row-major little-endian payload.

enum class DType : std::uint8_t { f64 = 1, u64 = 4, u8 = 5 };

struct Record {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint64_t> shape;
  std::vector<unsigned char> payload;  // little-endian bytes

  std::vector<double> as_f64() const;
  std::uint64_t as_u64() const;
  std::string as_text() const;
  static Record f64(std::string name, std::vector<std::uint64_t> shape, std::span<const double> v);
  static Record u64(std::string name, std::uint64_t v);
  static Record text(std::string name, const std::string& s);
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::uint32_t version = 1;
  std::vector<Record> records;

  const Record& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameters as "param/<name>", moments as "opt.m/<name>" / "opt.v/<name>",
/// plus meta.epoch, meta.step, meta.config_hash and meta.config (JSON text).
Checkpoint make_checkpoint(const mae::MAEModel& model, const optim::AdamW* opt,
                           const TrainConfig& cfg, std::uint64_t epoch);
/// Copies checkpointed values into an existing model (and optimizer).
void restore(const Checkpoint& ck, mae::MAEModel& model, optim::AdamW* opt = nullptr);
/// Rebuilds the model from the stored configuration.
mae::MAEModel model_from_checkpoint(const Checkpoint& ck, TrainConfig* cfg_out = nullptr);

// ---------------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double psnr_masked = 0.0;
  double lr = 0.0, wd = 0.0, tau = 0.0;
};

struct MaskedScore {
  double model_mse = 0.0, baseline_mse = 0.0;
  std::size_t voxels = 0;
  double model_psnr() const;
  double baseline_psnr() const;
};

/// Masked-region reconstruction error pooled over `crops` deterministic
/// crops per volume. Alternating evaluates both strategies. The baseline
/// predicts, per direction, the mean of that direction's visible voxels in
/// the crop (the mean of all visible voxels when the direction is fully
/// masked).
MaskedScore evaluate_masked(const mae::MAEModel& model, const std::vector<io::DWIVolumeSet>& vols,
                            mae::Strategy strategy, const mae::CropSpec& crop, std::size_t crops,
                            std::uint64_t seed);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainOptions {
  std::filesystem::path checkpoint;  // written after the last epoch (or on divergence)
  std::filesystem::path metrics_csv;
  std::function<void(const EpochLog&)> on_epoch;
};

struct PretrainResult {
  mae::MAEModel model;
  std::vector<EpochLog> history;
};

/// Per epoch and batch: a crop per volume, a mask plan per strategy and
/// epoch, the blended loss with tau(epoch), one AdamW step per batch with
/// lr / wd from the cosine schedules. Validation PSNR uses `validation`
/// when non-empty. A non-finite loss or gradient writes the last good
/// checkpoint and throws TrainingDiverged.
PretrainResult run_pretrain(const TrainConfig& cfg, const std::vector<io::DWIVolumeSet>& train,
                            const std::vector<io::DWIVolumeSet>& validation,
                            const PretrainOptions& opts = {});

void write_history_csv(const std::vector<EpochLog>& history, const std::filesystem::path& path);

/// Phantoms from phantom::random_spec with seeds mix(seed, i).
struct PhantomSet {
  std::vector<io::DWIVolumeSet> volumes;
  std::vector<double> targets;
  std::vector<int> labels;
};
PhantomSet make_phantom_set(std::size_t count, std::uint64_t seed,
                            std::array<std::size_t, 3> extents, std::vector<double> shells,
                            std::size_t dirs_per_shell, double noise_sigma);

}  // namespace drope::train
