// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "drope/metrics.hpp"
#include "drope/nifti.hpp"
#include "drope/phantom.hpp"
#include "drope/trainkit.hpp"

namespace drope::cli {
namespace {

namespace fs = std::filesystem;

// Phantom generation knobs shared by phantom, pretrain and probe.
struct PhantomOptions {
  std::string size = "32,32,8";
  std::size_t dirs = 30;
  std::string shells = "1000,2000";
  double noise = 0.02;
};

void add_phantom_options(CLI::App* app, PhantomOptions& p) {
  app->add_option("--size", p.size, "Extents: N (cube) or NX,NY,NZ")->capture_default_str();
  app->add_option("--dirs", p.dirs, "Diffusion directions in total, split evenly over shells")
      ->capture_default_str();
  app->add_option("--shells", p.shells, "Comma-separated b-values")->capture_default_str();
  app->add_option("--noise", p.noise, "Rician noise sigma relative to S0")->capture_default_str();
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    const auto* end = item.data() + item.size();
    const auto [ptr, ec] = std::from_chars(item.data(), end, v);
    if (ec != std::errc() || ptr != end) throw std::invalid_argument("not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::array<std::size_t, 3> parse_extents(const std::string& text) {
  const auto v = parse_doubles(text);
  if (v.size() != 1 && v.size() != 3) throw std::invalid_argument("--size takes 1 or 3 extents");
  std::array<std::size_t, 3> e{};
  for (std::size_t i = 0; i < 3; ++i) {
    const double x = v[v.size() == 1 ? 0 : i];
    if (!(x >= 1.0) || x != std::floor(x)) throw std::invalid_argument("--size extents must be positive integers");
    e[i] = static_cast<std::size_t>(x);
  }
  return e;
}

struct PhantomShape {
  std::array<std::size_t, 3> extents;
  std::vector<double> shells;
  std::size_t per_shell;
};

PhantomShape phantom_shape(const PhantomOptions& p) {
  PhantomShape s{parse_extents(p.size), parse_doubles(p.shells), 0};
  if (p.dirs == 0 || p.dirs % s.shells.size() != 0)
    throw std::invalid_argument("--dirs must be a positive multiple of the shell count");
  s.per_shell = p.dirs / s.shells.size();
  return s;
}

train::PhantomSet phantom_set(const PhantomOptions& p, std::size_t count, std::uint64_t seed) {
  const auto s = phantom_shape(p);
  return train::make_phantom_set(count, seed, s.extents, s.shells, s.per_shell, p.noise);
}

// A dataset prefix names <prefix>.nii, <prefix>.bval and <prefix>.bvec.
io::DWIVolumeSet load_prefix(const std::string& prefix) {
  const auto img = nifti::read(prefix + ".nii");
  const auto table = io::read_bvals_bvecs(prefix + ".bval", prefix + ".bvec");
  return io::normalize_by_b0(img.data, table, img.spacing());
}

// Largest origin-anchored sub-volume whose extents are patch multiples.
io::DWIVolumeSet crop_to_patch(const io::DWIVolumeSet& vol, const io::PatchSize& patch) {
  const std::array<std::size_t, 3> ext{vol.nx() / patch.px * patch.px, vol.ny() / patch.py * patch.py,
                                       vol.nz() / patch.pz * patch.pz};
  if (ext[0] == 0 || ext[1] == 0 || ext[2] == 0)
    throw std::invalid_argument("volume is smaller than one patch");
  if (ext[0] == vol.nx() && ext[1] == vol.ny() && ext[2] == vol.nz()) return vol;
  const std::size_t nd = vol.volumes();
  std::vector<double> v(ext[0] * ext[1] * ext[2] * nd);
  const auto src = vol.signal.data();
  for (std::size_t x = 0; x < ext[0]; ++x)
    for (std::size_t y = 0; y < ext[1]; ++y)
      for (std::size_t z = 0; z < ext[2]; ++z)
        std::copy_n(src.data() + ((x * vol.ny() + y) * vol.nz() + z) * nd, nd,
                    v.data() + ((x * ext[1] + y) * ext[2] + z) * nd);
  io::DWIVolumeSet out = vol;
  out.signal = nd::Tensor::from({ext[0], ext[1], ext[2], nd}, std::move(v));
  return out;
}

void write_rows(const fs::path& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows, std::ostream& out) {
  if (path.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    }
  } else {
    metrics::write_csv(path, header, rows);
  }
}

// ---------------------------------------------------------------------------

struct PhantomCmd {
  PhantomOptions shape;
  std::uint64_t seed = 0;
  std::string out = "phantom";
  std::string spec;
};

int cmd_phantom(const PhantomCmd& c, std::ostream& out) {
  const auto s = phantom_shape(c.shape);
  const auto spec = c.spec.empty()
                        ? phantom::random_spec(c.seed, s.extents, s.shells, s.per_shell, c.shape.noise)
                        : phantom::load_spec(c.spec);
  const auto ph = phantom::generate(spec);
  nifti::write(ph.raw_signal(spec.signal_scale), spec.spacing, c.out + ".nii");
  io::write_bvals_bvecs(ph.full_table, c.out + ".bval", c.out + ".bvec");
  out << "wrote " << c.out << ".nii, " << c.out << ".bval, " << c.out << ".bvec ("
      << ph.full_table.size() << " volumes, target " << metrics::format_number(spec.target)
      << ", label " << spec.label << ")\n";
  return 0;
}

// Model and optimization overrides applied on top of --config.
struct TrainOverrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  bool no_drope = false;
  std::optional<std::size_t> epochs, batch, warmup, d_model, heads, encoder_blocks, decoder_layers;
  std::optional<std::size_t> conv_channels, crop_slices, crop_directions;
  std::optional<std::string> patch;
  std::optional<double> lr, lr_final, wd, wd_final;
};

void add_train_overrides(CLI::App* app, TrainOverrides& o) {
  app->add_option("--config", o.config, "JSON configuration; flags override it")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "Random seed");
  app->add_option("--strategy", o.strategy, "Masking strategy")
      ->check(CLI::IsMember({"spatial", "diffusion", "alternating"}));
  app->add_flag("--no-drope", o.no_drope, "Disable the relative diffusion encoding (ablation)");
  app->add_option("--epochs", o.epochs);
  app->add_option("--batch", o.batch);
  app->add_option("--warmup", o.warmup, "Warmup epochs");
  app->add_option("--lr", o.lr, "Peak learning rate");
  app->add_option("--lr-final", o.lr_final);
  app->add_option("--wd", o.wd, "Initial weight decay");
  app->add_option("--wd-final", o.wd_final);
  app->add_option("--d-model", o.d_model);
  app->add_option("--heads", o.heads);
  app->add_option("--encoder-blocks", o.encoder_blocks);
  app->add_option("--decoder-layers", o.decoder_layers);
  app->add_option("--conv-channels", o.conv_channels, "Voxel feature channels of the conv head");
  app->add_option("--patch", o.patch, "Patch extents PX,PY,PZ");
  app->add_option("--crop-slices", o.crop_slices, "Slab thickness of training crops");
  app->add_option("--crop-directions", o.crop_directions, "Directions per training crop");
}

train::TrainConfig resolve_config(const TrainOverrides& o) {
  auto c = o.config.empty() ? train::TrainConfig{} : train::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.strategy) c.strategy = mae::strategy_from_string(*o.strategy);
  if (o.no_drope) c.use_drope = false;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch) c.batch_size = *o.batch;
  if (o.warmup) c.warmup_epochs = *o.warmup;
  // A shortened run without an explicit warmup keeps the warmup inside it.
  if (o.epochs && !o.warmup && c.warmup_epochs >= c.epochs) c.warmup_epochs = c.epochs / 10;
  if (o.lr) c.lr_start = *o.lr;
  if (o.lr_final) c.lr_final = *o.lr_final;
  if (o.wd) c.wd_start = *o.wd;
  if (o.wd_final) c.wd_final = *o.wd_final;
  if (o.d_model) c.d_model = *o.d_model;
  if (o.heads) c.n_heads = *o.heads;
  if (o.encoder_blocks) c.encoder_blocks = *o.encoder_blocks;
  if (o.decoder_layers) c.decoder_layers = *o.decoder_layers;
  if (o.conv_channels) c.conv_channels = *o.conv_channels;
  if (o.patch) {
    const auto e = parse_extents(*o.patch);
    c.patch = {e[0], e[1], e[2]};
  }
  if (o.crop_slices) c.crop_slices = *o.crop_slices;
  if (o.crop_directions) c.crop_directions = *o.crop_directions;
  c.validate();
  return c;
}

struct PretrainCmd {
  TrainOverrides train;
  PhantomOptions shape;
  std::vector<std::string> data, val_data;
  std::size_t phantoms = 0, val_phantoms = 0;
  std::string checkpoint = "model.drpk";
  std::string metrics_csv;
  std::string dump_config;
};

int cmd_pretrain(const PretrainCmd& c, std::ostream& out) {
  const auto cfg = resolve_config(c.train);
  if (!c.dump_config.empty()) {
    std::ofstream f(c.dump_config);
    f << train::to_json(cfg) << '\n';
  }
  std::vector<io::DWIVolumeSet> tr, va;
  for (const auto& p : c.data) tr.push_back(load_prefix(p));
  for (const auto& p : c.val_data) va.push_back(load_prefix(p));
  if (c.phantoms > 0) {
    auto set = phantom_set(c.shape, c.phantoms, Rng::mix(cfg.seed, 1));
    tr.insert(tr.end(), set.volumes.begin(), set.volumes.end());
  }
  if (c.val_phantoms > 0) {
    auto set = phantom_set(c.shape, c.val_phantoms, Rng::mix(cfg.seed, 2));
    va.insert(va.end(), set.volumes.begin(), set.volumes.end());
  }
  if (tr.empty()) throw std::invalid_argument("pretrain needs --data or --phantoms");

  train::PretrainOptions opts;
  opts.checkpoint = c.checkpoint;
  opts.metrics_csv = c.metrics_csv;
  opts.on_epoch = [&](const train::EpochLog& l) {
    out << "epoch " << l.epoch << " loss " << metrics::format_number(l.loss) << " psnr_masked "
        << metrics::format_number(l.psnr_masked) << " lr " << metrics::format_number(l.lr) << '\n'
        << std::flush;
  };
  const auto result = train::run_pretrain(cfg, tr, va, opts);
  out << "wrote " << c.checkpoint << '\n';
  if (!va.empty()) {
    const auto s = train::evaluate_masked(result.model, va, cfg.strategy, cfg.crop(), cfg.eval_crops,
                                          Rng::mix(cfg.seed, 13));
    out << "validation masked PSNR " << metrics::format_number(s.model_psnr()) << " (baseline "
        << metrics::format_number(s.baseline_psnr()) << ")\n";
  }
  return 0;
}

struct ReconstructCmd {
  std::string checkpoint, input, out = "recon";
  std::optional<std::string> strategy;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

int cmd_reconstruct(const ReconstructCmd& c, std::ostream& out) {
  train::TrainConfig cfg;
  const auto model = train::model_from_checkpoint(train::read_checkpoint(c.checkpoint), &cfg);
  const auto strategy = c.strategy ? mae::strategy_from_string(*c.strategy) : cfg.strategy;
  const auto vol = crop_to_patch(load_prefix(c.input), cfg.patch);
  const auto g = io::patch_grid(vol.nx(), vol.ny(), vol.nz(), cfg.patch);
  const auto plan = mae::make_mask(g[0] * g[1] * g[2], vol.volumes(), strategy, c.epoch, c.seed);
  nd::Tensor recon;
  {
    nd::NoGradGuard guard;
    recon = mae::mae_forward(model, vol, plan);
  }
  const auto vmask = mae::voxel_mask(plan, {vol.nx(), vol.ny(), vol.nz()}, cfg.patch, vol.volumes());
  std::vector<double> mask_values(vmask.begin(), vmask.end());
  nifti::write(recon, vol.spacing, c.out + ".nii");
  nifti::write(vol.signal, vol.spacing, c.out + "_target.nii");
  nifti::write(nd::Tensor::from(vol.signal.shape(), std::move(mask_values)), vol.spacing,
               c.out + "_mask.nii", nifti::Datatype::int16);
  io::write_bvals_bvecs(vol.table, c.out + ".bval", c.out + ".bvec");
  out << "wrote " << c.out << ".nii (" << mae::to_string(plan.applied) << " mask, "
      << plan.masked_count() << " of " << plan.mask.size() << " tokens masked), " << c.out
      << "_target.nii, " << c.out << "_mask.nii, " << c.out << ".bval, " << c.out << ".bvec\n";
  return 0;
}

struct EvalCmd {
  std::string recon, reference, mask, bval, bvec, out;
};

int cmd_eval(const EvalCmd& c, std::ostream& out) {
  const auto x = nifti::read(c.recon).data;
  const auto y = nifti::read(c.reference).data;
  if (x.shape() != y.shape()) throw std::invalid_argument("reconstruction and reference shapes differ");
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"psnr", metrics::format_number(metrics::psnr(x, y))});
  std::vector<char> mask;
  if (!c.mask.empty()) {
    const auto m = nifti::read(c.mask).data;
    if (m.shape() != x.shape()) throw std::invalid_argument("mask shape differs");
    for (double v : m.data()) mask.push_back(v != 0.0);
    rows.push_back({"psnr_masked", metrics::format_number(metrics::psnr(x, y, mask))});
  }
  rows.push_back({"ssim", metrics::format_number(metrics::ssim(x, y))});
  if (!c.bval.empty()) {
    if (c.bvec.empty()) throw std::invalid_argument("--bval needs --bvec");
    if (x.rank() != 4) throw std::invalid_argument("tensor fitting needs 4D volumes");
    const auto table = io::read_bvals_bvecs(c.bval, c.bvec);
    const io::DWIVolumeSet rx{x, table, {1.0, 1.0, 1.0}}, ry{y, table, {1.0, 1.0, 1.0}};
    // Voxels with a nonzero reference signal in every volume.
    const std::size_t nd = x.dim(3), voxels = x.numel() / nd;
    std::vector<char> tissue(voxels, 1);
    for (std::size_t v = 0; v < voxels; ++v)
      for (std::size_t n = 0; n < nd; ++n)
        if (y.data()[v * nd + n] <= 0.0) tissue[v] = 0;
    const auto e = metrics::fa_md_error(metrics::fit_dti(rx, tissue), metrics::fit_dti(ry, tissue), tissue);
    rows.push_back({"fa_error", metrics::format_number(e.fa)});
    rows.push_back({"md_error", metrics::format_number(e.md)});
  }
  write_rows(c.out, {"metric", "value"}, rows, out);
  return 0;
}

struct ProbeCmd {
  std::string checkpoint, out;
  PhantomOptions shape;
  std::size_t phantoms = 60, folds = 5;
  std::uint64_t seed = 0;
  std::string task = "regression", head = "linear";
  bool permute = false;
};

int cmd_probe(const ProbeCmd& c, std::ostream& out) {
  train::TrainConfig cfg;
  const auto model = train::model_from_checkpoint(train::read_checkpoint(c.checkpoint), &cfg);
  const auto set = phantom_set(c.shape, c.phantoms, Rng::mix(c.seed, 3));
  std::vector<std::vector<double>> features;
  {
    nd::NoGradGuard guard;
    for (const auto& v : set.volumes) {
      const auto vol = crop_to_patch(v, cfg.patch);
      const auto g = io::patch_grid(vol.nx(), vol.ny(), vol.nz(), cfg.patch);
      const auto plan = mae::MaskPlan::all_visible(g[0] * g[1] * g[2], vol.volumes());
      features.push_back(mae::mae_encode(model, vol, plan).cls.to_vector());
    }
  }
  metrics::ProbeHead head;
  head.kind = c.head == "mlp" ? metrics::HeadKind::mlp : metrics::HeadKind::linear;
  head.task = c.task == "classification" ? metrics::Task::classification : metrics::Task::regression;
  std::vector<double> targets;
  if (head.task == metrics::Task::regression)
    targets = set.targets;
  else
    for (int l : set.labels) targets.push_back(l);
  if (c.permute) {
    Rng rng(Rng::mix(c.seed, 4));
    const auto order = rng.sample_without_replacement(targets.size(), targets.size());
    std::vector<double> shuffled(targets.size());
    for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = targets[order[i]];
    targets = std::move(shuffled);
  }
  const auto r = metrics::train_probe(features, targets, head, c.folds, c.seed);
  if (head.task == metrics::Task::regression)
    out << "rho " << metrics::format_number(r.rho) << " mse " << metrics::format_number(r.mse) << '\n';
  else
    out << "accuracy " << metrics::format_number(r.accuracy) << " auroc "
        << metrics::format_number(r.auroc) << '\n';
  if (!c.out.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < targets.size(); ++i)
      rows.push_back({std::to_string(i), metrics::format_number(targets[i]),
                      metrics::format_number(r.predictions[i]), std::to_string(r.fold_of[i])});
    metrics::write_csv(c.out, {"sample", "target", "prediction", "fold"}, rows);
  }
  return 0;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const auto h = nifti::read_header(path);
  out << "file        " << path << '\n'
      << "byte order  " << (h.big_endian ? "big-endian" : "little-endian") << '\n'
      << "sizeof_hdr  " << h.sizeof_hdr << '\n'
      << "dim        ";
  for (std::size_t i = 0; i <= h.rank() && i < 8; ++i) out << ' ' << h.dim[i];
  out << "\ndatatype    " << h.datatype << "\nbitpix      " << h.bitpix << "\npixdim     ";
  for (std::size_t i = 1; i <= h.rank() && i < 8; ++i) out << ' ' << h.pixdim[i];
  out << "\nvox_offset  " << h.vox_offset << "\nscl_slope   " << h.scl_slope << "\nscl_inter   "
      << h.scl_inter << "\nmagic       " << h.magic_string() << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked autoencoder pretraining for diffusion MRI with distance-based rotary attention",
               "drope"};
  app.require_subcommand(1);

  PhantomCmd phantom_cmd;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom (.nii, .bval, .bvec)");
  add_phantom_options(phantom, phantom_cmd.shape);
  phantom->add_option("--seed", phantom_cmd.seed)->capture_default_str();
  phantom->add_option("--out", phantom_cmd.out, "Output prefix")->capture_default_str();
  phantom->add_option("--spec", phantom_cmd.spec, "Phantom JSON spec instead of a random layout")
      ->check(CLI::ExistingFile);

  PretrainCmd pretrain_cmd;
  auto* pretrain = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  add_train_overrides(pretrain, pretrain_cmd.train);
  add_phantom_options(pretrain, pretrain_cmd.shape);
  pretrain->add_option("--data", pretrain_cmd.data, "Training dataset prefix (repeatable)");
  pretrain->add_option("--val-data", pretrain_cmd.val_data, "Validation dataset prefix (repeatable)");
  pretrain->add_option("--phantoms", pretrain_cmd.phantoms, "Synthetic training phantoms");
  pretrain->add_option("--val-phantoms", pretrain_cmd.val_phantoms, "Synthetic validation phantoms");
  pretrain->add_option("--checkpoint", pretrain_cmd.checkpoint)->capture_default_str();
  pretrain->add_option("--metrics", pretrain_cmd.metrics_csv, "Per-epoch CSV");
  pretrain->add_option("--dump-config", pretrain_cmd.dump_config, "Write the resolved JSON config");

  ReconstructCmd recon_cmd;
  auto* reconstruct = app.add_subcommand("reconstruct", "Mask a volume and reconstruct it");
  reconstruct->add_option("--checkpoint", recon_cmd.checkpoint)->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--input", recon_cmd.input, "Dataset prefix")->required();
  reconstruct->add_option("--out", recon_cmd.out, "Output prefix")->capture_default_str();
  reconstruct->add_option("--strategy", recon_cmd.strategy)
      ->check(CLI::IsMember({"spatial", "diffusion", "alternating"}));
  reconstruct->add_option("--seed", recon_cmd.seed, "Mask seed")->capture_default_str();
  reconstruct->add_option("--epoch", recon_cmd.epoch, "Epoch index for alternating masks")
      ->capture_default_str();

  EvalCmd eval_cmd;
  auto* eval = app.add_subcommand("eval", "PSNR, SSIM and tensor-metric errors as CSV");
  eval->add_option("--recon", eval_cmd.recon)->required()->check(CLI::ExistingFile);
  eval->add_option("--reference", eval_cmd.reference)->required()->check(CLI::ExistingFile);
  eval->add_option("--mask", eval_cmd.mask, "Voxel mask NIfTI for masked PSNR")->check(CLI::ExistingFile);
  eval->add_option("--bval", eval_cmd.bval, "Enables FA / MD errors")->check(CLI::ExistingFile);
  eval->add_option("--bvec", eval_cmd.bvec)->check(CLI::ExistingFile);
  eval->add_option("--out", eval_cmd.out, "CSV path (stdout when absent)");

  ProbeCmd probe_cmd;
  auto* probe = app.add_subcommand("probe", "Cross-validated probe on frozen CLS features");
  probe->add_option("--checkpoint", probe_cmd.checkpoint)->required()->check(CLI::ExistingFile);
  add_phantom_options(probe, probe_cmd.shape);
  probe->add_option("--phantoms", probe_cmd.phantoms)->capture_default_str();
  probe->add_option("--folds", probe_cmd.folds)->capture_default_str();
  probe->add_option("--seed", probe_cmd.seed)->capture_default_str();
  probe->add_option("--task", probe_cmd.task)->check(CLI::IsMember({"regression", "classification"}))
      ->capture_default_str();
  probe->add_option("--head", probe_cmd.head)->check(CLI::IsMember({"linear", "mlp"}))
      ->capture_default_str();
  probe->add_flag("--permute", probe_cmd.permute, "Shuffle targets (null control)");
  probe->add_option("--out", probe_cmd.out, "Per-sample predictions CSV");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Print a NIfTI header");
  inspect->add_option("file", inspect_path)->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*phantom) return cmd_phantom(phantom_cmd, out);
    if (*pretrain) return cmd_pretrain(pretrain_cmd, out);
    if (*reconstruct) return cmd_reconstruct(recon_cmd, out);
    if (*eval) return cmd_eval(eval_cmd, out);
    if (*probe) return cmd_probe(probe_cmd, out);
    if (*inspect) return cmd_inspect(inspect_path, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace drope::cli
