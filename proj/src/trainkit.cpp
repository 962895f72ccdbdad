// SPDX-License-Identifier: Apache-2.0
#include "drope/trainkit.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "drope/metrics.hpp"
#include "drope/phantom.hpp"

namespace drope::train {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("config: epochs must be > 0");
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be > 0");
  if (warmup_epochs >= epochs && warmup_epochs != 0)
    throw std::invalid_argument("config: warmup_epochs must be below epochs");
  if (!(lr_start >= 0.0) || !(lr_final >= 0.0)) throw std::invalid_argument("config: negative lr");
  if (!(wd_start >= 0.0) || !(wd_final >= 0.0)) throw std::invalid_argument("config: negative wd");
  if (!(tau_start >= 0.0 && tau_final <= 1.0)) throw std::invalid_argument("config: tau outside [0, 1]");
  if (crop_slices == 0 || crop_directions == 0) throw std::invalid_argument("config: empty crop");
  if (eval_crops == 0) throw std::invalid_argument("config: eval_crops must be > 0");
  model_config().validate();
}

mae::MAEConfig TrainConfig::model_config() const {
  mae::MAEConfig m;
  m.d_model = d_model;
  m.n_heads = n_heads;
  m.encoder_blocks = encoder_blocks;
  m.decoder_layers = decoder_layers;
  m.patch = patch;
  m.conv_channels = conv_channels;
  m.diffusion_pe = use_drope ? attn::RelativePE::drope : attn::RelativePE::none;
  m.spatial_pe = spatial_pe;
  m.distance.gamma = gamma;
  m.distance.b_scale = b_scale;
  m.b_norm = b_norm;
  return m;
}

namespace {

json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"warmup_epochs", c.warmup_epochs},
          {"lr_start", c.lr_start},
          {"lr_final", c.lr_final},
          {"wd_start", c.wd_start},
          {"wd_final", c.wd_final},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"seed", c.seed},
          {"strategy", mae::to_string(c.strategy)},
          {"patch", {c.patch.px, c.patch.py, c.patch.pz}},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"encoder_blocks", c.encoder_blocks},
          {"decoder_layers", c.decoder_layers},
          {"conv_channels", c.conv_channels},
          {"use_drope", c.use_drope},
          {"spatial_pe", attn::to_string(c.spatial_pe)},
          {"gamma", c.gamma},
          {"b_scale", c.b_scale},
          {"b_norm", c.b_norm},
          {"tau_start", c.tau_start},
          {"tau_final", c.tau_final},
          {"crop_slices", c.crop_slices},
          {"crop_directions", c.crop_directions},
          {"eval_crops", c.eval_crops}};
}

}  // namespace

std::string to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  TrainConfig c;
  const json known = config_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("warmup_epochs", c.warmup_epochs);
  get("lr_start", c.lr_start);
  get("lr_final", c.lr_final);
  get("wd_start", c.wd_start);
  get("wd_final", c.wd_final);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("eps", c.eps);
  get("seed", c.seed);
  if (j.contains("strategy")) c.strategy = mae::strategy_from_string(j.at("strategy").get<std::string>());
  if (j.contains("patch")) {
    const auto p = j.at("patch").get<std::vector<std::size_t>>();
    if (p.size() != 3) throw std::invalid_argument("config: patch needs 3 extents");
    c.patch = {p[0], p[1], p[2]};
  }
  get("d_model", c.d_model);
  get("n_heads", c.n_heads);
  get("encoder_blocks", c.encoder_blocks);
  get("decoder_layers", c.decoder_layers);
  get("conv_channels", c.conv_channels);
  get("use_drope", c.use_drope);
  if (j.contains("spatial_pe"))
    c.spatial_pe = attn::relative_pe_from_string(j.at("spatial_pe").get<std::string>());
  get("gamma", c.gamma);
  get("b_scale", c.b_scale);
  get("b_norm", c.b_norm);
  get("tau_start", c.tau_start);
  get("tau_final", c.tau_final);
  get("crop_slices", c.crop_slices);
  get("crop_directions", c.crop_directions);
  get("eval_crops", c.eval_crops);
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config_json(cfg).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoint records

namespace {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T get_le(const unsigned char* p) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f64: return 8;
    case DType::u64: return 8;
    case DType::u8: return 1;
  }
  throw CheckpointError("unknown dtype");
}

constexpr char kMagic[4] = {'D', 'R', 'P', 'K'};

}  // namespace

std::vector<double> Record::as_f64() const {
  if (dtype != DType::f64) throw CheckpointError("record '" + name + "' is not f64");
  std::vector<double> v(payload.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = get_le<double>(payload.data() + 8 * i);
  return v;
}

std::uint64_t Record::as_u64() const {
  if (dtype != DType::u64 || payload.size() != 8)
    throw CheckpointError("record '" + name + "' is not a u64 scalar");
  return get_le<std::uint64_t>(payload.data());
}

std::string Record::as_text() const {
  if (dtype != DType::u8) throw CheckpointError("record '" + name + "' is not text");
  return std::string(payload.begin(), payload.end());
}

Record Record::f64(std::string name, std::vector<std::uint64_t> shape, std::span<const double> v) {
  Record r{std::move(name), DType::f64, std::move(shape), {}};
  r.payload.reserve(v.size() * 8);
  for (double x : v) put_le(r.payload, x);
  return r;
}

Record Record::u64(std::string name, std::uint64_t v) {
  Record r{std::move(name), DType::u64, {1}, {}};
  put_le(r.payload, v);
  return r;
}

Record Record::text(std::string name, const std::string& s) {
  return Record{std::move(name), DType::u8, {s.size()}, {s.begin(), s.end()}};
}

const Record& Checkpoint::at(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return r;
  throw CheckpointError("checkpoint has no record '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return true;
  return false;
}

void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_le(out, ck.version);
  for (const auto& r : ck.records) {
    put_le(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<unsigned char>(r.dtype));
    put_le(out, static_cast<std::uint32_t>(r.shape.size()));
    std::uint64_t count = 1;
    for (auto e : r.shape) {
      put_le(out, e);
      count *= e;
    }
    if (count * dtype_size(r.dtype) != r.payload.size())
      throw CheckpointError("record '" + r.name + "' payload does not match its shape");
    out.insert(out.end(), r.payload.begin(), r.payload.end());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot create " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), {});
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw CheckpointError(path.string() + " is not a DRPK checkpoint");
  Checkpoint ck;
  ck.version = get_le<std::uint32_t>(buf.data() + 4);
  if (ck.version != 1) throw CheckpointError("unsupported checkpoint version " + std::to_string(ck.version));
  std::size_t pos = 8;
  auto need = [&](std::size_t n) {
    if (buf.size() - pos < n) throw CheckpointError(path.string() + ": truncated record");
  };
  while (pos < buf.size()) {
    Record r;
    need(4);
    const auto len = get_le<std::uint32_t>(buf.data() + pos);
    pos += 4;
    need(len + 5);
    r.name.assign(reinterpret_cast<const char*>(buf.data() + pos), len);
    pos += len;
    r.dtype = static_cast<DType>(buf[pos++]);
    const std::size_t width = dtype_size(r.dtype);
    const auto rank = get_le<std::uint32_t>(buf.data() + pos);
    pos += 4;
    need(8ull * rank);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.shape.push_back(get_le<std::uint64_t>(buf.data() + pos));
      count *= r.shape.back();
      pos += 8;
    }
    need(count * width);
    r.payload.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                     buf.begin() + static_cast<std::ptrdiff_t>(pos + count * width));
    pos += count * width;
    ck.records.push_back(std::move(r));
  }
  return ck;
}

Checkpoint make_checkpoint(const mae::MAEModel& model, const optim::AdamW* opt,
                           const TrainConfig& cfg, std::uint64_t epoch) {
  Checkpoint ck;
  const auto params = model.parameters();
  auto shape_of = [](const nd::Tensor& t) {
    return std::vector<std::uint64_t>(t.shape().begin(), t.shape().end());
  };
  for (const auto& p : params) ck.records.push_back(Record::f64("param/" + p.name, shape_of(p.tensor), p.tensor.data()));
  if (opt) {
    if (opt->params().size() != params.size())
      throw CheckpointError("optimizer does not belong to this model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck.records.push_back(Record::f64("opt.m/" + params[i].name, shape_of(params[i].tensor), opt->first_moments()[i]));
      ck.records.push_back(Record::f64("opt.v/" + params[i].name, shape_of(params[i].tensor), opt->second_moments()[i]));
    }
    ck.records.push_back(Record::u64("meta.step", opt->steps()));
  }
  ck.records.push_back(Record::u64("meta.epoch", epoch));
  ck.records.push_back(Record::u64("meta.config_hash", config_hash(cfg)));
  ck.records.push_back(Record::text("meta.config", to_json(cfg)));
  return ck;
}

void restore(const Checkpoint& ck, mae::MAEModel& model, optim::AdamW* opt) {
  const auto params = model.parameters();
  auto copy = [](const Record& r, const nd::Tensor& t, std::span<double> dst) {
    if (std::vector<std::uint64_t>(t.shape().begin(), t.shape().end()) != r.shape)
      throw CheckpointError("record '" + r.name + "' has the wrong shape");
    const auto v = r.as_f64();
    std::copy(v.begin(), v.end(), dst.begin());
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto t = params[i].tensor;
    copy(ck.at("param/" + params[i].name), t, t.data());
    if (opt) {
      copy(ck.at("opt.m/" + params[i].name), t, opt->first_moments()[i]);
      copy(ck.at("opt.v/" + params[i].name), t, opt->second_moments()[i]);
    }
  }
  if (opt) opt->set_steps(ck.at("meta.step").as_u64());
}

mae::MAEModel model_from_checkpoint(const Checkpoint& ck, TrainConfig* cfg_out) {
  const auto cfg = config_from_json(ck.at("meta.config").as_text());
  if (config_hash(cfg) != ck.at("meta.config_hash").as_u64())
    throw CheckpointError("checkpoint configuration hash mismatch");
  mae::MAEModel model(cfg.model_config(), 0);
  restore(ck, model);
  if (cfg_out) *cfg_out = cfg;
  return model;
}

// ---------------------------------------------------------------------------
// Evaluation

double MaskedScore::model_psnr() const { return metrics::psnr_from_mse(model_mse); }
double MaskedScore::baseline_psnr() const { return metrics::psnr_from_mse(baseline_mse); }

MaskedScore evaluate_masked(const mae::MAEModel& model, const std::vector<io::DWIVolumeSet>& vols,
                            mae::Strategy strategy, const mae::CropSpec& crop, std::size_t crops,
                            std::uint64_t seed) {
  nd::NoGradGuard guard;
  const auto& patch = model.config().patch;
  std::vector<mae::Strategy> strategies = {strategy};
  if (strategy == mae::Strategy::alternating)
    strategies = {mae::Strategy::spatial, mae::Strategy::diffusion};
  double se_model = 0.0, se_base = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < vols.size(); ++v)
    for (std::size_t c = 0; c < crops; ++c) {
      Rng rng(Rng::mix(seed, v * 1000 + c));
      const auto x = mae::sample_training_crop(vols[v], rng, crop);
      const std::size_t nd_ = x.volumes();
      const auto g = io::patch_grid(x.nx(), x.ny(), x.nz(), patch);
      for (auto s : strategies) {
        const auto plan = mae::make_mask(g[0] * g[1] * g[2], nd_, s, 0, rng.next_u64());
        const auto vm = mae::voxel_mask(plan, {x.nx(), x.ny(), x.nz()}, patch, nd_);
        const auto recon = mae::mae_forward(model, x, plan).data();
        const auto truth = x.signal.data();
        std::vector<double> sum(nd_, 0.0), cnt(nd_, 0.0);
        double all_sum = 0.0, all_cnt = 0.0;
        for (std::size_t i = 0; i < vm.size(); ++i)
          if (!vm[i]) {
            sum[i % nd_] += truth[i];
            cnt[i % nd_] += 1.0;
            all_sum += truth[i];
            all_cnt += 1.0;
          }
        for (std::size_t i = 0; i < vm.size(); ++i) {
          if (!vm[i]) continue;
          const std::size_t n = i % nd_;
          const double base = cnt[n] > 0 ? sum[n] / cnt[n] : all_sum / all_cnt;
          se_model += (recon[i] - truth[i]) * (recon[i] - truth[i]);
          se_base += (base - truth[i]) * (base - truth[i]);
          ++count;
        }
      }
    }
  if (count == 0) throw std::invalid_argument("evaluate_masked: nothing to evaluate");
  MaskedScore s;
  s.voxels = count;
  s.model_mse = se_model / static_cast<double>(count);
  s.baseline_mse = se_base / static_cast<double>(count);
  return s;
}

// ---------------------------------------------------------------------------
// Training loop

PretrainResult run_pretrain(const TrainConfig& cfg, const std::vector<io::DWIVolumeSet>& train,
                            const std::vector<io::DWIVolumeSet>& validation,
                            const PretrainOptions& opts) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("run_pretrain: empty training set");
  PretrainResult result{mae::MAEModel(cfg.model_config(), Rng::mix(cfg.seed, 11)), {}};
  auto& model = result.model;
  optim::AdamW opt(model.parameters(), {cfg.beta1, cfg.beta2, cfg.eps});
  Rng data_rng(Rng::mix(cfg.seed, 12));
  const double last = static_cast<double>(cfg.epochs - 1);

  auto diverged = [&](std::size_t epoch, const std::string& why) {
    if (!opts.checkpoint.empty()) write_checkpoint(make_checkpoint(model, &opt, cfg, epoch), opts.checkpoint);
    throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": " + why);
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    const double t = static_cast<double>(epoch);
    log.lr = optim::cosine_schedule(t, last, static_cast<double>(cfg.warmup_epochs), cfg.lr_start, cfg.lr_final);
    log.wd = optim::cosine_schedule(t, last, 0.0, cfg.wd_start, cfg.wd_final);
    log.tau = mae::tau(epoch, cfg.epochs, cfg.tau_start, cfg.tau_final);

    const auto order = data_rng.sample_without_replacement(train.size(), train.size());
    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      opt.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const auto x = mae::sample_training_crop(train[order[k]], data_rng, cfg.crop());
        const auto g = io::patch_grid(x.nx(), x.ny(), x.nz(), cfg.patch);
        const auto plan = mae::make_mask(g[0] * g[1] * g[2], x.volumes(), cfg.strategy, epoch,
                                         data_rng.next_u64());
        const auto loss = mae::mae_loss(mae::mae_forward(model, x, plan), x.signal, plan, cfg.patch, log.tau);
        if (!std::isfinite(loss.item())) diverged(epoch, "non-finite loss");
        nd::scale(loss, inv).backward();
        loss_sum += loss.item();
      }
      try {
        opt.step(log.lr, log.wd);
      } catch (const optim::NonFiniteGradient& e) {
        diverged(epoch, e.what());
      }
    }
    log.loss = loss_sum / static_cast<double>(train.size());
    log.psnr_masked = std::numeric_limits<double>::quiet_NaN();
    if (!validation.empty())
      log.psnr_masked = evaluate_masked(model, validation, cfg.strategy, cfg.crop(), cfg.eval_crops,
                                        Rng::mix(cfg.seed, 13))
                            .model_psnr();
    result.history.push_back(log);
    if (opts.on_epoch) opts.on_epoch(log);
  }
  opt.zero_grad();
  if (!opts.checkpoint.empty())
    write_checkpoint(make_checkpoint(model, &opt, cfg, cfg.epochs), opts.checkpoint);
  if (!opts.metrics_csv.empty()) write_history_csv(result.history, opts.metrics_csv);
  return result;
}

void write_history_csv(const std::vector<EpochLog>& history, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& h : history)
    rows.push_back({std::to_string(h.epoch), metrics::format_number(h.loss),
                    metrics::format_number(h.psnr_masked), metrics::format_number(h.lr),
                    metrics::format_number(h.wd), metrics::format_number(h.tau)});
  metrics::write_csv(path, {"epoch", "loss", "psnr_masked", "lr", "wd", "tau"}, rows);
}

PhantomSet make_phantom_set(std::size_t count, std::uint64_t seed,
                            std::array<std::size_t, 3> extents, std::vector<double> shells,
                            std::size_t dirs_per_shell, double noise_sigma) {
  PhantomSet set;
  for (std::size_t i = 0; i < count; ++i) {
    const auto spec = phantom::random_spec(Rng::mix(seed, i), extents, shells, dirs_per_shell, noise_sigma);
    set.volumes.push_back(phantom::generate(spec).volume);
    set.targets.push_back(spec.target);
    set.labels.push_back(spec.label);
  }
  return set;
}

}  // namespace drope::train
