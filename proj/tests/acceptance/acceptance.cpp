// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. Prints one PASS / FAIL line per criterion and exits
// nonzero when any selected criterion fails. Arguments select criteria
// ("AC-1" ... "AC-9"); no argument runs all of them.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "drope/attention.hpp"
#include "drope/metrics.hpp"
#include "drope/nifti.hpp"
#include "drope/phantom.hpp"
#include "drope/posenc.hpp"
#include "drope/trainkit.hpp"
#include "gradcheck.hpp"

namespace {

using namespace drope;
using Vec = std::vector<double>;
using Clock = std::chrono::steady_clock;

// Tolerances and thresholds of the criteria.
constexpr double kScoreTol = 1e-12;         // AC-1 dense rotation oracle
constexpr double kOrdinalTol = 1e-9;        // AC-1 standard rotary oracle
constexpr double kAc1Seconds = 10.0;
constexpr double kAc2MarginDb = 3.0;        // over the mean-signal baseline
constexpr double kAc2Seconds = 30.0 * 60.0;
constexpr double kAc3MarginDb = 1.0;        // D-RoPE over the ablation
constexpr double kInvarianceTol = 1e-9;     // AC-4
constexpr int kInvarianceTrials = 100;
constexpr double kGradTol = 1e-5;           // AC-5
constexpr double kAc5Seconds = 5.0 * 60.0;
constexpr double kFaTol = 1e-6, kMdTol = 1e-9;  // AC-6
constexpr int kMaskTrials = 1000;           // AC-8
constexpr double kProbeRho = 0.99;          // AC-9
constexpr double kNullLo = 0.4, kNullHi = 0.6;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// AC-1: rotary scores against explicit rotation matrices.

double dense_score(const Vec& q, const Vec& k, const Vec& angles) {
  const std::size_t dh = q.size();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(dh, dh);
  for (std::size_t i = 0; i < dh / 2; ++i) {
    const auto a = static_cast<Eigen::Index>(2 * i);
    r(a, a) = std::cos(angles[i]);
    r(a, a + 1) = -std::sin(angles[i]);
    r(a + 1, a) = std::sin(angles[i]);
    r(a + 1, a + 1) = std::cos(angles[i]);
  }
  const Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(dh));
  const Eigen::Map<const Eigen::VectorXd> kv(k.data(), static_cast<Eigen::Index>(dh));
  return qv.dot(r * kv);
}

// Per-token rotary embedding: rotate q by its position and k by its own,
// then take a plain dot product.
double rope_reference(const Vec& q, std::size_t m, const Vec& k, std::size_t n) {
  const std::size_t dh = q.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < dh / 2; ++i) {
    const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
    const double am = -static_cast<double>(m) * w, an = -static_cast<double>(n) * w;
    const double q1 = std::cos(am) * q[2 * i] - std::sin(am) * q[2 * i + 1];
    const double q2 = std::sin(am) * q[2 * i] + std::cos(am) * q[2 * i + 1];
    const double k1 = std::cos(an) * k[2 * i] - std::sin(an) * k[2 * i + 1];
    const double k2 = std::sin(an) * k[2 * i] + std::cos(an) * k[2 * i + 1];
    acc += q1 * k1 + q2 * k2;
  }
  return acc;
}

Outcome ac1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t dh = 2 * (1 + rng.below(32));
    const auto spec = attn::RotationSpec::for_head_dim(dh);
    Vec q(dh), k(dh), angles(dh / 2);
    for (std::size_t i = 0; i < dh; ++i) q[i] = rng.normal(), k[i] = rng.normal();
    const double d = rng.uniform(0.0, 2.0 * std::acos(-1.0));
    for (std::size_t i = 0; i < dh / 2; ++i) angles[i] = d * spec.alpha[i];
    worst = std::max(worst, std::abs(attn::drope_score(q, k, d, spec) - dense_score(q, k, angles)));
  }
  double worst_ordinal = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t l = 1 + rng.below(12), dh = 2 * (1 + rng.below(16));
    const auto table = attn::ordinal_table_1d(l, dh);
    const auto q = check::random_tensor({1, l, dh}, rng, false);
    const auto k = check::random_tensor({1, l, dh}, rng, false);
    const auto s = nd::rotary_scores(q, k, table);
    for (std::size_t m = 0; m < l; ++m)
      for (std::size_t n = 0; n < l; ++n) {
        Vec qm(dh), kn(dh);
        for (std::size_t c = 0; c < dh; ++c) qm[c] = q.at({0, m, c}), kn[c] = k.at({0, n, c});
        worst_ordinal = std::max(worst_ordinal, std::abs(s.at({0, m, n}) - rope_reference(qm, m, kn, n)));
      }
  }
  const double secs = seconds_since(t0);
  return {worst <= kScoreTol && worst_ordinal <= kOrdinalTol && secs < kAc1Seconds,
          "max |score - dense| " + fmt("%.2e", worst) + " (tol 1e-12), ordinal " +
              fmt("%.2e", worst_ordinal) + " (tol 1e-9), " + fmt("%.2f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// AC-2 / AC-3: desk-scale pretraining.

train::TrainConfig desk_config() {
  train::TrainConfig c;
  c.epochs = 30;
  c.batch_size = 4;
  c.warmup_epochs = 2;
  c.lr_start = 1e-3;
  c.lr_final = 5e-5;
  c.wd_start = 0.01;
  c.wd_final = 0.05;
  c.seed = 0;
  c.d_model = 64;
  c.n_heads = 2;
  c.encoder_blocks = 4;  // two diffusion and two spatial blocks
  c.decoder_layers = 1;
  c.strategy = mae::Strategy::alternating;
  return c;
}

struct DeskData {
  std::vector<io::DWIVolumeSet> train, held_out;
};

const DeskData& desk_data() {
  static const DeskData data = [] {
    DeskData d;
    d.train = train::make_phantom_set(20, 1, {32, 32, 8}, {1000.0, 2000.0}, 15, 0.02).volumes;
    d.held_out = train::make_phantom_set(5, 2, {32, 32, 8}, {1000.0, 2000.0}, 15, 0.02).volumes;
    return d;
  }();
  return data;
}

constexpr std::size_t kEvalCrops = 4;
constexpr std::uint64_t kEvalSeed = 2024;

mae::MAEModel pretrain_logged(const train::TrainConfig& cfg, const char* tag) {
  train::PretrainOptions opts;
  opts.on_epoch = [tag](const train::EpochLog& l) {
    std::cerr << "  [" << tag << "] epoch " << l.epoch << " loss " << l.loss << " psnr_masked "
              << l.psnr_masked << '\n';
  };
  return train::run_pretrain(cfg, desk_data().train, desk_data().held_out, opts).model;
}

Outcome ac2() {
  const auto t0 = Clock::now();
  const auto cfg = desk_config();
  const auto model = pretrain_logged(cfg, "AC-2");
  const double secs = seconds_since(t0);
  const auto s = train::evaluate_masked(model, desk_data().held_out, cfg.strategy, cfg.crop(),
                                        kEvalCrops, kEvalSeed);
  const double margin = s.model_psnr() - s.baseline_psnr();
  return {margin >= kAc2MarginDb && secs < kAc2Seconds,
          "masked PSNR " + fmt("%.2f", s.model_psnr()) + " dB vs baseline " +
              fmt("%.2f", s.baseline_psnr()) + " dB, margin " + fmt("%.2f", margin) +
              " dB (need 3), " + fmt("%.0f", secs) + " s"};
}

Outcome ac3() {
  auto cfg = desk_config();
  cfg.strategy = mae::Strategy::diffusion;
  cfg.use_drope = true;
  const auto with = pretrain_logged(cfg, "AC-3 D-RoPE");
  cfg.use_drope = false;
  const auto without = pretrain_logged(cfg, "AC-3 ablation");
  const auto& held = desk_data().held_out;
  const auto a = train::evaluate_masked(with, held, mae::Strategy::diffusion, cfg.crop(), kEvalCrops, kEvalSeed);
  const auto b = train::evaluate_masked(without, held, mae::Strategy::diffusion, cfg.crop(), kEvalCrops, kEvalSeed);
  const double gap = a.model_psnr() - b.model_psnr();
  return {gap >= kAc3MarginDb,
          "diffusion-masked PSNR " + fmt("%.2f", a.model_psnr()) + " dB with D-RoPE vs " +
              fmt("%.2f", b.model_psnr()) + " dB without, gap " + fmt("%.2f", gap) +
              " dB (need 1); baseline " + fmt("%.2f", a.baseline_psnr()) + " dB"};
}

// ---------------------------------------------------------------------------
// AC-4: invariances.

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Matrix3d a;
  for (int i = 0; i < 9; ++i) a.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(a);
  Eigen::Matrix3d q = qr.householderQ();
  if (q.determinant() < 0) q.col(0) *= -1;
  return q;
}

std::vector<dspace::DiffusionPoint> random_points(std::size_t n, Rng& rng) {
  std::vector<dspace::DiffusionPoint> pts;
  for (std::size_t i = 0; i < n; ++i)
    pts.emplace_back(1000.0 * static_cast<double>(1 + rng.below(3)),
                     dspace::BVector(rng.normal(), rng.normal(), rng.normal()));
  return pts;
}

attn::TokenGrid random_grid(std::size_t slots_x, std::size_t nd, std::size_t d, Rng& rng) {
  attn::TokenGrid g;
  for (std::size_t x = 0; x < slots_x; ++x) g.spatial.push_back({x, 0, 0});
  g.diffusion = random_points(nd, rng);
  g.tokens = check::random_tensor({slots_x, nd, d}, rng, false);
  return g;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome ac4() {
  Rng rng(404);
  double antipodal = 0.0, rotation = 0.0, permutation = 0.0;
  for (int t = 0; t < kInvarianceTrials; ++t) {
    attn::AttentionConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.axis = attn::Axis::diffusion;
    cfg.relative_pe = attn::RelativePE::drope;
    const attn::AttentionLayer layer(cfg, rng);
    const auto grid = random_grid(2, 2 + rng.below(8), 8, rng);
    const auto base = layer.logits(grid.tokens, attn::table_for(cfg, grid));
    auto flipped = grid;
    for (auto& p : flipped.diffusion)
      if (rng.uniform() < 0.5) p.dir = p.dir.negated();
    const auto f = layer.logits(flipped.tokens, attn::table_for(cfg, flipped));
    antipodal = std::max(antipodal, max_abs_diff(f.data(), base.data()));

    const Eigen::Matrix3d r = random_rotation(rng);
    auto rotated = grid;
    for (auto& p : rotated.diffusion) {
      const Eigen::Vector3d v = r * Eigen::Vector3d(p.dir.x(), p.dir.y(), p.dir.z());
      p.dir = dspace::BVector(v.x(), v.y(), v.z());
    }
    const auto g = layer.logits(rotated.tokens, attn::table_for(cfg, rotated));
    rotation = std::max(rotation, max_abs_diff(g.data(), base.data()));
  }
  for (int t = 0; t < kInvarianceTrials; ++t) {
    attn::StackConfig sc;
    sc.d_model = 12;
    sc.n_heads = 2;
    sc.n_blocks = 2 + rng.below(3);
    sc.spatial_pe = attn::RelativePE::ordinal_rope;
    const attn::FactorizedEncoder enc(sc, rng);
    const std::size_t nd = 2 + rng.below(6), slots = 1 + rng.below(4);
    auto grid = random_grid(slots, nd, 12, rng);
    const auto base = attn::encoder_forward(grid, enc);
    const auto perm = rng.sample_without_replacement(nd, nd);
    auto pg = grid;
    pg.tokens = nd::permute(nd::gather_rows(nd::permute(grid.tokens, {1, 0, 2}), perm), {1, 0, 2});
    for (std::size_t i = 0; i < nd; ++i) pg.diffusion[i] = grid.diffusion[perm[i]];
    const auto out = attn::encoder_forward(pg, enc);
    for (std::size_t s = 0; s < slots; ++s)
      for (std::size_t i = 0; i < nd; ++i)
        for (std::size_t c = 0; c < 12; ++c)
          permutation = std::max(permutation, std::abs(out.grid.tokens.at({s, i, c}) -
                                                       base.grid.tokens.at({s, perm[i], c})));
    permutation = std::max(permutation, max_abs_diff(out.cls.data(), base.cls.data()));
  }
  const bool pass = antipodal <= kInvarianceTol && rotation <= kInvarianceTol && permutation <= kInvarianceTol;
  return {pass, std::to_string(kInvarianceTrials) + " trials each: antipodal logit change " +
                    fmt("%.2e", antipodal) + ", joint-rotation logit change " + fmt("%.2e", rotation) +
                    ", permutation equivariance error " + fmt("%.2e", permutation) + " (tol 1e-9)"};
}

// ---------------------------------------------------------------------------
// AC-5: finite-difference gradient checks.

Outcome ac5() {
  const auto t0 = Clock::now();
  Rng rng(505);
  using check::project;
  using check::random_tensor;
  std::vector<std::pair<std::string, double>> results;
  auto record = [&](const std::string& name, const std::function<nd::Tensor()>& f,
                    std::initializer_list<nd::Tensor> leaves) {
    double worst = 0.0;
    for (const auto& l : leaves) worst = std::max(worst, check::gradcheck_error(f, l));
    results.emplace_back(name, worst);
  };

  auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), row = random_tensor({4}, rng);
  record("add", [&] { return project(nd::add(a, b)); }, {a, b});
  record("add_broadcast", [&] { return project(nd::add(a, row)); }, {a, row});
  record("sub", [&] { return project(nd::sub(a, row)); }, {a, row});
  record("mul", [&] { return project(nd::mul(a, b)); }, {a, b});
  record("scale", [&] { return project(nd::scale(a, -1.7)); }, {a});
  record("add_scalar", [&] { return project(nd::add_scalar(a, 0.3)); }, {a});
  record("square", [&] { return project(nd::square(a)); }, {a});
  record("gelu", [&] { return project(nd::gelu(a)); }, {a});
  record("sum", [&] { return nd::sum(nd::mul(a, b)); }, {a});
  record("mean", [&] { return nd::mean(nd::square(a)); }, {a});

  auto t3 = random_tensor({2, 3, 4}, rng);
  record("reshape", [&] { return project(nd::reshape(t3, {6, 4})); }, {t3});
  record("transpose", [&] { return project(nd::transpose(t3)); }, {t3});
  record("permute", [&] { return project(nd::permute(t3, {2, 0, 1})); }, {t3});
  auto c2 = random_tensor({2, 2, 4}, rng);
  record("concat", [&] { return project(nd::concat({t3, c2}, 1)); }, {t3, c2});
  record("slice", [&] { return project(nd::slice(t3, 2, 1, 2)); }, {t3});
  const std::vector<std::size_t> rows{1, 0, 1};
  record("gather_rows", [&] { return project(nd::gather_rows(t3, rows)); }, {t3});
  const std::vector<std::size_t> flat{0, 5, 5, 23, 7};
  record("gather_flat", [&] { return project(nd::gather_flat(t3, flat, {5})); }, {t3});
  auto e1 = random_tensor({2, 1, 4}, rng);
  record("expand", [&] { return project(nd::expand(e1, {2, 3, 4})); }, {e1});

  auto ma = random_tensor({2, 3, 4}, rng), mb = random_tensor({2, 4, 5}, rng), m2 = random_tensor({4, 5}, rng);
  record("matmul", [&] { return project(nd::matmul(ma, mb)); }, {ma, mb});
  record("matmul_shared", [&] { return project(nd::matmul(ma, m2)); }, {ma, m2});
  auto w = random_tensor({5, 4}, rng), bias = random_tensor({5}, rng);
  record("linear", [&] { return project(nd::linear(ma, w, bias)); }, {ma, w, bias});
  auto table = random_tensor({6, 3}, rng);
  const std::vector<std::size_t> ids{2, 5, 2, 0};
  record("embedding", [&] { return project(nd::embedding(table, ids)); }, {table});
  record("softmax", [&] { return project(nd::softmax(t3)); }, {t3});
  auto gamma = random_tensor({4}, rng), beta = random_tensor({4}, rng);
  record("layer_norm", [&] { return project(nd::layer_norm(t3, gamma, beta)); }, {t3, gamma, beta});
  auto target = random_tensor({2, 3, 4}, rng, false);
  std::vector<char> mask(24);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = static_cast<char>(i % 3 != 0);
  record("masked_mse", [&] { return nd::masked_mse(t3, target, mask); }, {t3});
  auto cx = random_tensor({2, 2, 3, 3, 2}, rng), cw = random_tensor({3, 2, 3, 3, 3}, rng), cb = random_tensor({3}, rng);
  record("conv3d", [&] { return project(nd::conv3d(cx, cw, cb)); }, {cx, cw, cb});

  auto rq = random_tensor({2, 4, 6}, rng), rk = random_tensor({2, 4, 6}, rng);
  auto dm = dspace::pairwise_distance_matrix(random_points(4, rng), {});
  const auto rt = attn::distance_table(dm, 6);
  record("rotary_scores", [&] { return project(nd::rotary_scores(rq, rk, rt)); }, {rq, rk});
  auto pw = random_tensor({6, 3}, rng), pb = random_tensor({6}, rng);
  const dspace::SphericalCoord coord{0.6, 1.1, -0.4};
  record("diffusion_pe", [&] { return project(posenc::diffusion_pe(coord, pw, pb)); }, {pw, pb});

  // End-to-end masked-autoencoder loss, every parameter, both strategies.
  mae::MAEConfig cfg;
  cfg.d_model = 12;
  cfg.n_heads = 2;
  cfg.encoder_blocks = 2;
  cfg.decoder_layers = 1;
  cfg.patch = {2, 2, 2};
  cfg.conv_channels = 2;
  const mae::MAEModel model(cfg, 7);
  const auto vol = phantom::generate(phantom::random_spec(9, {4, 4, 2}, {1000.0, 2000.0}, 2, 0.02)).volume;
  for (auto strategy : {mae::Strategy::spatial, mae::Strategy::diffusion}) {
    const auto plan = mae::make_mask(4, vol.volumes(), strategy, 0, 3);
    auto loss = [&] { return mae::mae_loss(mae::mae_forward(model, vol, plan), vol.signal, plan, cfg.patch, 0.4); };
    double worst = 0.0;
    for (const auto& p : model.parameters()) worst = std::max(worst, check::gradcheck_error(loss, p.tensor));
    results.emplace_back(std::string("mae_loss/") + mae::to_string(strategy), worst);
  }

  const double secs = seconds_since(t0);
  auto it = std::max_element(results.begin(), results.end(),
                             [](const auto& x, const auto& y) { return x.second < y.second; });
  return {it->second < kGradTol && secs < kAc5Seconds,
          std::to_string(results.size()) + " checks, worst relative error " + fmt("%.2e", it->second) +
              " (" + it->first + ", tol 1e-5), " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// AC-6: tensor fit on a noiseless phantom.

Outcome ac6() {
  phantom::PhantomSpec spec;
  spec.extents = {8, 8, 4};
  spec.noise_sigma = 0.0;
  spec.regions.push_back({"bundle", {0.5, 0.5, 0.5}, {2.0, 2.0, 2.0},
                          phantom::diagonal(1.7e-3, 0.2e-3, 0.2e-3), 1.0});
  const auto ph = phantom::generate(spec);
  const auto fit = metrics::fit_dti(ph.volume);
  // Closed form for eigenvalues (1.7, 0.2, 0.2) x 1e-3.
  const double fa_expected = 1.5 / std::sqrt(2.97), md_expected = 0.7e-3;
  double fa_err = 0.0, md_err = 0.0;
  for (std::size_t i = 0; i < fit.fa.size(); ++i) {
    fa_err = std::max(fa_err, std::abs(fit.fa[i] - fa_expected));
    md_err = std::max(md_err, std::abs(fit.md[i] - md_expected));
  }
  return {fa_err <= kFaTol && md_err <= kMdTol && !fit.fa.empty(),
          std::to_string(fit.fa.size()) + " voxels: FA " + fmt("%.10f", fit.fa.front()) + " vs " +
              fmt("%.10f", fa_expected) + " (max err " + fmt("%.1e", fa_err) + "), MD max err " +
              fmt("%.1e", md_err) + " mm^2/s"};
}

// ---------------------------------------------------------------------------
// AC-7: IO exactness.

Outcome ac7() {
  const std::filesystem::path fixtures = DROPE_FIXTURE_DIR;
  std::vector<std::string> failures;

  Rng rng(707);
  std::vector<double> values(5 * 4 * 3 * 2);
  for (auto& v : values) v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
  values[0] = -0.0;
  values[1] = 4.9e-324;
  values[2] = std::numeric_limits<double>::max();
  const auto data = nd::Tensor::from({5, 4, 3, 2}, values);
  const auto path = std::filesystem::temp_directory_path() / "drope_acceptance_roundtrip.nii";
  nifti::write(data, {1.5, 2.0, 2.5}, path);
  const auto back = nifti::read(path);
  std::filesystem::remove(path);
  if (back.data.shape() != data.shape() ||
      std::memcmp(back.data.data().data(), values.data(), values.size() * sizeof(double)) != 0)
    failures.push_back("round trip not bit-exact");

  for (const char* name : {"float32_le.nii", "float32_be.nii"}) {
    const auto img = nifti::read(fixtures / name);
    bool ok = img.data.shape() == nd::Shape{16, 16, 8} && img.spacing()[2] == 2.5;
    for (std::size_t x = 0; ok && x < 16; ++x)
      for (std::size_t y = 0; ok && y < 16; ++y)
        for (std::size_t z = 0; ok && z < 8; ++z)
          ok = img.data.at({x, y, z}) == 0.25 * double(x + 16 * y + 256 * z) - 3.0;
    if (ok != true || img.header.big_endian != (std::string(name) == "float32_be.nii"))
      failures.push_back(std::string(name) + " mismatch");
  }

  const auto table = io::read_bvals_bvecs(fixtures / "small.bval", fixtures / "small.bvec");
  const bool table_ok = table.size() == 3 && table[0].is_reference() && table[1].b == 1000.0 &&
                        table[1].dir.x() == 1.0 && table[2].b == 1000.0 && table[2].dir.y() == 1.0;
  if (!table_ok) failures.push_back("gradient table fixture mismatch");

  std::string detail = "f64 round trip bit-exact, LE/BE fixtures and bval/bvec fixture parsed";
  if (!failures.empty()) {
    detail.clear();
    for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  }
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// AC-8: mask and loss contracts.

Outcome ac8() {
  Rng rng(808);
  int bad_counts = 0;
  for (int t = 0; t < kMaskTrials; ++t) {
    const std::size_t s = 3 + rng.below(300), nd = 2 + rng.below(90);
    const std::uint64_t seed = rng.next_u64();
    const auto sp = mae::make_mask(s, nd, mae::Strategy::spatial, 0, seed);
    const auto df = mae::make_mask(s, nd, mae::Strategy::diffusion, 0, seed);
    const std::size_t ms = static_cast<std::size_t>(std::lround(0.75 * static_cast<double>(s)));
    const std::size_t md = static_cast<std::size_t>(std::lround(0.5 * static_cast<double>(nd)));
    if (sp.masked_count() != ms * nd || df.masked_count() != md * s) ++bad_counts;
    // Spatial masks share one pattern across volumes; diffusion masks whole volumes.
    for (std::size_t i = 0; i < s && bad_counts == 0; ++i)
      for (std::size_t n = 1; n < nd; ++n)
        if (sp.masked(i, n) != sp.masked(i, 0) || df.masked(i, n) != df.masked(0, n)) {
          ++bad_counts;
          break;
        }
  }
  const bool tau_ends = mae::tau(0, 300) == 0.05 && mae::tau(299, 300) == 0.95;
  double tau_lin = 0.0;
  for (std::size_t e = 0; e < 300; ++e)
    tau_lin = std::max(tau_lin, std::abs(mae::tau(e, 300) - (0.05 + 0.9 * static_cast<double>(e) / 299.0)));

  // Hand-set components: unmasked voxels off by sqrt(2), masked by 2.
  const std::size_t n = 2;
  const auto plan = mae::make_mask(8, n, mae::Strategy::diffusion, 0, 1);
  const io::PatchSize patch{1, 1, 1};
  const auto vm = mae::voxel_mask(plan, {2, 2, 2}, patch, n);
  std::vector<double> recon(vm.size());
  for (std::size_t i = 0; i < vm.size(); ++i) recon[i] = vm[i] ? 2.0 : std::sqrt(2.0);
  const auto parts = mae::mae_loss_parts(nd::Tensor::from({2, 2, 2, n}, recon),
                                         nd::Tensor::zeros({2, 2, 2, n}), plan, patch, 0.5);
  const bool blend_ok = mae::blend(2.0, 4.0, 0.5) == 3.0 && std::abs(parts.unmasked.item() - 2.0) < 1e-15 &&
                        std::abs(parts.masked.item() - 4.0) < 1e-15 && std::abs(parts.total.item() - 3.0) < 1e-15;

  return {bad_counts == 0 && tau_ends && tau_lin < 1e-15 && blend_ok,
          std::to_string(kMaskTrials) + " random (S, Nd, seed): " + std::to_string(bad_counts) +
              " count violations; tau(0)=" + fmt("%.2f", mae::tau(0, 300)) + " tau(E)=" +
              fmt("%.2f", mae::tau(299, 300)) + " linearity err " + fmt("%.1e", tau_lin) +
              "; blend(2, 4, 0.5) = " + fmt("%.15g", parts.total.item())};
}

// ---------------------------------------------------------------------------
// AC-9: probes on frozen CLS features.

Outcome ac9() {
  mae::MAEConfig cfg;
  cfg.d_model = 64;
  cfg.n_heads = 2;
  cfg.encoder_blocks = 4;
  cfg.decoder_layers = 1;
  const mae::MAEModel model(cfg, 99);
  const std::size_t count = 160;
  const auto set = train::make_phantom_set(count, 909, {16, 16, 8}, {1000.0, 2000.0}, 8, 0.02);
  std::vector<std::vector<double>> features;
  {
    nd::NoGradGuard guard;
    for (const auto& v : set.volumes) {
      const auto g = io::patch_grid(v.nx(), v.ny(), v.nz(), cfg.patch);
      const auto plan = mae::MaskPlan::all_visible(g[0] * g[1] * g[2], v.volumes());
      features.push_back(mae::mae_encode(model, v, plan).cls.to_vector());
    }
  }
  // Targets that a linear read-out of the features realizes exactly.
  Rng rng(910);
  Vec weights(cfg.d_model);
  for (auto& w : weights) w = rng.normal();
  Vec targets(count);
  for (std::size_t i = 0; i < count; ++i) {
    double acc = 0.3;
    for (std::size_t c = 0; c < cfg.d_model; ++c) acc += weights[c] * features[i][c];
    targets[i] = acc;
  }
  const metrics::ProbeHead linear{};
  const auto fit = metrics::train_probe(features, targets, linear, 5, 11);

  // Null control: labels shuffled across samples.
  metrics::ProbeHead clf;
  clf.task = metrics::Task::classification;
  clf.l2 = 1e-2;
  Vec labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<double>(i % 2);
  const int perms = 20;
  double mean_auc = 0.0, lo = 1.0, hi = 0.0;
  for (int p = 0; p < perms; ++p) {
    const auto order = rng.sample_without_replacement(count, count);
    Vec shuffled(count);
    for (std::size_t i = 0; i < count; ++i) shuffled[i] = labels[order[i]];
    const double auc = metrics::train_probe(features, shuffled, clf, 5, 100 + p).auroc;
    mean_auc += auc / perms;
    lo = std::min(lo, auc);
    hi = std::max(hi, auc);
  }
  return {fit.rho >= kProbeRho && mean_auc >= kNullLo && mean_auc <= kNullHi,
          "5-fold rho " + fmt("%.6f", fit.rho) + " (need 0.99); permuted-label AUROC mean " +
              fmt("%.3f", mean_auc) + " over " + std::to_string(perms) + " shuffles (range " +
              fmt("%.3f", lo) + ".." + fmt("%.3f", hi) + ", need mean in [0.4, 0.6])"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<Outcome()>> criteria{
      {"AC-1", ac1}, {"AC-2", ac2}, {"AC-3", ac3}, {"AC-4", ac4}, {"AC-5", ac5},
      {"AC-6", ac6}, {"AC-7", ac7}, {"AC-8", ac8}, {"AC-9", ac9}};
  std::vector<std::string> selected(argv + 1, argv + argc);
  if (selected.empty())
    for (const auto& [name, _] : criteria) selected.push_back(name);
  bool all = true;
  for (const auto& name : selected) {
    const auto it = criteria.find(name);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << name << '\n';
      return 2;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
