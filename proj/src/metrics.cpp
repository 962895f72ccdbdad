// SPDX-License-Identifier: Apache-2.0
#include "drope/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "drope/optim.hpp"
#include "drope/rng.hpp"

namespace drope::metrics {

double psnr_from_mse(double mse, double data_range) {
  if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be > 0");
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(data_range * data_range / mse);
}

double psnr(const nd::Tensor& x, const nd::Tensor& y, double data_range) {
  if (x.shape() != y.shape())
    throw nd::ShapeError("psnr: " + nd::to_string(x.shape()) + " vs " + nd::to_string(y.shape()));
  const auto a = x.data(), b = y.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return psnr_from_mse(acc / static_cast<double>(a.size()), data_range);
}

double psnr(const nd::Tensor& x, const nd::Tensor& y, std::span<const char> mask,
            double data_range) {
  if (x.shape() != y.shape())
    throw nd::ShapeError("psnr: " + nd::to_string(x.shape()) + " vs " + nd::to_string(y.shape()));
  if (mask.size() != x.numel()) throw nd::ShapeError("psnr: mask length mismatch");
  const auto a = x.data(), b = y.data();
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (mask[i]) {
      acc += (a[i] - b[i]) * (a[i] - b[i]);
      ++n;
    }
  if (n == 0) throw std::invalid_argument("psnr: empty mask");
  return psnr_from_mse(acc / static_cast<double>(n), data_range);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double c = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double t = static_cast<double>(i) - c;
    w[i] = std::exp(-0.5 * t * t / (sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid-region separable filter of an [nx, ny] image.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t nx, std::size_t ny,
                                 const std::vector<double>& w) {
  const std::size_t k = w.size(), ox = nx - k + 1, oy = ny - k + 1;
  std::vector<double> rows(ox * ny, 0.0), out(ox * oy, 0.0);
  for (std::size_t i = 0; i < ox; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += w[t] * img[(i + t) * ny + j];
      rows[i * ny + j] = acc;
    }
  for (std::size_t i = 0; i < ox; ++i)
    for (std::size_t j = 0; j < oy; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += w[t] * rows[i * ny + j + t];
      out[i * oy + j] = acc;
    }
  return out;
}

}  // namespace

double ssim_slice(std::span<const double> x, std::span<const double> y, std::size_t nx,
                  std::size_t ny, const SsimParams& p) {
  if (x.size() != nx * ny || y.size() != nx * ny) throw nd::ShapeError("ssim: slice size mismatch");
  if (p.window == 0 || p.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
  if (nx < p.window || ny < p.window)
    throw std::invalid_argument("ssim: slice " + std::to_string(nx) + "x" + std::to_string(ny) +
                                " is smaller than the " + std::to_string(p.window) + "x" +
                                std::to_string(p.window) + " window");
  const auto w = gaussian_window(p.window, p.sigma);
  const std::size_t n = nx * ny;
  std::vector<double> xa(x.begin(), x.end()), ya(y.begin(), y.end()), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = xa[i] * xa[i];
    yy[i] = ya[i] * ya[i];
    xy[i] = xa[i] * ya[i];
  }
  const auto mx = filter_valid(xa, nx, ny, w), my = filter_valid(ya, nx, ny, w);
  const auto sxx = filter_valid(xx, nx, ny, w), syy = filter_valid(yy, nx, ny, w);
  const auto sxy = filter_valid(xy, nx, ny, w);
  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double ssim(const nd::Tensor& x, const nd::Tensor& y, const SsimParams& p) {
  if (x.shape() != y.shape())
    throw nd::ShapeError("ssim: " + nd::to_string(x.shape()) + " vs " + nd::to_string(y.shape()));
  if (x.rank() != 3 && x.rank() != 4) throw nd::ShapeError("ssim: expected a 3D or 4D volume");
  const std::size_t nx = x.dim(0), ny = x.dim(1), nz = x.dim(2);
  const std::size_t nv = x.rank() == 4 ? x.dim(3) : 1;
  const auto a = x.data(), b = y.data();
  double total = 0.0;
  std::vector<double> sa(nx * ny), sb(nx * ny);
  for (std::size_t v = 0; v < nv; ++v)
    for (std::size_t z = 0; z < nz; ++z) {
      for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j) {
          const std::size_t src = ((i * ny + j) * nz + z) * nv + v;
          sa[i * ny + j] = a[src];
          sb[i * ny + j] = b[src];
        }
      total += ssim_slice(sa, sb, nx, ny, p);
    }
  return total / static_cast<double>(nz * nv);
}

// ---------------------------------------------------------------------------

double fractional_anisotropy(const std::array<double, 3>& l) {
  const double mean = (l[0] + l[1] + l[2]) / 3.0;
  const double num = (l[0] - mean) * (l[0] - mean) + (l[1] - mean) * (l[1] - mean) +
                     (l[2] - mean) * (l[2] - mean);
  const double den = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
  if (den == 0.0) return 0.0;
  return std::min(1.0, std::sqrt(1.5 * num / den));
}

DTensorFit fit_dti(const io::DWIVolumeSet& vol, std::span<const char> mask) {
  vol.validate();
  const std::size_t nvox = vol.nx() * vol.ny() * vol.nz(), nd_ = vol.volumes();
  if (!mask.empty() && mask.size() != nvox) throw nd::ShapeError("fit_dti: mask length mismatch");
  Eigen::MatrixXd design(nd_, 6);
  for (std::size_t n = 0; n < nd_; ++n) {
    const auto& p = vol.table[n];
    const double b = p.b, x = p.dir.x(), y = p.dir.y(), z = p.dir.z();
    design.row(static_cast<Eigen::Index>(n)) << b * x * x, 2 * b * x * y, 2 * b * x * z, b * y * y,
        2 * b * y * z, b * z * z;
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  if (cod.rank() < 6)
    throw std::invalid_argument("fit_dti: design matrix has rank " + std::to_string(cod.rank()) +
                                " (need 6 non-collinear directions)");
  const Eigen::MatrixXd pinv = cod.pseudoInverse();

  DTensorFit fit;
  fit.extents = {vol.nx(), vol.ny(), vol.nz()};
  fit.tensors.assign(nvox, phantom::SymTensor{});
  fit.eigen.assign(nvox, {0.0, 0.0, 0.0});
  fit.fa.assign(nvox, 0.0);
  fit.md.assign(nvox, 0.0);
  fit.fitted.assign(nvox, 0);
  const auto sig = vol.signal.data();

#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < nvox; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    Eigen::VectorXd rhs(nd_);
    for (std::size_t n = 0; n < nd_; ++n)
      rhs[static_cast<Eigen::Index>(n)] = -std::log(std::max(sig[i * nd_ + n], io::kS0Floor));
    const Eigen::VectorXd c = pinv * rhs;
    phantom::SymTensor t{c[0], c[1], c[2], c[3], c[4], c[5]};
    Eigen::Matrix3d m;
    m << t[0], t[1], t[2], t[1], t[3], t[4], t[2], t[4], t[5];
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m, Eigen::EigenvaluesOnly);
    const auto ev = es.eigenvalues();  // ascending
    std::array<double, 3> l{std::max(ev[2], 0.0), std::max(ev[1], 0.0), std::max(ev[0], 0.0)};
    fit.tensors[i] = t;
    fit.eigen[i] = l;
    fit.fa[i] = fractional_anisotropy(l);
    fit.md[i] = (l[0] + l[1] + l[2]) / 3.0;
    fit.fitted[i] = 1;
  }
  return fit;
}

FaMdError fa_md_error(const DTensorFit& a, const DTensorFit& b, std::span<const char> mask) {
  if (a.extents != b.extents) throw nd::ShapeError("fa_md_error: fits cover different grids");
  if (mask.size() != a.fa.size()) throw nd::ShapeError("fa_md_error: mask length mismatch");
  FaMdError e;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      e.fa += std::abs(a.fa[i] - b.fa[i]);
      e.md += std::abs(a.md[i] - b.md[i]);
      ++n;
    }
  if (n == 0) throw std::invalid_argument("fa_md_error: empty mask");
  e.fa /= static_cast<double>(n);
  e.md /= static_cast<double>(n);
  return e;
}

// ---------------------------------------------------------------------------

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("pearson: need two equal-length series of at least 2 values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0)
    throw std::domain_error("pearson: correlation undefined for a constant series");
  return sab / std::sqrt(saa * sbb);
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: length mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return scores[i] < scores[j]; });
  // Mid-ranks over tie groups, then the Mann-Whitney statistic.
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) throw std::invalid_argument("auroc: need both classes");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

std::size_t head_parameter_count(const ProbeHead& head, std::size_t d) {
  if (head.kind == HeadKind::linear) return d + 1;
  return d * head.hidden + head.hidden + head.hidden + 1;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Standardizer {
  VectorXd mean, scale;

  static Standardizer fit(const MatrixXd& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean.transpose()).array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
      if (s.scale[j] < 1e-12) s.scale[j] = 1.0;
    return s;
  }
  MatrixXd apply(const MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Ridge with an unpenalized intercept.
VectorXd ridge_predict(const MatrixXd& xtr, const VectorXd& ytr, const MatrixXd& xte, double l2) {
  const double ym = ytr.mean();
  const auto n = static_cast<double>(xtr.rows());
  MatrixXd a = xtr.transpose() * xtr;
  a.diagonal().array() += l2 * n;
  const VectorXd w = a.ldlt().solve(xtr.transpose() * (ytr.array() - ym).matrix());
  return (xte * w).array() + ym;
}

// L2-penalized logistic regression by Newton iterations.
VectorXd logistic_predict(const MatrixXd& xtr, const VectorXd& ytr, const MatrixXd& xte,
                          double l2) {
  const Eigen::Index n = xtr.rows(), d = xtr.cols();
  MatrixXd x(n, d + 1);
  x << MatrixXd::Ones(n, 1), xtr;
  VectorXd w = VectorXd::Zero(d + 1);
  const double lam = std::max(l2, 1e-8) * static_cast<double>(n);
  for (int it = 0; it < 100; ++it) {
    const VectorXd z = x * w;
    VectorXd p(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = sigmoid(z[i]);
      s[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
    }
    VectorXd g = x.transpose() * (p - ytr);
    MatrixXd h = x.transpose() * s.asDiagonal() * x;
    g.tail(d) += lam * w.tail(d);
    h.diagonal().tail(d).array() += lam;
    const VectorXd step = h.ldlt().solve(g);
    w -= step;
    if (step.cwiseAbs().maxCoeff() < 1e-10) break;
  }
  MatrixXd xt(xte.rows(), d + 1);
  xt << MatrixXd::Ones(xte.rows(), 1), xte;
  VectorXd out = xt * w;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = sigmoid(out[i]);
  return out;
}

// One hidden GELU layer trained by full-batch Adam with hand-written
// gradients (the head is tiny and the features are frozen).
VectorXd mlp_predict(const MatrixXd& xtr, const VectorXd& ytr, const MatrixXd& xte,
                     const ProbeHead& head, std::uint64_t seed) {
  const Eigen::Index n = xtr.rows(), d = xtr.cols(), h = static_cast<Eigen::Index>(head.hidden);
  const bool cls = head.task == Task::classification;
  Rng rng(seed);
  const double b1 = 1.0 / std::sqrt(static_cast<double>(d)), b2 = 1.0 / std::sqrt(double(h));
  MatrixXd w1(d, h);
  VectorXd c1 = VectorXd::Zero(h), w2(h);
  for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = rng.uniform(-b1, b1);
  for (Eigen::Index i = 0; i < h; ++i) w2[i] = rng.uniform(-b2, b2);
  double c2 = cls ? 0.0 : ytr.mean();

  auto gelu = [](double z) { return 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0))); };
  auto dgelu = [](double z) {
    return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))) +
           z * std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
  };
  const std::size_t np = static_cast<std::size_t>(w1.size() + 2 * h + 1);
  std::vector<double> m(np, 0.0), v(np, 0.0), grad(np), flat(np);
  const optim::AdamWConfig cfg;
  for (std::size_t t = 1; t <= head.mlp_steps; ++t) {
    const MatrixXd pre = (xtr * w1).rowwise() + c1.transpose();
    const MatrixXd act = pre.unaryExpr(gelu);
    const VectorXd out = (act * w2).array() + c2;
    VectorXd dout(n);
    for (Eigen::Index i = 0; i < n; ++i)
      dout[i] = cls ? (sigmoid(out[i]) - ytr[i]) / double(n) : 2.0 * (out[i] - ytr[i]) / double(n);
    const VectorXd gw2 = act.transpose() * dout;
    const double gc2 = dout.sum();
    const MatrixXd dpre = (dout * w2.transpose()).cwiseProduct(pre.unaryExpr(dgelu));
    const MatrixXd gw1 = xtr.transpose() * dpre + head.l2 * w1;
    const VectorXd gc1 = dpre.colwise().sum();

    std::size_t o = 0;
    for (Eigen::Index i = 0; i < w1.size(); ++i, ++o) {
      flat[o] = w1.data()[i];
      grad[o] = gw1.data()[i];
    }
    for (Eigen::Index i = 0; i < h; ++i, ++o) {
      flat[o] = c1[i];
      grad[o] = gc1[i];
    }
    for (Eigen::Index i = 0; i < h; ++i, ++o) {
      flat[o] = w2[i];
      grad[o] = gw2[i];
    }
    flat[o] = c2;
    grad[o] = gc2;
    optim::adamw_update(flat, grad, m, v, head.mlp_lr, 0.0, cfg, t, false);
    o = 0;
    for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = flat[o++];
    for (Eigen::Index i = 0; i < h; ++i) c1[i] = flat[o++];
    for (Eigen::Index i = 0; i < h; ++i) w2[i] = flat[o++];
    c2 = flat[o];
  }
  const MatrixXd act = ((xte * w1).rowwise() + c1.transpose()).unaryExpr(gelu);
  VectorXd out = (act * w2).array() + c2;
  if (cls)
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = sigmoid(out[i]);
  return out;
}

std::vector<std::size_t> assign_folds(std::span<const double> targets, std::size_t folds,
                                      bool stratify, Rng& rng) {
  const std::size_t n = targets.size();
  std::vector<std::size_t> fold(n);
  if (!stratify) {
    const auto order = rng.sample_without_replacement(n, n);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i * folds / n;
    return fold;
  }
  std::size_t next = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if ((targets[i] != 0.0) == (cls == 1)) members.push_back(i);
    const auto order = rng.sample_without_replacement(members.size(), members.size());
    for (auto k : order) fold[members[k]] = next++ % folds;
  }
  return fold;
}

}  // namespace

ProbeResult train_probe(const std::vector<std::vector<double>>& features,
                        std::span<const double> targets, const ProbeHead& head,
                        std::size_t folds, std::uint64_t seed) {
  const std::size_t n = features.size();
  if (folds < 2) throw std::invalid_argument("train_probe: need at least 2 folds");
  if (n != targets.size()) throw std::invalid_argument("train_probe: features/targets mismatch");
  if (n < folds) throw std::invalid_argument("train_probe: fewer samples than folds");
  const std::size_t d = features.front().size();
  MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) throw nd::ShapeError("train_probe: ragged features");
    for (std::size_t j = 0; j < d; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i][j];
  }
  const bool cls = head.task == Task::classification;
  if (cls)
    for (double t : targets)
      if (t != 0.0 && t != 1.0) throw std::invalid_argument("train_probe: labels must be 0 or 1");

  Rng rng(seed);
  ProbeResult r;
  r.fold_of = assign_folds(targets, folds, cls, rng);
  r.predictions.assign(n, 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < n; ++i) (r.fold_of[i] == f ? te : tr).push_back(Eigen::Index(i));
    if (cls) {
      for (const auto* part : {&tr, &te}) {
        double pos = 0;
        for (auto i : *part) pos += targets[static_cast<std::size_t>(i)];
        if (pos == 0.0 || pos == static_cast<double>(part->size()))
          throw std::invalid_argument("train_probe: fold " + std::to_string(f) +
                                      " contains a single class");
      }
    }
    MatrixXd xtr = x(tr, Eigen::all), xte = x(te, Eigen::all);
    VectorXd ytr(static_cast<Eigen::Index>(tr.size()));
    for (std::size_t i = 0; i < tr.size(); ++i) ytr[Eigen::Index(i)] = targets[std::size_t(tr[i])];
    const auto st = Standardizer::fit(xtr);
    xtr = st.apply(xtr);
    xte = st.apply(xte);
    VectorXd pred;
    if (head.kind == HeadKind::mlp)
      pred = mlp_predict(xtr, ytr, xte, head, Rng::mix(seed, f + 1));
    else if (cls)
      pred = logistic_predict(xtr, ytr, xte, head.l2);
    else
      pred = ridge_predict(xtr, ytr, xte, head.l2);
    for (std::size_t i = 0; i < te.size(); ++i) r.predictions[std::size_t(te[i])] = pred[Eigen::Index(i)];
  }

  if (cls) {
    std::vector<int> labels(n);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = targets[i] != 0.0;
      correct += (r.predictions[i] >= 0.5) == (labels[i] == 1);
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    r.auroc = auroc(r.predictions, labels);
  } else {
    bool constant = true;
    for (Eigen::Index j = 0; j < x.cols() && constant; ++j)
      constant = (x.col(j).array() == x(0, j)).all();
    if (constant)
      throw std::domain_error("train_probe: features are constant; correlation is undefined");
    double se = 0.0;
    for (std::size_t i = 0; i < n; ++i) se += (r.predictions[i] - targets[i]) * (r.predictions[i] - targets[i]);
    r.mse = se / static_cast<double>(n);
    r.rho = pearson(r.predictions, targets);
  }
  return r;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw std::invalid_argument("write_csv: ragged row");
    line(r);
  }
}

}  // namespace drope::metrics
