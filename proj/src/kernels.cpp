// SPDX-License-Identifier: Apache-2.0
#include "drope/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace drope::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

inline std::int64_t as_i64(std::size_t v) { return static_cast<std::int64_t>(v); }

// Valid output range [lo, hi) along one axis for kernel tap t in {0, 1, 2}
// so that out + t - 1 stays inside [0, n).
inline void tap_range(std::size_t n, int t, std::size_t& lo, std::size_t& hi) {
  lo = t == 0 ? 1 : 0;
  hi = t == 2 ? (n > 0 ? n - 1 : 0) : n;
}

void gemm_rows(const double* a, const double* b, double* c, std::size_t row_begin,
               std::size_t row_end, std::size_t m, std::size_t k, std::size_t n, bool trans_a,
               bool trans_b, bool accumulate) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    if (!trans_b) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        if (!trans_a) {
          const double* arow = a + i * k;
#pragma omp simd reduction(+ : acc)
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        } else {
          for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
        }
        crow[j] += acc;
      }
    }
  }
}

// Copies `batch` row-major [rows, cols] matrices into [cols, rows] layout.
std::vector<double> transposed(const double* src, std::size_t batch, std::size_t rows,
                               std::size_t cols) {
  std::vector<double> out(batch * rows * cols);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* s = src + b * rows * cols;
    double* d = out.data() + b * rows * cols;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) d[c * rows + r] = s[r * cols + c];
  }
  return out;
}

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
  gemm_batched(a, b, c, 1, m, k, n, trans_a, trans_b, accumulate);
}

void gemm_batched(const double* a, const double* b, double* c, std::size_t batch,
                  std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b,
                  bool accumulate) {
  // Transposed operands are packed once so every row streams contiguously.
  std::vector<double> pa, pb;
  if (trans_a && m > 1) {
    pa = transposed(a, batch, k, m);
    a = pa.data();
    trans_a = false;
  }
  if (trans_b) {
    pb = transposed(b, batch, n, k);
    b = pb.data();
    trans_b = false;
  }
  const bool par = batch * m * k * n >= kParallelWork && batch * m > 1;
  const std::size_t total = batch * m;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < as_i64(total); ++r) {
    const std::size_t bi = static_cast<std::size_t>(r) / m;
    const std::size_t row = static_cast<std::size_t>(r) % m;
    gemm_rows(a + bi * m * k, b + bi * k * n, c + bi * m * n, row, row + 1, m, k, n, trans_a,
              trans_b, accumulate);
  }
}

namespace {

// The parallel convolutions work on zero-padded copies, [D+2, H+2, W+2] per
// channel. A tap is then a fixed flat offset and every tap is one long
// contiguous loop over the interior span, whatever the innermost extent.
// The span is walked in blocks that stay resident in L1.
// Pad cells inside the span produce garbage that is never read back.
constexpr std::size_t kSpanBlock = 512;

struct Padded {
  std::size_t pd, ph, pw, volume, lo, hi;

  explicit Padded(const ConvDims& dims)
      : pd(dims.d + 2), ph(dims.h + 2), pw(dims.w + 2), volume(pd * ph * pw) {
    lo = ph * pw + pw + 1;
    hi = dims.d * ph * pw + dims.h * pw + dims.w + 1;
  }
  std::ptrdiff_t offset(int kz, int ky, int kx) const {
    return static_cast<std::ptrdiff_t>((kz - 1) * static_cast<std::ptrdiff_t>(ph * pw) +
                                       (ky - 1) * static_cast<std::ptrdiff_t>(pw) + (kx - 1));
  }
};

std::vector<double> pad_channels(const double* src, std::size_t channels, const ConvDims& dims,
                                 const Padded& p) {
  std::vector<double> out(channels * p.volume, 0.0);
  const std::size_t plane = dims.plane();
  const bool par = channels > 1 && channels * plane >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t c = 0; c < as_i64(channels); ++c) {
    const double* s = src + static_cast<std::size_t>(c) * plane;
    double* o = out.data() + static_cast<std::size_t>(c) * p.volume;
    for (std::size_t z = 0; z < dims.d; ++z)
      for (std::size_t y = 0; y < dims.h; ++y)
        std::copy_n(s + (z * dims.h + y) * dims.w, dims.w, o + ((z + 1) * p.ph + y + 1) * p.pw + 1);
  }
  return out;
}

// Adds the interior of a padded channel into a dense one.
void add_interior(const double* padded, double* dst, const ConvDims& dims, const Padded& p) {
  for (std::size_t z = 0; z < dims.d; ++z)
    for (std::size_t y = 0; y < dims.h; ++y) {
      const double* s = padded + ((z + 1) * p.ph + y + 1) * p.pw + 1;
      double* o = dst + (z * dims.h + y) * dims.w;
      for (std::size_t x = 0; x < dims.w; ++x) o[x] += s[x];
    }
}

}  // namespace

void conv3d_forward(const double* x, const double* w, const double* bias, double* y,
                    const ConvDims& dims) {
  const Padded p(dims);
  const auto xp = pad_channels(x, dims.batch * dims.c_in, dims, p);
  const std::size_t plane = dims.plane();
  const std::size_t jobs = dims.batch * dims.c_out;
  const bool par = jobs > 1 && jobs * dims.c_in * plane * 27 >= kParallelWork;
#pragma omp parallel if (par)
  {
    std::vector<double> acc(p.volume);
#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < as_i64(jobs); ++job) {
      const std::size_t nb = static_cast<std::size_t>(job) / dims.c_out;
      const std::size_t co = static_cast<std::size_t>(job) % dims.c_out;
      std::fill(acc.begin(), acc.end(), 0.0);
      double* a = acc.data();
      for (std::size_t b0 = p.lo; b0 < p.hi; b0 += kSpanBlock) {
        const std::size_t b1 = std::min(p.hi, b0 + kSpanBlock);
        for (std::size_t ci = 0; ci < dims.c_in; ++ci) {
          const double* in = xp.data() + (nb * dims.c_in + ci) * p.volume;
          const double* wk = w + (co * dims.c_in + ci) * 27;
          for (int t = 0; t < 27; ++t) {
            const double wv = wk[t];
            if (wv == 0.0) continue;
            const double* src = in + p.offset(t / 9, (t / 3) % 3, t % 3);
#pragma omp simd
            for (std::size_t i = b0; i < b1; ++i) a[i] += wv * src[i];
          }
        }
      }
      double* out = y + (nb * dims.c_out + co) * plane;
      std::fill(out, out + plane, bias ? bias[co] : 0.0);
      add_interior(a, out, dims, p);
    }
  }
}

void conv3d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& dims) {
  const Padded p(dims);
  // Zero padding of dy keeps contributions from outside the output grid out.
  const auto gp = pad_channels(dy, dims.batch * dims.c_out, dims, p);
  const std::size_t plane = dims.plane();
  const std::size_t jobs = dims.batch * dims.c_in;
  const bool par = jobs > 1 && jobs * dims.c_out * plane * 27 >= kParallelWork;
#pragma omp parallel if (par)
  {
    std::vector<double> acc(p.volume);
#pragma omp for schedule(static)
    for (std::int64_t job = 0; job < as_i64(jobs); ++job) {
      const std::size_t nb = static_cast<std::size_t>(job) / dims.c_in;
      const std::size_t ci = static_cast<std::size_t>(job) % dims.c_in;
      std::fill(acc.begin(), acc.end(), 0.0);
      double* a = acc.data();
      for (std::size_t b0 = p.lo; b0 < p.hi; b0 += kSpanBlock) {
        const std::size_t b1 = std::min(p.hi, b0 + kSpanBlock);
        for (std::size_t co = 0; co < dims.c_out; ++co) {
          const double* g = gp.data() + (nb * dims.c_out + co) * p.volume;
          const double* wk = w + (co * dims.c_in + ci) * 27;
          for (int t = 0; t < 27; ++t) {
            const double wv = wk[t];
            if (wv == 0.0) continue;
            const double* src = g - p.offset(t / 9, (t / 3) % 3, t % 3);
#pragma omp simd
            for (std::size_t i = b0; i < b1; ++i) a[i] += wv * src[i];
          }
        }
      }
      add_interior(a, dx + (nb * dims.c_in + ci) * plane, dims, p);
    }
  }
}

void conv3d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& dims) {
  const Padded p(dims);
  const auto xp = pad_channels(x, dims.batch * dims.c_in, dims, p);
  const auto gp = pad_channels(dy, dims.batch * dims.c_out, dims, p);
  const std::size_t plane = dims.plane();
  const std::size_t jobs = dims.c_out * dims.c_in;
  const bool par = jobs > 1 && jobs * dims.batch * plane * 27 >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t job = 0; job < as_i64(jobs); ++job) {
    const std::size_t co = static_cast<std::size_t>(job) / dims.c_in;
    const std::size_t ci = static_cast<std::size_t>(job) % dims.c_in;
    double* wk = dw + (co * dims.c_in + ci) * 27;
    for (std::size_t nb = 0; nb < dims.batch; ++nb) {
      const double* g = gp.data() + (nb * dims.c_out + co) * p.volume;
      const double* in = xp.data() + (nb * dims.c_in + ci) * p.volume;
      for (std::size_t b0 = p.lo; b0 < p.hi; b0 += kSpanBlock) {
        const std::size_t b1 = std::min(p.hi, b0 + kSpanBlock);
        for (int t = 0; t < 27; ++t) {
          const double* src = in + p.offset(t / 9, (t / 3) % 3, t % 3);
          double acc = 0.0;
#pragma omp simd reduction(+ : acc)
          for (std::size_t i = b0; i < b1; ++i) acc += g[i] * src[i];
          wk[t] += acc;
        }
      }
    }
  }
  if (db != nullptr) {
    for (std::size_t co = 0; co < dims.c_out; ++co) {
      double acc = 0.0;
      for (std::size_t nb = 0; nb < dims.batch; ++nb) {
        const double* gout = dy + (nb * dims.c_out + co) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += gout[i];
      }
      db[co] += acc;
    }
  }
}

void rotary_scores_forward(const double* q, const double* k, const double* cos_t,
                           const double* sin_t, double* out, const RotaryDims& dims) {
  const std::size_t dh = dims.head_dim();
  const std::size_t rows = dims.batch * dims.lq;
  const bool par = rows > 1 && rows * dims.lk * dh >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < as_i64(rows); ++r) {
    const std::size_t b = static_cast<std::size_t>(r) / dims.lq;
    const std::size_t m = static_cast<std::size_t>(r) % dims.lq;
    const double* qm = q + (b * dims.lq + m) * dh;
    double* orow = out + (b * dims.lq + m) * dims.lk;
    for (std::size_t n = 0; n < dims.lk; ++n) {
      const double* kn = k + (b * dims.lk + n) * dh;
      const double* c = cos_t + (m * dims.lk + n) * dims.pairs;
      const double* s = sin_t + (m * dims.lk + n) * dims.pairs;
      double acc = 0.0;
      for (std::size_t i = 0; i < dims.pairs; ++i) {
        const double q1 = qm[2 * i], q2 = qm[2 * i + 1];
        const double k1 = kn[2 * i], k2 = kn[2 * i + 1];
        acc += c[i] * (q1 * k1 + q2 * k2) + s[i] * (q2 * k1 - q1 * k2);
      }
      orow[n] = acc;
    }
  }
}

void rotary_scores_backward(const double* dout, const double* q, const double* k,
                            const double* cos_t, const double* sin_t, double* dq, double* dk,
                            const RotaryDims& dims) {
  const std::size_t dh = dims.head_dim();
  const bool par = dims.batch * dims.lq * dims.lk * dh >= kParallelWork;
  if (dq != nullptr) {
    const std::size_t rows = dims.batch * dims.lq;
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t r = 0; r < as_i64(rows); ++r) {
      const std::size_t b = static_cast<std::size_t>(r) / dims.lq;
      const std::size_t m = static_cast<std::size_t>(r) % dims.lq;
      double* gq = dq + (b * dims.lq + m) * dh;
      const double* grow = dout + (b * dims.lq + m) * dims.lk;
      for (std::size_t n = 0; n < dims.lk; ++n) {
        const double g = grow[n];
        if (g == 0.0) continue;
        const double* kn = k + (b * dims.lk + n) * dh;
        const double* c = cos_t + (m * dims.lk + n) * dims.pairs;
        const double* s = sin_t + (m * dims.lk + n) * dims.pairs;
        for (std::size_t i = 0; i < dims.pairs; ++i) {
          const double k1 = kn[2 * i], k2 = kn[2 * i + 1];
          gq[2 * i] += g * (c[i] * k1 - s[i] * k2);
          gq[2 * i + 1] += g * (c[i] * k2 + s[i] * k1);
        }
      }
    }
  }
  if (dk != nullptr) {
    const std::size_t rows = dims.batch * dims.lk;
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t r = 0; r < as_i64(rows); ++r) {
      const std::size_t b = static_cast<std::size_t>(r) / dims.lk;
      const std::size_t n = static_cast<std::size_t>(r) % dims.lk;
      double* gk = dk + (b * dims.lk + n) * dh;
      for (std::size_t m = 0; m < dims.lq; ++m) {
        const double g = dout[(b * dims.lq + m) * dims.lk + n];
        if (g == 0.0) continue;
        const double* qm = q + (b * dims.lq + m) * dh;
        const double* c = cos_t + (m * dims.lk + n) * dims.pairs;
        const double* s = sin_t + (m * dims.lk + n) * dims.pairs;
        for (std::size_t i = 0; i < dims.pairs; ++i) {
          const double q1 = qm[2 * i], q2 = qm[2 * i + 1];
          gk[2 * i] += g * (c[i] * q1 + s[i] * q2);
          gk[2 * i + 1] += g * (c[i] * q2 - s[i] * q1);
        }
      }
    }
  }
}

namespace reference {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

namespace {

inline double at_padded(const double* in, const ConvDims& d, std::int64_t z, std::int64_t y,
                        std::int64_t x) {
  if (z < 0 || y < 0 || x < 0 || z >= as_i64(d.d) || y >= as_i64(d.h) || x >= as_i64(d.w))
    return 0.0;
  return in[(static_cast<std::size_t>(z) * d.h + static_cast<std::size_t>(y)) * d.w +
            static_cast<std::size_t>(x)];
}

}  // namespace

void conv3d_forward(const double* x, const double* w, const double* bias, double* y,
                    const ConvDims& dims) {
  const std::size_t plane = dims.plane();
  for (std::size_t nb = 0; nb < dims.batch; ++nb)
    for (std::size_t co = 0; co < dims.c_out; ++co)
      for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t yy = 0; yy < dims.h; ++yy)
          for (std::size_t xx = 0; xx < dims.w; ++xx) {
            double acc = bias ? bias[co] : 0.0;
            for (std::size_t ci = 0; ci < dims.c_in; ++ci) {
              const double* in = x + (nb * dims.c_in + ci) * plane;
              for (int kz = 0; kz < 3; ++kz)
                for (int ky = 0; ky < 3; ++ky)
                  for (int kx = 0; kx < 3; ++kx)
                    acc += w[((co * dims.c_in + ci) * 3 + kz) * 9 + ky * 3 + kx] *
                           at_padded(in, dims, as_i64(z) + kz - 1, as_i64(yy) + ky - 1,
                                     as_i64(xx) + kx - 1);
            }
            y[((nb * dims.c_out + co) * dims.d + z) * dims.h * dims.w + yy * dims.w + xx] = acc;
          }
}

void conv3d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& dims) {
  const std::size_t plane = dims.plane();
  for (std::size_t nb = 0; nb < dims.batch; ++nb)
    for (std::size_t co = 0; co < dims.c_out; ++co)
      for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t yy = 0; yy < dims.h; ++yy)
          for (std::size_t xx = 0; xx < dims.w; ++xx) {
            const double g = dy[(nb * dims.c_out + co) * plane + (z * dims.h + yy) * dims.w + xx];
            for (std::size_t ci = 0; ci < dims.c_in; ++ci)
              for (int kz = 0; kz < 3; ++kz)
                for (int ky = 0; ky < 3; ++ky)
                  for (int kx = 0; kx < 3; ++kx) {
                    const std::int64_t iz = as_i64(z) + kz - 1, iy = as_i64(yy) + ky - 1,
                                       ix = as_i64(xx) + kx - 1;
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= as_i64(dims.d) ||
                        iy >= as_i64(dims.h) || ix >= as_i64(dims.w))
                      continue;
                    dx[(nb * dims.c_in + ci) * plane +
                       (static_cast<std::size_t>(iz) * dims.h + static_cast<std::size_t>(iy)) *
                           dims.w +
                       static_cast<std::size_t>(ix)] +=
                        g * w[((co * dims.c_in + ci) * 3 + kz) * 9 + ky * 3 + kx];
                  }
          }
}

void conv3d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& dims) {
  const std::size_t plane = dims.plane();
  for (std::size_t nb = 0; nb < dims.batch; ++nb)
    for (std::size_t co = 0; co < dims.c_out; ++co)
      for (std::size_t z = 0; z < dims.d; ++z)
        for (std::size_t yy = 0; yy < dims.h; ++yy)
          for (std::size_t xx = 0; xx < dims.w; ++xx) {
            const double g = dy[(nb * dims.c_out + co) * plane + (z * dims.h + yy) * dims.w + xx];
            if (db != nullptr) db[co] += g;
            for (std::size_t ci = 0; ci < dims.c_in; ++ci) {
              const double* in = x + (nb * dims.c_in + ci) * plane;
              for (int kz = 0; kz < 3; ++kz)
                for (int ky = 0; ky < 3; ++ky)
                  for (int kx = 0; kx < 3; ++kx)
                    dw[((co * dims.c_in + ci) * 3 + kz) * 9 + ky * 3 + kx] +=
                        g * at_padded(in, dims, as_i64(z) + kz - 1, as_i64(yy) + ky - 1,
                                      as_i64(xx) + kx - 1);
            }
          }
}

void rotary_scores_forward(const double* q, const double* k, const double* cos_t,
                           const double* sin_t, double* out, const RotaryDims& dims) {
  const std::size_t dh = dims.head_dim();
  for (std::size_t b = 0; b < dims.batch; ++b)
    for (std::size_t m = 0; m < dims.lq; ++m)
      for (std::size_t n = 0; n < dims.lk; ++n) {
        const double* qm = q + (b * dims.lq + m) * dh;
        const double* kn = k + (b * dims.lk + n) * dh;
        double acc = 0.0;
        for (std::size_t i = 0; i < dims.pairs; ++i) {
          const double c = cos_t[(m * dims.lk + n) * dims.pairs + i];
          const double s = sin_t[(m * dims.lk + n) * dims.pairs + i];
          // R k for the 2x2 block, then dot with q.
          const double rk1 = c * kn[2 * i] - s * kn[2 * i + 1];
          const double rk2 = s * kn[2 * i] + c * kn[2 * i + 1];
          acc += qm[2 * i] * rk1 + qm[2 * i + 1] * rk2;
        }
        out[(b * dims.lq + m) * dims.lk + n] = acc;
      }
}

}  // namespace reference

}  // namespace drope::kernels
