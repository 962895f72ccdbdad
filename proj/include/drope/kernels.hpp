// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops behind the tensor ops. Each kernel parallelizes
// over independent output rows/planes with OpenMP and keeps the reduction
// for any single output element on one thread, so results are bit-identical
// for every thread count. The `reference` namespace holds plain serial
// versions used by the tests and the benchmark.

#include <cstddef>

namespace drope::kernels {

struct ConvDims {
  std::size_t batch = 1, c_in = 1, c_out = 1, d = 1, h = 1, w = 1;
  std::size_t plane() const { return d * h * w; }
};

struct RotaryDims {
  std::size_t batch = 1, lq = 1, lk = 1, pairs = 1;
  std::size_t head_dim() const { return 2 * pairs; }
};

/// c[m, n] (+)= op(a) * op(b); op(a) is [m, k] (a stored [k, m] when
/// trans_a), op(b) is [k, n] (b stored [n, k] when trans_b).
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool trans_a, bool trans_b, bool accumulate);

/// `batch` independent gemms with contiguous operands.
void gemm_batched(const double* a, const double* b, double* c, std::size_t batch,
                  std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b,
                  bool accumulate);

void conv3d_forward(const double* x, const double* w, const double* bias, double* y,
                    const ConvDims& dims);
/// dx (+)= adjoint of conv3d_forward w.r.t. x.
void conv3d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& dims);
/// dw += ..., db += ... (db may be null).
void conv3d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& dims);

/// out[b, m, n] = sum_i cos_mni * (q1 k1 + q2 k2) + sin_mni * (q2 k1 - q1 k2)
/// over the sub-pairs (q1, q2) = q[b, m, 2i..2i+1], likewise for k.
void rotary_scores_forward(const double* q, const double* k, const double* cos_t,
                           const double* sin_t, double* out, const RotaryDims& dims);
/// dq, dk accumulate.
void rotary_scores_backward(const double* dout, const double* q, const double* k,
                            const double* cos_t, const double* sin_t, double* dq, double* dk,
                            const RotaryDims& dims);

namespace reference {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool trans_a, bool trans_b, bool accumulate);
void conv3d_forward(const double* x, const double* w, const double* bias, double* y,
                    const ConvDims& dims);
void conv3d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& dims);
void conv3d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& dims);
/// Builds each 2x2 block explicitly and forms q^T R k.
void rotary_scores_forward(const double* q, const double* k, const double* cos_t,
                           const double* sin_t, double* out, const RotaryDims& dims);

}  // namespace reference

}  // namespace drope::kernels
