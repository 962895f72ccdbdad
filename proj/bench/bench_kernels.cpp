// SPDX-License-Identifier: Apache-2.0
// Parallel kernels against the serial reference, and the cost of rotary
// scores relative to plain dot-product scores as the sequence grows.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "drope/kernels.hpp"
#include "drope/rng.hpp"

namespace {

using namespace drope;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Reference>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::gemm(a.data(), b.data(), c.data(), n, n, n, false, true, false);
    else
      kernels::gemm(a.data(), b.data(), c.data(), n, n, n, false, true, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Gemm<false>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/reference")->Arg(64)->Arg(256);

// Decoder head shape: one batch item per diffusion volume.
kernels::ConvDims head_dims(std::int64_t volumes) {
  return {static_cast<std::size_t>(volumes), 8, 8, 32, 32, 4};
}

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
  const auto d = head_dims(state.range(0));
  const auto x = random_vector(d.batch * d.c_in * d.plane(), 3);
  const auto w = random_vector(d.c_out * d.c_in * 27, 4), bias = random_vector(d.c_out, 5);
  std::vector<double> y(d.batch * d.c_out * d.plane());
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::conv3d_forward(x.data(), w.data(), bias.data(), y.data(), d);
    else
      kernels::conv3d_forward(x.data(), w.data(), bias.data(), y.data(), d);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ConvForward<false>)->Name("conv3d_forward/parallel")->Arg(4)->Arg(15);
BENCHMARK(BM_ConvForward<true>)->Name("conv3d_forward/reference")->Arg(4)->Arg(15);

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
  const auto d = head_dims(state.range(0));
  const auto x = random_vector(d.batch * d.c_in * d.plane(), 3);
  const auto dy = random_vector(d.batch * d.c_out * d.plane(), 6);
  const auto w = random_vector(d.c_out * d.c_in * 27, 4);
  std::vector<double> dx(x.size()), dw(w.size()), db(d.c_out);
  for (auto _ : state) {
    if constexpr (Reference) {
      kernels::reference::conv3d_backward_input(dy.data(), w.data(), dx.data(), d);
      kernels::reference::conv3d_backward_weight(dy.data(), x.data(), dw.data(), db.data(), d);
    } else {
      kernels::conv3d_backward_input(dy.data(), w.data(), dx.data(), d);
      kernels::conv3d_backward_weight(dy.data(), x.data(), dw.data(), db.data(), d);
    }
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
}
BENCHMARK(BM_ConvBackward<false>)->Name("conv3d_backward/parallel")->Arg(4)->Arg(15);
BENCHMARK(BM_ConvBackward<true>)->Name("conv3d_backward/reference")->Arg(4)->Arg(15);

struct RotaryInputs {
  kernels::RotaryDims dims;
  std::vector<double> q, k, cos_t, sin_t, out;

  RotaryInputs(std::size_t batch, std::size_t length, std::size_t head_dim)
      : dims{batch, length, length, head_dim / 2},
        q(random_vector(batch * length * head_dim, 7)),
        k(random_vector(batch * length * head_dim, 8)),
        cos_t(length * length * head_dim / 2),
        sin_t(cos_t.size()),
        out(batch * length * length) {
    const auto angles = random_vector(cos_t.size(), 9);
    for (std::size_t i = 0; i < angles.size(); ++i) {
      cos_t[i] = std::cos(3.0 * angles[i]);
      sin_t[i] = std::sin(3.0 * angles[i]);
    }
  }
};

template <bool Reference>
void BM_Rotary(benchmark::State& state) {
  RotaryInputs in(16, static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::rotary_scores_forward(in.q.data(), in.k.data(), in.cos_t.data(),
                                                in.sin_t.data(), in.out.data(), in.dims);
    else
      kernels::rotary_scores_forward(in.q.data(), in.k.data(), in.cos_t.data(), in.sin_t.data(),
                                     in.out.data(), in.dims);
    benchmark::DoNotOptimize(in.out.data());
  }
}
BENCHMARK(BM_Rotary<false>)->Name("rotary_scores/parallel")->Arg(30)->Arg(90);
BENCHMARK(BM_Rotary<true>)->Name("rotary_scores/reference")->Arg(30)->Arg(90);

// Attention logits over l diffusion tokens: plain q k^T against distance
// rotary scores, which need a per-pair rotation table of l * l * h / 2.
void BM_ScoresPlain(benchmark::State& state) {
  const auto l = static_cast<std::size_t>(state.range(0));
  RotaryInputs in(16, l, 32);
  for (auto _ : state) {
    kernels::gemm_batched(in.q.data(), in.k.data(), in.out.data(), 16, l, 32, l, false, true, false);
    benchmark::DoNotOptimize(in.out.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScoresPlain)->Name("scores/plain")->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_ScoresRotary(benchmark::State& state) {
  RotaryInputs in(16, static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) {
    kernels::rotary_scores_forward(in.q.data(), in.k.data(), in.cos_t.data(), in.sin_t.data(),
                                   in.out.data(), in.dims);
    benchmark::DoNotOptimize(in.out.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScoresRotary)->Name("scores/rotary")->RangeMultiplier(2)->Range(16, 256)->Complexity();

}  // namespace

BENCHMARK_MAIN();
