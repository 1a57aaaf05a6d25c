// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP kernels on the shapes training actually hits.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dmla/kernels.hpp"

namespace k = dmla::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::matmul(a, b, out, n, n, n);
    } else {
      k::reference::matmul(a, b, out, n, n, n);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

// First backbone block on a 32x32 image, then the 16x16 and 8x8 blocks.
const k::ConvDims kConv[] = {{32, 32, 3, 3, 8}, {16, 16, 8, 3, 16}, {8, 8, 16, 3, 32}};

template <bool Parallel>
void BM_conv(benchmark::State& state) {
  const k::ConvDims d = kConv[state.range(0)];
  const auto in = noise(d.height * d.width * d.in_channels, 3);
  const auto kernel = noise(d.kernel * d.kernel * d.in_channels * d.out_channels, 4);
  const auto bias = noise(d.out_channels, 5);
  std::vector<double> out(d.height * d.width * d.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_same(in, kernel, bias, out, d);
    } else {
      k::reference::conv2d_same(in, kernel, bias, out, d);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_conv_grad_kernel(benchmark::State& state) {
  const k::ConvDims d = kConv[state.range(0)];
  const auto in = noise(d.height * d.width * d.in_channels, 6);
  const auto gout = noise(d.height * d.width * d.out_channels, 7);
  std::vector<double> gk(d.kernel * d.kernel * d.in_channels * d.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_same_grad_kernel(in, gout, gk, d);
    } else {
      k::reference::conv2d_same_grad_kernel(in, gout, gk, d);
    }
    benchmark::DoNotOptimize(gk.data());
  }
}

}  // namespace

BENCHMARK(BM_matmul<false>)->Name("matmul/reference")->Arg(16)->Arg(64)->Arg(128);
BENCHMARK(BM_matmul<true>)->Name("matmul/openmp")->Arg(16)->Arg(64)->Arg(128);
BENCHMARK(BM_conv<false>)->Name("conv2d/reference")->DenseRange(0, 2);
BENCHMARK(BM_conv<true>)->Name("conv2d/openmp")->DenseRange(0, 2);
BENCHMARK(BM_conv_grad_kernel<false>)->Name("conv2d_grad_kernel/reference")->DenseRange(0, 2);
BENCHMARK(BM_conv_grad_kernel<true>)->Name("conv2d_grad_kernel/openmp")->DenseRange(0, 2);

BENCHMARK_MAIN();
