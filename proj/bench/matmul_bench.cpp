// SPDX-License-Identifier: Apache-2.0
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "seqtag/kernels.hpp"

namespace {

std::vector<double> random_matrix(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> dist;
  std::vector<double> m(n);
  for (auto& v : m) v = dist(engine);
  return m;
}

template <auto Kernel>
void bench_square(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n * n, 1);
  const auto b = random_matrix(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(2 * n * n * n));
}

}  // namespace

BENCHMARK(bench_square<seqtag::kernels::matmul_nn_serial>)
    ->Name("matmul_nn/serial")
    ->Arg(32)->Arg(128)->Arg(512);
BENCHMARK(bench_square<seqtag::kernels::matmul_nn>)
    ->Name("matmul_nn/omp")
    ->Arg(32)->Arg(128)->Arg(512);
BENCHMARK(bench_square<seqtag::kernels::matmul_nt_serial>)
    ->Name("matmul_nt/serial")
    ->Arg(32)->Arg(128)->Arg(512);
BENCHMARK(bench_square<seqtag::kernels::matmul_nt>)
    ->Name("matmul_nt/omp")
    ->Arg(32)->Arg(128)->Arg(512);
BENCHMARK(bench_square<seqtag::kernels::matmul_tn_acc_serial>)
    ->Name("matmul_tn_acc/serial")
    ->Arg(32)->Arg(128)->Arg(512);
BENCHMARK(bench_square<seqtag::kernels::matmul_tn_acc>)
    ->Name("matmul_tn_acc/omp")
    ->Arg(32)->Arg(128)->Arg(512);

BENCHMARK_MAIN();
