#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "videograph/kernels.hpp"

namespace k = videograph::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Temporal-graph sized product: [T x d] * [d x T].
template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::GemmShape s{n, n, 256, false, true};
  const auto a = random_vec(n * 256, 1), b = random_vec(n * 256, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::gemm(s, a.data(), b.data(), c.data(), false);
    else k::serial::batched_gemm(1, s, a.data(), 0, b.data(), 0, c.data(), 0, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * n * 256));
}

// Per-frame spatial graphs: T blocks of N x N.
template <bool Parallel>
void BM_BatchedGemm(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const std::size_t N = 16, d = 256;
  const k::GemmShape s{N, N, d, false, true};
  const auto a = random_vec(T * N * d, 3), b = random_vec(T * N * d, 4);
  std::vector<double> c(T * N * N);
  for (auto _ : state) {
    if constexpr (Parallel) k::batched_gemm(T, s, a.data(), N * d, b.data(), N * d, c.data(), N * N, false);
    else k::serial::batched_gemm(T, s, a.data(), N * d, b.data(), N * d, c.data(), N * N, false);
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Parallel>
void BM_RowSoftmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vec(n * n, 5);
  std::vector<double> y(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::row_softmax(x.data(), y.data(), n, n, 0.0625, nullptr);
    else k::serial::row_softmax(x.data(), y.data(), n, n, 0.0625, nullptr);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_SymNormalize(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const std::size_t N = 16;
  auto adj = random_vec(T * N * N, 6);
  for (auto& v : adj) v = v * v;
  std::vector<double> out(adj.size()), deg(T * N);
  for (auto _ : state) {
    if constexpr (Parallel) k::sym_normalize(adj.data(), out.data(), deg.data(), T, N);
    else k::serial::sym_normalize(adj.data(), out.data(), deg.data(), T, N);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(320);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(320);
BENCHMARK(BM_BatchedGemm<false>)->Name("batched_gemm/serial")->Arg(320);
BENCHMARK(BM_BatchedGemm<true>)->Name("batched_gemm/parallel")->Arg(320);
BENCHMARK(BM_RowSoftmax<false>)->Name("row_softmax/serial")->Arg(320);
BENCHMARK(BM_RowSoftmax<true>)->Name("row_softmax/parallel")->Arg(320);
BENCHMARK(BM_SymNormalize<false>)->Name("sym_normalize/serial")->Arg(320);
BENCHMARK(BM_SymNormalize<true>)->Name("sym_normalize/parallel")->Arg(320);

BENCHMARK_MAIN();
