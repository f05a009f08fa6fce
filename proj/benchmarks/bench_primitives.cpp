#include <benchmark/benchmark.h>

#include <random>

#include "gcvt/fp16.hpp"
#include "gcvt/primitives.hpp"
#include "gcvt/tensor.hpp"

using namespace gcv;

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::vector<int64_t> dims) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (float& v : t.values)
    v = fp16_round(static_cast<float>(static_cast<int>(rng() % 2001)) / 1000.0f - 1.0f);
  return t;
}

SparseMatrix random_sparse(std::mt19937_64& rng, int64_t rows, int64_t cols,
                           double density) {
  Tensor d = Tensor::zeros({rows, cols});
  for (float& v : d.values)
    if (static_cast<double>(rng() % 1000) < density * 1000.0)
      v = fp16_round(static_cast<float>(static_cast<int>(rng() % 9)) - 4.0f);
  return coo_from_dense(d, 0.0f);
}

void bm_ddmm(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(1);
  Tensor x = random_tensor(rng, {n, n});
  Tensor y = random_tensor(rng, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(ddmm(x, y));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_ddmm)->Arg(16)->Arg(64)->Arg(128);

void bm_spdmm(benchmark::State& state) {
  const int64_t n = state.range(0);
  const double density = static_cast<double>(state.range(1)) / 100.0;
  std::mt19937_64 rng(2);
  SparseMatrix a = random_sparse(rng, n, n, density);
  Tensor y = random_tensor(rng, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(spdmm(a, y));
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(a.triples.size()) * n);
}
BENCHMARK(bm_spdmm)->Args({128, 1})->Args({128, 10})->Args({128, 50});

void bm_sddmm(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(3);
  SparseMatrix pattern = random_sparse(rng, n, n, 0.05);
  Tensor x = random_tensor(rng, {n, n});
  Tensor yt = random_tensor(rng, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(sddmm(pattern, x, yt));
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(pattern.triples.size()) * n);
}
BENCHMARK(bm_sddmm)->Arg(64)->Arg(256);

void bm_psvm(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(4);
  std::vector<float> a(static_cast<size_t>(n));
  for (float& v : a) v = fp16_round(static_cast<float>(rng() % 7) * 0.25f);
  Tensor y = random_tensor(rng, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(psvm(a, y));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(bm_psvm)->Arg(128)->Arg(512);

void bm_pvva(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(5);
  Tensor x = random_tensor(rng, {n, n});
  Tensor y = random_tensor(rng, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(pvva(x, y));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(bm_pvva)->Arg(128)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
