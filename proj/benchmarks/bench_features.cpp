#include <benchmark/benchmark.h>

#include <random>

#include "protomil/features.hpp"

using namespace protomil;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

// Args: instances per bag K, feature width L. D = 24 prototypes.
void BM_PoolDistances(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  const auto L = static_cast<std::size_t>(state.range(1));
  const Bag bag{"b", 1, random_matrix(K, L, 1)};
  const Matrix protos = random_matrix(24, L, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(pool_distances(bag, protos, AggregatorSet::all()));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(K * 24));
}
BENCHMARK(BM_PoolDistances)->Args({5, 166})->Args({64, 166})->Args({10, 230})->Args({10, 784});

void BM_LayerNormForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix x = random_matrix(2, n, 3);
  for (auto _ : state) {
    const NormOutput out = layer_norm_forward(x.row(0));
    benchmark::DoNotOptimize(layer_norm_backward(x.row(1), out.phi_norm, out.stats));
  }
}
BENCHMARK(BM_LayerNormForwardBackward)->Arg(24)->Arg(72)->Arg(720);

}  // namespace
