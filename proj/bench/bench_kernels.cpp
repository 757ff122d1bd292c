#include <benchmark/benchmark.h>

#include <algorithm>

#include "mhnet/kernels.hpp"

using namespace mhnet;
using kernels::SparseDistribution;

namespace {

std::vector<SparseDistribution> random_distributions(std::size_t n, std::uint32_t communities, Rng& rng) {
  std::vector<SparseDistribution> out(n);
  for (auto& d : out) {
    std::vector<std::uint32_t> idx;
    for (std::uint32_t c = 0; c < communities; ++c)
      if (uniform01(rng) < 0.1) idx.push_back(c);
    if (idx.empty()) idx.push_back(static_cast<std::uint32_t>(uniform_index(rng, communities)));
    std::vector<double> w(idx.size());
    double s = 0.0;
    for (double& x : w) s += (x = uniform01(rng) + 1e-3);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      d.index.push_back(idx[i]);
      d.sqrt_prob.push_back(std::sqrt(w[i] / s));
    }
  }
  return out;
}

template <bool Parallel>
void BM_HellingerMatrix(benchmark::State& state) {
  Rng rng(7);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto rows = random_distributions(n, 200, rng);
  const auto cols = random_distributions(n * 4, 200, rng);
  for (auto _ : state) {
    auto m = Parallel ? kernels::parallel::hellinger_matrix(rows, cols) : kernels::serial::hellinger_matrix(rows, cols);
    benchmark::DoNotOptimize(m.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * 4));
}

template <bool Parallel>
void BM_Conv1dBatch(benchmark::State& state) {
  Rng rng(11);
  const ConvSpec spec{3, 25, 1, PoolKind::none, 1};
  Tensor2 W(spec.filters, spec.window * 50);
  init_uniform(W, 0.1, rng);
  std::vector<double> b(spec.filters, 0.0);
  std::vector<Tensor2> inputs;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    Tensor2 x(100, 50);
    init_uniform(x, 1.0, rng);
    inputs.push_back(std::move(x));
  }
  for (auto _ : state) {
    auto out = Parallel ? kernels::parallel::conv1d_batch(inputs, spec, W, b) : kernels::serial::conv1d_batch(inputs, spec, W, b);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_HellingerMatrix<false>)->Name("hellinger_matrix/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_HellingerMatrix<true>)->Name("hellinger_matrix/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv1dBatch<false>)->Name("conv1d_batch/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv1dBatch<true>)->Name("conv1d_batch/parallel")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
