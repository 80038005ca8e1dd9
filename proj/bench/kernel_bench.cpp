// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against the OpenMP kernels.
#include <benchmark/benchmark.h>

#include <random>

#include "layerfreeze/kernels.hpp"

namespace {

lf::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return lf::Matrix(r, c, std::move(v));
}

struct Operands {
  lf::Matrix x, w, delta;
  std::vector<double> bias;
  explicit Operands(std::size_t n)
      : x(random_matrix(n, n, 1)), w(random_matrix(n, n, 2)), delta(random_matrix(n, n, 3)),
        bias(n, 0.5) {}
};

template <class F>
void run(benchmark::State& state, F f) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands ops(n);
  for (auto _ : state) benchmark::DoNotOptimize(f(ops));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

void BM_forward_serial(benchmark::State& s) {
  run(s, [](Operands& o) { return lf::kernels::serial::dense_forward(o.x, o.w, o.bias); });
}
void BM_forward_parallel(benchmark::State& s) {
  run(s, [](Operands& o) { return lf::kernels::parallel::dense_forward(o.x, o.w, o.bias); });
}
void BM_weight_grad_serial(benchmark::State& s) {
  run(s, [](Operands& o) { return lf::kernels::serial::weight_grad(o.delta, o.x); });
}
void BM_weight_grad_parallel(benchmark::State& s) {
  run(s, [](Operands& o) { return lf::kernels::parallel::weight_grad(o.delta, o.x); });
}
void BM_input_grad_serial(benchmark::State& s) {
  run(s, [](Operands& o) { return lf::kernels::serial::input_grad(o.delta, o.w); });
}
void BM_input_grad_parallel(benchmark::State& s) {
  run(s, [](Operands& o) { return lf::kernels::parallel::input_grad(o.delta, o.w); });
}

}  // namespace

BENCHMARK(BM_forward_serial)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_forward_parallel)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_weight_grad_serial)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_weight_grad_parallel)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_input_grad_serial)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_input_grad_parallel)->RangeMultiplier(4)->Range(16, 256);

BENCHMARK_MAIN();
