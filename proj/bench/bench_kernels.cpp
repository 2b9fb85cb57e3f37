// Parallel kernels vs. their serial references at the shapes the toy tracker
// actually runs (81 tokens, width 64, 4 heads, MLP ratio 4).

#include <benchmark/benchmark.h>

#include <vector>

#include "exitrack/numerics/kernels.hpp"
#include "exitrack/numerics/random.hpp"

namespace k = exitrack::num::kernels;

namespace {

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  exitrack::num::RandomState rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <auto Kernel>
void gemm_case(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = random_buffer(m * kk, 1);
  const auto b = random_buffer(kk * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    Kernel(m, n, kk, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["MAC/s"] =
      benchmark::Counter(static_cast<double>(m * n * kk), benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Kernel>
void softmax_case(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const auto x = random_buffer(rows * cols, 3);
  std::vector<float> y(rows * cols);
  for (auto _ : state) {
    Kernel(rows, cols, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({81, 192, 64});   // qkv projection
  b->Args({81, 256, 64});   // MLP up
  b->Args({81, 64, 256});   // MLP down
  b->Args({64, 32, 576});   // 3x3 corner conv
}

}  // namespace

BENCHMARK(gemm_case<k::gemm_nn<float>>)->Name("gemm_nn/parallel")->Apply(gemm_shapes);
BENCHMARK(gemm_case<k::serial::gemm_nn<float>>)->Name("gemm_nn/serial")->Apply(gemm_shapes);
BENCHMARK(gemm_case<k::gemm_nt<float>>)->Name("gemm_nt/parallel")->Args({81, 81, 16})->Args({81, 64, 192});
BENCHMARK(gemm_case<k::serial::gemm_nt<float>>)->Name("gemm_nt/serial")->Args({81, 81, 16})->Args({81, 64, 192});
BENCHMARK(gemm_case<k::gemm_tn<float>>)->Name("gemm_tn/parallel")->Args({64, 192, 81})->Args({256, 64, 81});
BENCHMARK(gemm_case<k::serial::gemm_tn<float>>)->Name("gemm_tn/serial")->Args({64, 192, 81})->Args({256, 64, 81});
BENCHMARK(softmax_case<k::softmax_rows<float>>)->Name("softmax_rows/parallel")->Args({81, 81});
BENCHMARK(softmax_case<k::serial::softmax_rows<float>>)->Name("softmax_rows/serial")->Args({81, 81});

BENCHMARK_MAIN();
