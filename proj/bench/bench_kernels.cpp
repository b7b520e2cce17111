// Serial reference vs OpenMP kernels, plus end-to-end batch gradient cost.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "urs/kernels.hpp"
#include "urs/rng.hpp"
#include "urs/training.hpp"

namespace {

using namespace urs;

Mat<float> random_mat(int r, int c, std::uint64_t seed) {
  Mat<float> m(r, c);
  Rng rng(seed);
  for (float& x : m.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return m;
}

template <void (*Gemm)(const Mat<float>&, const Mat<float>&, Mat<float>&, bool)>
void run_gemm(benchmark::State& st, bool transposed_b) {
  const int m = static_cast<int>(st.range(0)), k = static_cast<int>(st.range(1)), n = static_cast<int>(st.range(2));
  const Mat<float> a = random_mat(m, k, 1);
  const Mat<float> b = transposed_b ? random_mat(n, k, 2) : random_mat(k, n, 2);
  Mat<float> c(m, n);
  for (auto _ : st) {
    Gemm(a, b, c, false);
    benchmark::DoNotOptimize(c.data.data());
  }
  st.counters["GMAC/s"] = benchmark::Counter(static_cast<double>(m) * k * n * st.iterations() / 1e9,
                                             benchmark::Counter::kIsRate);
}

void BM_gemm_nn_serial(benchmark::State& st) { run_gemm<kernels::serial::gemm_nn<float>>(st, false); }
void BM_gemm_nn_parallel(benchmark::State& st) { run_gemm<kernels::parallel::gemm_nn<float>>(st, false); }
void BM_gemm_nt_serial(benchmark::State& st) { run_gemm<kernels::serial::gemm_nt<float>>(st, true); }
void BM_gemm_nt_parallel(benchmark::State& st) { run_gemm<kernels::parallel::gemm_nt<float>>(st, true); }

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({11, 32, 512})->Args({110, 128, 128})->Args({1000, 128, 512})->Unit(benchmark::kMicrosecond);
}

BENCHMARK(BM_gemm_nn_serial)->Apply(shapes);
BENCHMARK(BM_gemm_nn_parallel)->Apply(shapes);
BENCHMARK(BM_gemm_nt_serial)->Apply(shapes);
BENCHMARK(BM_gemm_nt_parallel)->Apply(shapes);

// One REINFORCE step's gradient on a desk-sized TSP batch, by thread count.
void BM_policy_gradient(benchmark::State& st) {
  PolicyConfig cfg;
  cfg.d = 32;
  cfg.layers = 3;
  PolicyParams<float> p(cfg);
  p.init(1);
  std::vector<UnifiedInstance> batch;
  std::vector<std::uint64_t> seeds;
  for (int b = 0; b < 16; ++b) {
    batch.push_back(generate_instance(make_spec("tsp", 10), 100 + b));
    seeds.push_back(b);
  }
  const int prev = omp_get_max_threads();
  omp_set_num_threads(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(policy_gradient<float>(p, batch, seeds).terms.loss);
  omp_set_num_threads(prev);
  st.counters["instances/s"] = benchmark::Counter(16.0 * st.iterations(), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_policy_gradient)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
