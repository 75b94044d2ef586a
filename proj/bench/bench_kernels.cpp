// Serial reference kernels against their OpenMP versions. Both produce
// bitwise-identical results; this measures only the time.

#include <benchmark/benchmark.h>

#include <random>

#include "sparsedet/data.hpp"
#include "sparsedet/infotheory.hpp"
#include "sparsedet/kernels.hpp"

using namespace sparsedet;

namespace {

MatrixD random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  MatrixD m(r, c);
  for (auto& v : m.values()) v = g(rng);
  return m;
}

// args: batch N, embedding E, latent D
template <bool Parallel>
void BM_Affine(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), e = static_cast<std::size_t>(st.range(1)),
             d = static_cast<std::size_t>(st.range(2));
  const MatrixD x = random_matrix(n, e, 1), w = random_matrix(e, d, 2);
  const std::vector<double> b(d, 0.1);
  MatrixD out(n, d);
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::affine(x, w, b, out);
    } else {
      kernels::serial::affine(x, w, b, out);
    }
    benchmark::DoNotOptimize(out.values().data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * e * d));
}

template <bool Parallel>
void BM_GemmTN(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), e = static_cast<std::size_t>(st.range(1)),
             d = static_cast<std::size_t>(st.range(2));
  const MatrixD a = random_matrix(n, e, 3), g = random_matrix(n, d, 4);
  MatrixD out(e, d);
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::gemm_tn(a, g, out);
    } else {
      kernels::serial::gemm_tn(a, g, out);
    }
    benchmark::DoNotOptimize(out.values().data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * e * d));
}

template <bool Parallel>
void BM_GemmNT(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), e = static_cast<std::size_t>(st.range(1)),
             d = static_cast<std::size_t>(st.range(2));
  const MatrixD g = random_matrix(n, d, 5), w = random_matrix(e, d, 6);
  MatrixD out(n, e);
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::gemm_nt(g, w, out);
    } else {
      kernels::serial::gemm_nt(g, w, out);
    }
    benchmark::DoNotOptimize(out.values().data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * e * d));
}

// args: samples N, latent D
template <bool Parallel>
void BM_NmiMatrix(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), d = static_cast<std::size_t>(st.range(1));
  SynthConfig sc;
  sc.n_samples = n;
  const SynthData data = generate_synthetic(sc);
  MatrixD latents = random_matrix(n, d, 7);
  for (auto& v : latents.values()) v = v > 1.0 ? v : 0.0;
  const BinningSpec spec;
  for (auto _ : st) {
    ImportanceMatrix m = Parallel ? nmi_matrix(latents, data.factors, spec)
                                  : serial::nmi_matrix(latents, data.factors, spec);
    benchmark::DoNotOptimize(m.values.values().data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * d));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 32, 160})->Args({256, 128, 320})->Args({1024, 160, 320});
}

}  // namespace

BENCHMARK(BM_Affine<false>)->Name("affine/serial")->Apply(shapes);
BENCHMARK(BM_Affine<true>)->Name("affine/openmp")->Apply(shapes);
BENCHMARK(BM_GemmTN<false>)->Name("gemm_tn/serial")->Apply(shapes);
BENCHMARK(BM_GemmTN<true>)->Name("gemm_tn/openmp")->Apply(shapes);
BENCHMARK(BM_GemmNT<false>)->Name("gemm_nt/serial")->Apply(shapes);
BENCHMARK(BM_GemmNT<true>)->Name("gemm_nt/openmp")->Apply(shapes);
BENCHMARK(BM_NmiMatrix<false>)->Name("nmi_matrix/serial")->Args({2000, 64})->Args({4000, 320});
BENCHMARK(BM_NmiMatrix<true>)->Name("nmi_matrix/openmp")->Args({2000, 64})->Args({4000, 320});

BENCHMARK_MAIN();
