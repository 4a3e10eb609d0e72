#include <benchmark/benchmark.h>

#include <random>

#include "alen/kernels.hpp"

namespace {

alen::Matrix random(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    alen::Matrix m(r, c);
    for (double& v : m.data()) v = n(rng);
    return m;
}

template <alen::Matrix (*Fn)(const alen::Matrix&, const alen::Matrix&)>
void matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const alen::Matrix a = random(n, 64, 1), b = random(64, 64, 2);
    for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 64 * 64));
}

template <alen::Matrix (*Fn)(const alen::Matrix&, const alen::Matrix&)>
void matmul_tn(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const alen::Matrix a = random(n, 64, 1), b = random(n, 64, 2);
    for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 64 * 64));
}

template <alen::Matrix (*Fn)(const alen::Matrix&, std::span<const double>, const alen::Matrix&)>
void whiten(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    alen::Matrix l = random(32, 32, 3);
    for (std::size_t i = 0; i < 32; ++i) {
        for (std::size_t j = i + 1; j < 32; ++j) l(i, j) = 0.0;
        l(i, i) = 2.0 + std::abs(l(i, i));
    }
    const std::vector<double> mean(32, 0.1);
    const alen::Matrix x = random(n, 32, 4);
    for (auto _ : state) benchmark::DoNotOptimize(Fn(l, mean, x));
}

}  // namespace

BENCHMARK(matmul<alen::kernels::reference::matmul>)->Name("matmul/reference")->Range(64, 8192);
BENCHMARK(matmul<alen::kernels::matmul>)->Name("matmul/omp")->Range(64, 8192);
BENCHMARK(matmul_tn<alen::kernels::reference::matmul_tn>)->Name("matmul_tn/reference")->Range(64, 8192);
BENCHMARK(matmul_tn<alen::kernels::matmul_tn>)->Name("matmul_tn/omp")->Range(64, 8192);
BENCHMARK(whiten<alen::kernels::reference::whiten_rows>)->Name("whiten_rows/reference")->Range(64, 8192);
BENCHMARK(whiten<alen::kernels::whiten_rows>)->Name("whiten_rows/omp")->Range(64, 8192);

BENCHMARK_MAIN();
