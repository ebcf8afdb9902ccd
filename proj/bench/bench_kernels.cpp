// Serial reference vs OpenMP kernels. Each pair runs the same inputs; pass
// --benchmark_filter=Cross to narrow the run.

#include <benchmark/benchmark.h>

#include <random>

#include "uncal/kernels.hpp"
#include "uncal/repr.hpp"
#include "uncal/trajspace.hpp"
#include "uncal/trajspace_gen.hpp"

namespace {

using namespace uncal;

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (auto& v : m.values()) {
        v = normal(rng);
    }
    return m;
}

template <auto Fn>
void cross_product(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = gaussian(n, 128, 1);
    const auto b = gaussian(n, 128, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(a, b));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * 128 * 128);
}

template <auto Fn>
void center_columns(benchmark::State& state) {
    const auto x = gaussian(static_cast<std::size_t>(state.range(0)), 512, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(x));
    }
}

template <auto Fn>
void matvec(benchmark::State& state) {
    const auto x = gaussian(static_cast<std::size_t>(state.range(0)), 1024, 4);
    const std::vector<double> v(1024, 0.5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(x, v));
    }
}

template <auto Fn>
void matvec_transposed(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = gaussian(n, 1024, 4);
    const std::vector<double> v(n, 0.5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(x, v));
    }
}

template <auto Fn>
void frobenius(benchmark::State& state) {
    const auto x = gaussian(static_cast<std::size_t>(state.range(0)), 1024, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Fn(x));
    }
}

template <bool Parallel>
void theory_batch(benchmark::State& state) {
    const auto spaces = trajspace::random_spaces(7, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        if constexpr (Parallel) {
            benchmark::DoNotOptimize(trajspace::verify_batch(spaces, 1.0));
        } else {
            benchmark::DoNotOptimize(trajspace::verify_batch_serial(spaces, 1.0));
        }
    }
}

void linear_cka(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = gaussian(n, 256, 6);
    const auto b = gaussian(n, 256, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(repr::linear_cka(a, b));
    }
}

}  // namespace

BENCHMARK(cross_product<kernels::serial::cross_product>)->Name("Cross/serial")->Arg(512)->Arg(2048)->UseRealTime();
BENCHMARK(cross_product<kernels::cross_product>)->Name("Cross/omp")->Arg(512)->Arg(2048)->UseRealTime();
BENCHMARK(center_columns<kernels::serial::center_columns>)->Name("Center/serial")->Arg(4096)->UseRealTime();
BENCHMARK(center_columns<kernels::center_columns>)->Name("Center/omp")->Arg(4096)->UseRealTime();
BENCHMARK(matvec<kernels::serial::matvec>)->Name("Matvec/serial")->Arg(8192)->UseRealTime();
BENCHMARK(matvec<kernels::matvec>)->Name("Matvec/omp")->Arg(8192)->UseRealTime();
BENCHMARK(matvec_transposed<kernels::serial::matvec_transposed>)->Name("MatvecT/serial")->Arg(8192)->UseRealTime();
BENCHMARK(matvec_transposed<kernels::matvec_transposed>)->Name("MatvecT/omp")->Arg(8192)->UseRealTime();
BENCHMARK(frobenius<kernels::serial::frobenius_sq>)->Name("Frobenius/serial")->Arg(8192)->UseRealTime();
BENCHMARK(frobenius<kernels::frobenius_sq>)->Name("Frobenius/omp")->Arg(8192)->UseRealTime();
BENCHMARK(theory_batch<false>)->Name("TheoryBatch/serial")->Arg(10000)->UseRealTime();
BENCHMARK(theory_batch<true>)->Name("TheoryBatch/omp")->Arg(10000)->UseRealTime();
BENCHMARK(linear_cka)->Name("CKA/omp")->Arg(1024)->UseRealTime();

BENCHMARK_MAIN();
