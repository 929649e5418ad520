#include <benchmark/benchmark.h>

#include <random>

#include "modeflow/alignment.hpp"
#include "modeflow/mode_engine.hpp"

using namespace modeflow;

namespace {

Matrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::normal_distribution<double> n;
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = n(rng);
    }
    return m;
}

std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("a" + std::to_string(i));
    return out;
}

void BM_ColdFit(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix pts = gaussian(rng, n, 32);
    const auto names = ids(n);
    const Date day = Date::parse("2024-01-02");
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_daily_modes(pts, names, day, 20, nullptr, 7));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ColdFit)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_WarmFit(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix pts = gaussian(rng, n, 32);
    const auto names = ids(n);
    const Date day = Date::parse("2024-01-02");
    const auto prev = fit_daily_modes(pts, names, day, 20, nullptr, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_daily_modes(pts, names, day.next_weekday(), 20, &prev.modes, 7));
    }
}
BENCHMARK(BM_WarmFit)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_AlignModes(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const auto k = static_cast<std::size_t>(state.range(0));
    const Matrix a = gaussian(rng, k, 64);
    const Matrix b = gaussian(rng, k, 64);
    for (auto _ : state) benchmark::DoNotOptimize(align_modes(a, b));
}
BENCHMARK(BM_AlignModes)->Arg(5)->Arg(20)->Arg(100);

void BM_BruteForceAlign(benchmark::State& state) {
    std::mt19937_64 rng(4);
    const auto k = static_cast<std::size_t>(state.range(0));
    const Matrix a = gaussian(rng, k, 8);
    const Matrix b = gaussian(rng, k, 8);
    for (auto _ : state) benchmark::DoNotOptimize(brute_force_align(a, b));
}
BENCHMARK(BM_BruteForceAlign)->Arg(4)->Arg(6);

}  // namespace
