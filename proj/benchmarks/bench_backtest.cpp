#include <benchmark/benchmark.h>

#include <random>

#include "modeflow/backtest.hpp"
#include "modeflow/signal.hpp"

using namespace modeflow;

namespace {

struct Market {
    PriceTable prices;
    std::vector<PortfolioWeights> weights;
};

Market random_market(std::size_t days, std::size_t stocks) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> shock(0.0, 0.01);
    std::vector<Ticker> universe;
    for (std::size_t s = 0; s < stocks; ++s) universe.push_back("S" + std::to_string(s));
    std::vector<double> level(stocks, 100.0);
    std::vector<PriceBar> bars;
    Market m;
    Date day = Date::parse("2023-01-02");
    for (std::size_t t = 0; t < days; ++t, day = day.next_weekday()) {
        std::vector<StockSignal> signals;
        for (std::size_t s = 0; s < stocks; ++s) {
            const double open = level[s];
            level[s] *= 1.0 + shock(rng);
            bars.push_back({day, universe[s], open, level[s]});
            signals.push_back({day, universe[s], shock(rng)});
        }
        m.weights.push_back(build_portfolio(signals, 0.2));
    }
    m.prices = PriceTable(bars);
    return m;
}

void BM_Simulate(benchmark::State& state) {
    const auto m = random_market(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(simulate(m.weights, m.prices, 1.5e-4));
}
BENCHMARK(BM_Simulate)->Args({250, 100})->Args({1000, 500})->Unit(benchmark::kMillisecond);

void BM_Spearman(benchmark::State& state) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n;
    std::vector<double> x(static_cast<std::size_t>(state.range(0))), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = n(rng);
        y[i] = x[i] + n(rng);
    }
    for (auto _ : state) benchmark::DoNotOptimize(spearman(x, y));
}
BENCHMARK(BM_Spearman)->Arg(100)->Arg(5000);

}  // namespace
