#pragma once

#include <span>
#include <utility>
#include <vector>

#include "modeflow/types.hpp"

namespace modeflow {

struct StockSignal {
    Date day;
    Ticker ticker;
    double value = 0.0;

    friend bool operator==(const StockSignal&, const StockSignal&) = default;
};

struct PortfolioWeights {
    Date day;
    std::vector<Ticker> tickers;  // the universe, in input order
    std::vector<double> weights;  // aligned with tickers
    std::vector<Ticker> holdings;  // selected tickers, best signal first

    double weight_of(const Ticker& ticker) const;

    friend bool operator==(const PortfolioWeights&, const PortfolioWeights&) = default;
};

/// Posterior-weighted performance of one new argument. Throws ShapeMismatch.
double predict_argument_score(std::span<const double> posterior, std::span<const double> perf);

struct ScoredArgument {
    int polarity = 1;
    double score = 0.0;
};

inline constexpr double kDefaultEpsilon = 1e-5;

/// Mean predicted score of bullish arguments minus that of bearish ones, each
/// mean taken over (count + epsilon). An empty side contributes 0.
double stock_signal(std::span<const ScoredArgument> scored, double epsilon = kDefaultEpsilon);

/// Number of names held for a universe of `n` stocks.
std::size_t holding_count(std::size_t n, double top_fraction);

/// Equal weight over the ceil(top_fraction * N) highest signals; ties go to
/// the lexicographically smaller ticker. Throws EmptyUniverse.
PortfolioWeights build_portfolio(const std::vector<StockSignal>& signals, double top_fraction);

/// 1/N over the whole universe.
PortfolioWeights equal_weight_portfolio(const Date& day, const std::vector<Ticker>& universe);

}  // namespace modeflow
