#include "modeflow/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "modeflow/errors.hpp"
#include "modeflow/numeric.hpp"

namespace modeflow {

double PortfolioWeights::weight_of(const Ticker& ticker) const {
    for (std::size_t i = 0; i < tickers.size(); ++i) {
        if (tickers[i] == ticker) return weights[i];
    }
    return 0.0;
}

double predict_argument_score(std::span<const double> posterior, std::span<const double> perf) {
    if (posterior.size() != perf.size()) {
        throw ShapeMismatch(fmt::format("posterior has {} modes, performance has {}", posterior.size(), perf.size()));
    }
    std::vector<double> terms(posterior.size());
    for (std::size_t k = 0; k < terms.size(); ++k) terms[k] = posterior[k] * perf[k];
    return label_invariant_sum(std::move(terms));
}

double stock_signal(std::span<const ScoredArgument> scored, double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    double bull = 0.0, bear = 0.0;
    std::size_t n_bull = 0, n_bear = 0;
    for (const auto& s : scored) {
        if (s.polarity > 0) {
            bull += s.score;
            ++n_bull;
        } else {
            bear += s.score;
            ++n_bear;
        }
    }
    return bull / (static_cast<double>(n_bull) + epsilon) - bear / (static_cast<double>(n_bear) + epsilon);
}

std::size_t holding_count(std::size_t n, double top_fraction) {
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
        throw ConfigError(fmt::format("top fraction {} outside (0, 1]", top_fraction));
    }
    const auto h = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(h, n == 0 ? 0 : 1, n);
}

PortfolioWeights build_portfolio(const std::vector<StockSignal>& signals, double top_fraction) {
    if (signals.empty()) throw EmptyUniverse("no stocks to rank");
    const std::size_t h = holding_count(signals.size(), top_fraction);
    std::vector<std::size_t> order(signals.size());
    std::iota(order.begin(), order.end(), 0);
    for (const auto& s : signals) {
        if (!std::isfinite(s.value)) throw NumericalFailure(fmt::format("{}: non-finite signal", s.ticker));
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (signals[a].value != signals[b].value) return signals[a].value > signals[b].value;
        return signals[a].ticker < signals[b].ticker;
    });
    PortfolioWeights w;
    w.day = signals.front().day;
    for (const auto& s : signals) w.tickers.push_back(s.ticker);
    w.weights.assign(signals.size(), 0.0);
    for (std::size_t r = 0; r < h; ++r) {
        w.weights[order[r]] = 1.0 / static_cast<double>(h);
        w.holdings.push_back(signals[order[r]].ticker);
    }
    return w;
}

PortfolioWeights equal_weight_portfolio(const Date& day, const std::vector<Ticker>& universe) {
    if (universe.empty()) throw EmptyUniverse("no stocks to hold");
    PortfolioWeights w;
    w.day = day;
    w.tickers = universe;
    w.weights.assign(universe.size(), 1.0 / static_cast<double>(universe.size()));
    w.holdings = universe;
    return w;
}

}  // namespace modeflow
