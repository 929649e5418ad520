#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modeflow/market.hpp"
#include "modeflow/signal.hpp"

namespace modeflow {

enum class Execution {
    /// Weights decided on day t trade at the open of t+1 and are held to the
    /// open of t+2.
    OpenToOpen,
    /// Sensitivity variant: enter at the close of t+1, hold to the close of t+2.
    CloseToClose,
};

struct SimulationEvent {
    Date day;
    Ticker ticker;
    std::string message;
};

struct SimulationResult {
    std::vector<Date> decision_days;       // day t of the weights behind each return
    std::vector<double> returns;           // net of costs
    std::vector<double> turnover;
    std::vector<double> costs;
    std::vector<double> wealth;            // wealth[0] = 1, wealth[i+1] after returns[i]
    std::vector<double> benchmark_returns;  // equal-weight universe, same windows
    std::vector<SimulationEvent> events;
};

/// Daily-rebalanced long-only simulation with proportional costs. Turnover is
/// the L1 distance between the new weights and the previous weights drifted by
/// their realized returns. A held ticker missing its exit price is exited at
/// its last available price; one missing its entry price is held as cash.
SimulationResult simulate(const std::vector<PortfolioWeights>& weights, const PriceTable& prices,
                          double cost_rate, Execution execution = Execution::OpenToOpen);

/// One day of a factor evaluation: signal and next-day return per stock.
struct CorrelationDay {
    Date day;
    std::vector<double> signal;
    std::vector<double> forward_return;
};

struct CorrelationMetrics {
    double ic = 0.0;
    std::optional<double> icir;  // undefined when the daily IC has zero spread
    double rank_ic = 0.0;
    std::optional<double> rank_icir;
    std::vector<Date> days;            // days that entered the averages
    std::vector<double> daily_ic;
    std::vector<double> daily_rank_ic;
    std::size_t skipped_constant_signal = 0;
    std::size_t skipped_degenerate = 0;  // constant returns
};

/// Mean and mean/std (population) of daily Pearson and Spearman correlations.
/// Requires at least two usable days of at least three stocks each; throws
/// EmptyInput otherwise.
CorrelationMetrics correlation_metrics(std::span<const CorrelationDay> days);

double pearson(std::span<const double> x, std::span<const double> y);
/// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> v);
double spearman(std::span<const double> x, std::span<const double> y);

struct PortfolioMetrics {
    double annualized_return = 0.0;
    double max_drawdown = 0.0;
    std::optional<double> sharpe;  // undefined for zero-variance excess returns
};

/// AR = A * mean(R); MDD over the compounded wealth path starting at 1;
/// SR = mean(R - rf) / std(R - rf) * sqrt(A) with the population std.
PortfolioMetrics portfolio_metrics(std::span<const double> returns, double periods_per_year = 252.0,
                                   double risk_free = 0.0);

/// Largest peak-to-trough decline of a wealth path, in [0, 1].
double max_drawdown(std::span<const double> wealth);

std::vector<double> compound(std::span<const double> returns, double initial = 1.0);

struct BacktestReport {
    SimulationResult simulation;
    std::optional<CorrelationMetrics> correlation;
    PortfolioMetrics portfolio;
    PortfolioMetrics benchmark;
    PortfolioMetrics excess;  // portfolio minus equal-weight benchmark, per day
    std::optional<PortfolioMetrics> index_benchmark;
    double periods_per_year = 252.0;

    std::string to_json() const;
    std::string to_text() const;
    /// wealth.csv (day,return,wealth,turnover,benchmark_return) and ic.csv
    /// (day,ic,rank_ic).
    void write_series(const std::filesystem::path& dir) const;
};

struct BacktestOptions {
    double cost_rate = 1.5e-4;
    double periods_per_year = 252.0;
    double risk_free = 0.0;
    Execution execution = Execution::OpenToOpen;
    /// Optional index series (day -> level) for an additional benchmark.
    std::vector<std::pair<Date, double>> index_levels;
};

BacktestReport run_backtest(const std::vector<PortfolioWeights>& weights,
                            std::span<const CorrelationDay> correlation_days,
                            const PriceTable& prices, const BacktestOptions& options);

}  // namespace modeflow
