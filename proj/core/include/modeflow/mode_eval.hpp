#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "modeflow/alignment.hpp"
#include "modeflow/market.hpp"
#include "modeflow/numeric.hpp"
#include "modeflow/types.hpp"

namespace modeflow {

/// One-day excess returns: each stock's simple return minus the
/// cross-sectional mean. Throws ShapeMismatch on length mismatch and
/// MissingPrice on a non-positive or non-finite close.
std::vector<double> excess_returns(std::span<const double> closes_t,
                                   std::span<const double> closes_prev);

/// Excess returns over a universe from a price table.
struct CrossSection {
    std::vector<Ticker> tickers;    // stocks priced on both days
    std::vector<double> returns;    // aligned with tickers
    std::vector<Ticker> excluded;   // missing a bar on either day

    std::optional<double> of(const Ticker& ticker) const;
};

/// Stocks lacking a bar on either day are dropped from the cross-section, or
/// raise MissingPrice when `strict` is set.
CrossSection realized_excess_returns(const PriceTable& prices, const std::vector<Ticker>& universe,
                                     const Date& prev_day, const Date& day, bool strict = false);

inline double realized_score(int polarity, double excess_return) {
    return polarity * excess_return;
}

/// Responsibility-weighted mean score per mode; a mode whose responsibility
/// mass is below 1e-12 scores 0.
std::vector<double> aggregate_mode_scores(const Matrix& responsibilities,
                                          std::span<const double> scores);

inline constexpr double kDeadModeMass = 1e-12;

/// Long-term per-mode performance, carried across days through alignments.
struct PerfState {
    Date day;                            // day of the modes these values label
    std::vector<double> perf;            // one per mode
    std::vector<std::uint64_t> lineage;  // lineage id per mode
    std::map<std::uint64_t, double> archived;  // retired lineage -> final perf
    std::uint64_t next_lineage = 0;

    friend bool operator==(const PerfState&, const PerfState&) = default;
};

/// Exponential-moving-average update. `prev` labels the modes on the `from`
/// side of `alignment`, `agg` the modes on its `to` side. Matched modes blend
/// memory and today's score with weight `lambda`; newborn modes start from
/// zero memory; retired previous lineages are archived with their last value.
/// Without `prev` every mode is newborn.
PerfState update_perf(const PerfState* prev, const ModeAlignment* alignment,
                      std::span<const double> agg, double lambda, const Date& day);

}  // namespace modeflow
