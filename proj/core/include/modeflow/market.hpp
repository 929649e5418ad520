#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "modeflow/types.hpp"

namespace modeflow {

/// Adjusted daily bar for one ticker.
struct PriceBar {
    Date day;
    Ticker ticker;
    double open = 0.0;
    double close = 0.0;

    friend bool operator==(const PriceBar&, const PriceBar&) = default;
};

/// All bars of a run, indexed by (day, ticker). The trading calendar is the
/// sorted set of days present.
class PriceTable {
public:
    PriceTable() = default;
    /// Throws ConfigError on non-positive prices or duplicate (day, ticker).
    explicit PriceTable(const std::vector<PriceBar>& bars);

    /// CSV with header `day,ticker,open,close`.
    static PriceTable load_csv(const std::filesystem::path& path);
    void save_csv(const std::filesystem::path& path) const;

    const std::vector<Date>& calendar() const noexcept { return calendar_; }
    std::optional<Date> previous_day(const Date& day) const;
    std::optional<Date> next_day(const Date& day) const;
    /// Index of `day` in the calendar; throws ConfigError when absent.
    std::size_t day_index(const Date& day) const;

    std::optional<PriceBar> bar(const Date& day, const Ticker& ticker) const;
    std::optional<double> close(const Date& day, const Ticker& ticker) const;
    std::optional<double> open(const Date& day, const Ticker& ticker) const;
    /// Latest bar for `ticker` on or before `day`.
    std::optional<PriceBar> last_bar_on_or_before(const Date& day, const Ticker& ticker) const;

    std::set<Ticker> tickers() const;
    std::vector<PriceBar> bars() const;
    /// Copy restricted to days <= `last`.
    PriceTable truncated(const Date& last) const;

private:
    std::map<Date, std::map<Ticker, PriceBar>> by_day_;
    std::vector<Date> calendar_;
};

}  // namespace modeflow
