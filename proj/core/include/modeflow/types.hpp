#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace modeflow {

using Ticker = std::string;

/// Calendar date of a trading session. Serialized as ISO-8601 (YYYY-MM-DD).
class Date {
public:
    Date() = default;
    explicit Date(std::chrono::year_month_day ymd);

    /// Throws ConfigError on anything that is not a valid YYYY-MM-DD date.
    static Date parse(std::string_view iso);

    std::string iso() const;
    std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
    std::chrono::sys_days sys_days() const { return days_; }

    /// Next weekday strictly after this date.
    Date next_weekday() const;

    friend auto operator<=>(const Date&, const Date&) = default;

private:
    std::chrono::sys_days days_{};
};

enum class Modality { Fundamental, News, Technical };

std::string_view to_string(Modality m);
/// Throws ConfigError for names outside {Fundamental, News, Technical}.
Modality parse_modality(std::string_view name);

/// One directional thesis about one stock on one day.
struct InvestmentArgument {
    Date day;
    Ticker ticker;
    int polarity = 1;  // +1 bullish, -1 bearish
    std::string rationale;
    std::string evidence;
    std::string argument_id;

    /// Validating constructor: polarity must be +1 or -1, texts non-empty.
    static InvestmentArgument make(Date day, Ticker ticker, int polarity, std::string rationale,
                                   std::string evidence, std::string argument_id);

    friend bool operator==(const InvestmentArgument&, const InvestmentArgument&) = default;
};

/// Stable identifier `YYYY-MM-DD/TICKER/index`.
std::string make_argument_id(const Date& day, std::string_view ticker, std::size_t index);

}  // namespace modeflow

template <>
struct std::hash<modeflow::Date> {
    std::size_t operator()(const modeflow::Date& d) const noexcept {
        return std::hash<long long>{}(d.sys_days().time_since_epoch().count());
    }
};
