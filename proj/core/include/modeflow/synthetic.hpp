#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modeflow/market.hpp"
#include "modeflow/types.hpp"

namespace modeflow {

/// One planted narrative in a synthetic market.
struct ThemeSpec {
    std::string name;
    std::vector<std::string> vocabulary;  // theme-identifying words
    double bullish_probability = 0.5;
    /// Next-day return added to a stock per argument of this theme, signed by
    /// the argument's polarity (p * contribution).
    double return_contribution = 0.0;
};

struct SyntheticSpec {
    std::vector<ThemeSpec> themes;
    std::vector<Ticker> tickers;
    Date start_day = Date::parse("2024-01-02");
    int days = 60;
    int min_arguments_per_stock = 2;
    int max_arguments_per_stock = 4;
    int theme_words_per_argument = 4;
    int filler_words_per_argument = 3;
    double idiosyncratic_vol = 0.01;
    double market_vol = 0.01;
    double initial_price = 10.0;

    /// Three themes: the first bullish-correct (+50 bps per argument), the
    /// second pure noise, the third contrarian (-50 bps).
    static SyntheticSpec planted(int days = 60, int stocks = 30);

    void validate() const;
};

/// An argument together with the index of the theme that produced it.
struct TaggedArgument {
    InvestmentArgument argument;
    int theme = 0;

    friend bool operator==(const TaggedArgument&, const TaggedArgument&) = default;
};

/// Theme tag token embedded in every argument of the theme.
std::string theme_tag(const ThemeSpec& theme);

/// Deterministic argument stream ordered by (day, ticker, index). The trading
/// days are consecutive weekdays from `spec.start_day`.
std::vector<TaggedArgument> synthesize_arguments(const SyntheticSpec& spec, std::uint64_t seed);

struct SyntheticScenario {
    SyntheticSpec spec;
    std::vector<Date> days;
    std::vector<TaggedArgument> arguments;
    /// Close-to-close returns on day t+1 carry the planted contributions of day
    /// t's arguments; each open equals the previous close.
    PriceTable prices;
};

SyntheticScenario generate_scenario(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace modeflow
