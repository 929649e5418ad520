#include "modeflow/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "modeflow/errors.hpp"

namespace modeflow {

namespace {

// Portable draws on top of mt19937_64 (whose output sequence is fixed by the
// standard, unlike the std:: distributions).
class Draws {
public:
    explicit Draws(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
    int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo + 1))); }
    bool bernoulli(double p) { return uniform() < p; }
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// `count` distinct indices from [0, n) in draw order.
    std::vector<std::size_t> sample(std::size_t n, std::size_t count) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        count = std::min(count, n);
        for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + below(n - i)]);
        idx.resize(count);
        return idx;
    }

private:
    std::mt19937_64 engine_;
};

const std::vector<std::string> kFiller = {
    "market", "company", "shares", "analysts", "recent", "outlook", "session", "sector",
    "investors", "report", "quarter", "price", "trend", "desk", "coverage", "week",
};

std::vector<Date> trading_days(const SyntheticSpec& spec) {
    std::vector<Date> days;
    Date d = spec.start_day;
    const auto wd = std::chrono::weekday{d.sys_days()};
    if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) d = d.next_weekday();
    for (int i = 0; i < spec.days; ++i) {
        days.push_back(d);
        d = d.next_weekday();
    }
    return days;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

}  // namespace

SyntheticSpec SyntheticSpec::planted(int days, int stocks) {
    SyntheticSpec spec;
    spec.days = days;
    for (int i = 0; i < stocks; ++i) spec.tickers.push_back(fmt::format("S{:03d}", i));
    spec.themes = {
        {"earnings",
         {"earnings", "revision", "guidance", "margin", "backlog", "orders", "upgrade", "beat",
          "pricing", "volume"},
         0.6,
         0.005},
        {"policy",
         {"policy", "stimulus", "liquidity", "subsidy", "regulator", "easing", "fiscal", "quota",
          "tariff", "approval"},
         0.5,
         0.0},
        {"chatter",
         {"rumor", "retail", "forum", "hype", "viral", "chatter", "speculative", "influencer",
          "frenzy", "buzz"},
         0.4,
         -0.005},
    };
    return spec;
}

void SyntheticSpec::validate() const {
    if (themes.empty()) throw ConfigError("synthetic spec needs at least one theme");
    if (tickers.empty()) throw ConfigError("synthetic spec needs at least one ticker");
    if (days < 1) throw ConfigError("synthetic spec needs at least one day");
    if (min_arguments_per_stock < 0 || max_arguments_per_stock < min_arguments_per_stock) {
        throw ConfigError("synthetic spec has an invalid argument-count range");
    }
    for (const auto& t : themes) {
        if (t.name.empty() || t.vocabulary.empty()) {
            throw ConfigError("synthetic themes need a name and a vocabulary");
        }
        if (t.bullish_probability < 0.0 || t.bullish_probability > 1.0) {
            throw ConfigError("theme bullish probability must lie in [0, 1]");
        }
    }
    if (!(initial_price > 0.0)) throw ConfigError("initial price must be positive");
}

std::string theme_tag(const ThemeSpec& theme) { return "theme_" + theme.name; }

std::vector<TaggedArgument> synthesize_arguments(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Draws rng(seed);
    std::vector<TaggedArgument> out;
    const auto words_rationale = static_cast<std::size_t>(spec.theme_words_per_argument / 2);
    for (const Date& day : trading_days(spec)) {
        for (const Ticker& ticker : spec.tickers) {
            const int count = rng.between(spec.min_arguments_per_stock, spec.max_arguments_per_stock);
            for (int i = 0; i < count; ++i) {
                const auto theme_index = rng.below(spec.themes.size());
                const ThemeSpec& theme = spec.themes[theme_index];
                const int polarity = rng.bernoulli(theme.bullish_probability) ? 1 : -1;

                auto picks = rng.sample(theme.vocabulary.size(),
                                        static_cast<std::size_t>(spec.theme_words_per_argument));
                std::vector<std::string> r_words{theme_tag(theme)};
                std::vector<std::string> e_words;
                for (std::size_t w = 0; w < picks.size(); ++w) {
                    (w < words_rationale ? r_words : e_words).push_back(theme.vocabulary[picks[w]]);
                }
                r_words.push_back(polarity > 0 ? "upside" : "downside");
                r_words.push_back("for");
                r_words.push_back(ticker);
                for (int f = 0; f < spec.filler_words_per_argument; ++f) {
                    e_words.push_back(kFiller[rng.below(kFiller.size())]);
                }
                e_words.push_back("observed");

                out.push_back({InvestmentArgument::make(day, ticker, polarity, join_words(r_words),
                                                        join_words(e_words),
                                                        make_argument_id(day, ticker, static_cast<std::size_t>(i))),
                               static_cast<int>(theme_index)});
            }
        }
    }
    return out;
}

SyntheticScenario generate_scenario(const SyntheticSpec& spec, std::uint64_t seed) {
    SyntheticScenario sc;
    sc.spec = spec;
    sc.days = trading_days(spec);
    sc.arguments = synthesize_arguments(spec, seed);

    // Planted next-day drift per (day, ticker).
    std::map<std::pair<Date, Ticker>, double> drift;
    for (const auto& ta : sc.arguments) {
        const auto& a = ta.argument;
        drift[{a.day, a.ticker}] += a.polarity * spec.themes[static_cast<std::size_t>(ta.theme)].return_contribution;
    }

    Draws rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<PriceBar> bars;
    std::map<Ticker, double> close;
    for (const auto& t : spec.tickers) close[t] = spec.initial_price;
    for (std::size_t d = 0; d < sc.days.size(); ++d) {
        const Date& day = sc.days[d];
        if (d == 0) {
            for (const auto& t : spec.tickers) bars.push_back({day, t, spec.initial_price, spec.initial_price});
            continue;
        }
        const Date& prev = sc.days[d - 1];
        const double market = spec.market_vol * rng.normal();
        for (const auto& t : spec.tickers) {
            double r = market + spec.idiosyncratic_vol * rng.normal();
            if (auto it = drift.find({prev, t}); it != drift.end()) r += it->second;
            r = std::max(r, -0.5);
            const double open = close[t];
            close[t] = open * (1.0 + r);
            bars.push_back({day, t, open, close[t]});
        }
    }
    sc.prices = PriceTable(bars);
    return sc;
}

}  // namespace modeflow
