#include "modeflow/market.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "modeflow/errors.hpp"
#include "modeflow/io.hpp"

namespace modeflow {

PriceTable::PriceTable(const std::vector<PriceBar>& bars) {
    for (const auto& b : bars) {
        if (!(b.open > 0.0) || !(b.close > 0.0) || !std::isfinite(b.open) || !std::isfinite(b.close)) {
            throw ConfigError(fmt::format("non-positive price for {} on {}", b.ticker, b.day.iso()));
        }
        auto [it, inserted] = by_day_[b.day].emplace(b.ticker, b);
        if (!inserted) {
            throw ConfigError(fmt::format("duplicate bar for {} on {}", b.ticker, b.day.iso()));
        }
    }
    calendar_.reserve(by_day_.size());
    for (const auto& [day, _] : by_day_) calendar_.push_back(day);
}

PriceTable PriceTable::load_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw IoError(fmt::format("{}: empty price file", path.string()));
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"day", "ticker", "open", "close"}) {
        throw IoError(fmt::format("{}: expected header day,ticker,open,close", path.string()));
    }
    std::vector<PriceBar> bars;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw IoError(fmt::format("{}:{}: expected 4 fields", path.string(), lineno));
        try {
            bars.push_back({Date::parse(f[0]), f[1], std::stod(f[2]), std::stod(f[3])});
        } catch (const std::logic_error&) {
            throw IoError(fmt::format("{}:{}: malformed number", path.string(), lineno));
        }
    }
    return PriceTable(bars);
}

void PriceTable::save_csv(const std::filesystem::path& path) const {
    std::string out = "day,ticker,open,close\n";
    for (const auto& [day, row] : by_day_) {
        for (const auto& [ticker, b] : row) {
            out += fmt::format("{},{},{:.17g},{:.17g}\n", day.iso(), ticker, b.open, b.close);
        }
    }
    write_file_atomic(path, out);
}

std::optional<Date> PriceTable::previous_day(const Date& day) const {
    auto it = std::lower_bound(calendar_.begin(), calendar_.end(), day);
    if (it == calendar_.begin()) return std::nullopt;
    return *std::prev(it);
}

std::optional<Date> PriceTable::next_day(const Date& day) const {
    auto it = std::upper_bound(calendar_.begin(), calendar_.end(), day);
    if (it == calendar_.end()) return std::nullopt;
    return *it;
}

std::size_t PriceTable::day_index(const Date& day) const {
    auto it = std::lower_bound(calendar_.begin(), calendar_.end(), day);
    if (it == calendar_.end() || *it != day) {
        throw ConfigError(fmt::format("{} is not a trading day in the price file", day.iso()));
    }
    return static_cast<std::size_t>(it - calendar_.begin());
}

std::optional<PriceBar> PriceTable::bar(const Date& day, const Ticker& ticker) const {
    auto d = by_day_.find(day);
    if (d == by_day_.end()) return std::nullopt;
    auto t = d->second.find(ticker);
    if (t == d->second.end()) return std::nullopt;
    return t->second;
}

std::optional<double> PriceTable::close(const Date& day, const Ticker& ticker) const {
    if (auto b = bar(day, ticker)) return b->close;
    return std::nullopt;
}

std::optional<double> PriceTable::open(const Date& day, const Ticker& ticker) const {
    if (auto b = bar(day, ticker)) return b->open;
    return std::nullopt;
}

std::optional<PriceBar> PriceTable::last_bar_on_or_before(const Date& day, const Ticker& ticker) const {
    auto it = by_day_.upper_bound(day);
    while (it != by_day_.begin()) {
        --it;
        auto t = it->second.find(ticker);
        if (t != it->second.end()) return t->second;
    }
    return std::nullopt;
}

std::set<Ticker> PriceTable::tickers() const {
    std::set<Ticker> out;
    for (const auto& [_, row] : by_day_) {
        for (const auto& [ticker, __] : row) out.insert(ticker);
    }
    return out;
}

std::vector<PriceBar> PriceTable::bars() const {
    std::vector<PriceBar> out;
    for (const auto& [_, row] : by_day_) {
        for (const auto& [__, b] : row) out.push_back(b);
    }
    return out;
}

PriceTable PriceTable::truncated(const Date& last) const {
    std::vector<PriceBar> keep;
    for (const auto& b : bars()) {
        if (b.day <= last) keep.push_back(b);
    }
    return PriceTable(keep);
}

}  // namespace modeflow
