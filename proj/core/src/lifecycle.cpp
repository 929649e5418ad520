#include "modeflow/lifecycle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "modeflow/errors.hpp"
#include "modeflow/io.hpp"
#include "modeflow/numeric.hpp"

namespace modeflow {

namespace {

constexpr ModeCategory kAllCategories[] = {ModeCategory::LongTerm, ModeCategory::BullEffective,
                                           ModeCategory::BearEffective, ModeCategory::Ineffective};

Regime parse_regime(std::string_view label) {
    std::string s(label);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "bull") return Regime::Bull;
    if (s == "bear") return Regime::Bear;
    throw ConfigError(fmt::format("unknown regime label '{}'", label));
}

}  // namespace

RegimeCalendar::RegimeCalendar(std::vector<RegimePeriod> periods) : periods_(std::move(periods)) {
    std::sort(periods_.begin(), periods_.end(),
              [](const RegimePeriod& a, const RegimePeriod& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < periods_.size(); ++i) {
        if (periods_[i].end < periods_[i].start) {
            throw ConfigError(fmt::format("regime period {}..{} ends before it starts", periods_[i].start.iso(),
                                          periods_[i].end.iso()));
        }
        if (i > 0 && !(periods_[i - 1].end < periods_[i].start)) {
            throw ConfigError(fmt::format("regime periods overlap at {}", periods_[i].start.iso()));
        }
    }
}

RegimeCalendar RegimeCalendar::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("{}: cannot open regime calendar", path.string()));
    std::string line;
    std::vector<RegimePeriod> periods;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto cells = split_csv_line(line);
        if (header) {
            header = false;
            if (cells.size() != 3 || cells[0] != "start" || cells[1] != "end" || cells[2] != "label") {
                throw ConfigError(fmt::format("{}: expected header start,end,label", path.string()));
            }
            continue;
        }
        if (cells.size() != 3) throw ConfigError(fmt::format("{}:{}: expected 3 fields", path.string(), line_no));
        periods.push_back({Date::parse(cells[0]), Date::parse(cells[1]), parse_regime(cells[2])});
    }
    return RegimeCalendar(std::move(periods));
}

std::optional<Regime> RegimeCalendar::regime_of(const Date& day) const {
    for (const auto& p : periods_) {
        if (!(day < p.start) && !(p.end < day)) return p.regime;
    }
    return std::nullopt;
}

std::string_view to_string(ModeCategory c) {
    switch (c) {
        case ModeCategory::LongTerm: return "long_term";
        case ModeCategory::BullEffective: return "bull_effective";
        case ModeCategory::BearEffective: return "bear_effective";
        case ModeCategory::Ineffective: return "ineffective";
    }
    return "ineffective";
}

ModeCategory classify_series(std::span<const PerfObservation> history, const RegimeCalendar& calendar,
                             const ClassificationThresholds& thresholds) {
    if (history.empty()) return ModeCategory::Ineffective;
    std::size_t positive = 0, bull = 0, bull_pos = 0, bear = 0, bear_pos = 0;
    for (const auto& o : history) {
        const bool up = o.perf > 0.0;
        positive += up;
        if (const auto r = calendar.regime_of(o.day)) {
            if (*r == Regime::Bull) {
                ++bull;
                bull_pos += up;
            } else {
                ++bear;
                bear_pos += up;
            }
        }
    }
    auto frac = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
    if (frac(positive, history.size()) > thresholds.long_term) return ModeCategory::LongTerm;
    if (bull > 0 && frac(bull_pos, bull) > thresholds.regime) return ModeCategory::BullEffective;
    if (bear > 0 && frac(bear_pos, bear) > thresholds.regime) return ModeCategory::BearEffective;
    return ModeCategory::Ineffective;
}

std::vector<ModeLifecycleRecord> classify_modes(const PerfHistory& history, const RegimeCalendar& calendar,
                                                const ClassificationThresholds& thresholds) {
    std::vector<ModeLifecycleRecord> out;
    for (const auto& [lineage, series] : history) {
        ModeLifecycleRecord rec;
        rec.lineage = lineage;
        rec.history = series;
        rec.active_days = series.size();
        std::size_t positive = 0, bull = 0, bull_pos = 0, bear = 0, bear_pos = 0;
        for (const auto& o : series) {
            positive += o.perf > 0.0;
            if (calendar.empty()) continue;
            const auto r = calendar.regime_of(o.day);
            if (!r) throw UncoveredDays(fmt::format("{} is outside the regime calendar", o.day.iso()));
            if (*r == Regime::Bull) {
                ++bull;
                bull_pos += o.perf > 0.0;
            } else {
                ++bear;
                bear_pos += o.perf > 0.0;
            }
        }
        if (!series.empty()) rec.positive_fraction = static_cast<double>(positive) / static_cast<double>(series.size());
        if (bull > 0) rec.bull_positive_fraction = static_cast<double>(bull_pos) / static_cast<double>(bull);
        if (bear > 0) rec.bear_positive_fraction = static_cast<double>(bear_pos) / static_cast<double>(bear);
        rec.category = classify_series(series, calendar, thresholds);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<double> softmax(std::span<const double> values) {
    if (values.empty()) return {};
    const double m = *std::max_element(values.begin(), values.end());
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::exp(values[i] - m);
    const double s = label_invariant_sum(out);
    for (double& v : out) v /= s;
    return out;
}

std::vector<DayShares> daily_shares(std::span<const DayPerf> perf_by_day) {
    std::vector<DayShares> out;
    for (const auto& d : perf_by_day) {
        if (d.lineage.size() != d.perf.size()) throw ShapeMismatch("lineage and perf lengths differ");
        out.push_back({d.day, d.lineage, softmax(d.perf)});
    }
    return out;
}

std::vector<CategoryShare> category_shares(std::span<const DayShares> shares,
                                           const std::vector<ModeLifecycleRecord>& records) {
    std::map<std::uint64_t, ModeCategory> category;
    for (const auto& r : records) category[r.lineage] = r.category;
    std::vector<CategoryShare> out;
    for (const auto& d : shares) {
        std::map<ModeCategory, double> sum;
        for (std::size_t i = 0; i < d.lineage.size(); ++i) {
            const auto it = category.find(d.lineage[i]);
            sum[it == category.end() ? ModeCategory::Ineffective : it->second] += d.shares[i];
        }
        for (auto c : kAllCategories) out.push_back({d.day, c, sum[c]});
    }
    return out;
}

PerfHistory perf_history(std::span<const DayPerf> perf_by_day) {
    PerfHistory h;
    for (const auto& d : perf_by_day) {
        if (d.lineage.size() != d.perf.size()) throw ShapeMismatch("lineage and perf lengths differ");
        for (std::size_t i = 0; i < d.lineage.size(); ++i) h[d.lineage[i]].push_back({d.day, d.perf[i]});
    }
    return h;
}

void write_lineage_csv(const std::filesystem::path& path, const std::vector<ModeLifecycleRecord>& records) {
    std::string out = "lineage_id,category,active_days,positive_fraction\n";
    for (const auto& r : records) {
        out += fmt::format("{},{},{},{:.6f}\n", r.lineage, to_string(r.category), r.active_days, r.positive_fraction);
    }
    write_file_atomic(path, out);
}

void write_share_csv(const std::filesystem::path& path, const std::vector<CategoryShare>& shares) {
    std::string out = "day,category,share\n";
    for (const auto& s : shares) out += fmt::format("{},{},{:.12f}\n", s.day.iso(), to_string(s.category), s.share);
    write_file_atomic(path, out);
}

}  // namespace modeflow
