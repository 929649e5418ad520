#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modeflow/types.hpp"

namespace modeflow {

enum class Regime { Bull, Bear };

struct RegimePeriod {
    Date start;
    Date end;  // inclusive
    Regime regime = Regime::Bull;
};

/// User-supplied labeling of the analysis window into bull and bear spans.
class RegimeCalendar {
public:
    RegimeCalendar() = default;
    /// Throws ConfigError when periods overlap or have end < start.
    explicit RegimeCalendar(std::vector<RegimePeriod> periods);
    /// CSV with header `start,end,label`, label in {bull, bear}.
    static RegimeCalendar load_csv(const std::filesystem::path& path);

    std::optional<Regime> regime_of(const Date& day) const;
    const std::vector<RegimePeriod>& periods() const noexcept { return periods_; }
    bool empty() const noexcept { return periods_.empty(); }

private:
    std::vector<RegimePeriod> periods_;
};

enum class ModeCategory { LongTerm, BullEffective, BearEffective, Ineffective };
std::string_view to_string(ModeCategory c);

struct PerfObservation {
    Date day;
    double perf = 0.0;
};

/// Per-lineage Perf series, keyed by lineage id.
using PerfHistory = std::map<std::uint64_t, std::vector<PerfObservation>>;

struct ModeLifecycleRecord {
    std::uint64_t lineage = 0;
    std::vector<PerfObservation> history;
    ModeCategory category = ModeCategory::Ineffective;
    std::size_t active_days = 0;
    double positive_fraction = 0.0;
    std::optional<double> bull_positive_fraction;
    std::optional<double> bear_positive_fraction;
};

struct ClassificationThresholds {
    double long_term = 0.65;
    double regime = 0.70;
};

/// Ordered rule: long-term effective when Perf > 0 on more than 65% of the
/// lineage's active days; otherwise bull-effective when positive on more than
/// 70% of its bull days; otherwise bear-effective likewise on bear days;
/// otherwise ineffective. Comparisons are strict.
ModeCategory classify_series(std::span<const PerfObservation> history,
                             const RegimeCalendar& calendar,
                             const ClassificationThresholds& thresholds = {});

/// Classifies every lineage. Throws UncoveredDays when the calendar is
/// non-empty and some observed day falls outside it.
std::vector<ModeLifecycleRecord> classify_modes(const PerfHistory& history,
                                                const RegimeCalendar& calendar,
                                                const ClassificationThresholds& thresholds = {});

/// Softmax with max subtraction.
std::vector<double> softmax(std::span<const double> values);

struct DayPerf {
    Date day;
    std::vector<std::uint64_t> lineage;
    std::vector<double> perf;
};

struct DayShares {
    Date day;
    std::vector<std::uint64_t> lineage;
    std::vector<double> shares;
};

std::vector<DayShares> daily_shares(std::span<const DayPerf> perf_by_day);

struct CategoryShare {
    Date day;
    ModeCategory category = ModeCategory::Ineffective;
    double share = 0.0;
};

/// Sums each day's shares by the category of the lineage.
std::vector<CategoryShare> category_shares(std::span<const DayShares> shares,
                                           const std::vector<ModeLifecycleRecord>& records);

/// Collects per-lineage history from a day-ordered perf series.
PerfHistory perf_history(std::span<const DayPerf> perf_by_day);

/// lineage_id,category,active_days,positive_fraction
void write_lineage_csv(const std::filesystem::path& path,
                       const std::vector<ModeLifecycleRecord>& records);
/// day,category,share
void write_share_csv(const std::filesystem::path& path, const std::vector<CategoryShare>& shares);

}  // namespace modeflow
