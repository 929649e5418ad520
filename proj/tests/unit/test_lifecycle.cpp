#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <unistd.h>

#include "modeflow/errors.hpp"
#include "modeflow/io.hpp"
#include "modeflow/lifecycle.hpp"
#include "oracles.hpp"

using namespace modeflow;

namespace {

std::vector<Date> weekdays(std::size_t n) {
    std::vector<Date> out{Date::parse("2024-01-01")};
    while (out.size() < n) out.push_back(out.back().next_weekday());
    return out;
}

/// First half of `days` bull, second half bear.
RegimeCalendar split_calendar(const std::vector<Date>& days) {
    const std::size_t h = days.size() / 2;
    return RegimeCalendar({{days.front(), days[h - 1], Regime::Bull}, {days[h], days.back(), Regime::Bear}});
}

std::vector<PerfObservation> series(const std::vector<Date>& days, std::size_t bull_pos, std::size_t bear_pos) {
    const std::size_t h = days.size() / 2;
    std::vector<PerfObservation> s;
    for (std::size_t i = 0; i < days.size(); ++i) {
        const bool bull = i < h;
        const std::size_t j = bull ? i : i - h;
        s.push_back({days[i], j < (bull ? bull_pos : bear_pos) ? 0.01 : -0.01});
    }
    return s;
}

int rank(ModeCategory c) {
    switch (c) {
        case ModeCategory::LongTerm: return 3;
        case ModeCategory::BullEffective:
        case ModeCategory::BearEffective: return 2;
        case ModeCategory::Ineffective: return 1;
    }
    return 0;
}

}  // namespace

TEST(Calendar, RejectsOverlapsAndInvertedSpans) {
    const auto d = weekdays(10);
    EXPECT_THROW(RegimeCalendar({{d[0], d[5], Regime::Bull}, {d[5], d[9], Regime::Bear}}), ConfigError);
    EXPECT_THROW(RegimeCalendar({{d[5], d[0], Regime::Bull}}), ConfigError);
    const RegimeCalendar ok({{d[0], d[4], Regime::Bull}, {d[5], d[9], Regime::Bear}});
    EXPECT_EQ(ok.regime_of(d[4]), Regime::Bull);
    EXPECT_EQ(ok.regime_of(d[5]), Regime::Bear);
    EXPECT_FALSE(ok.regime_of(Date::parse("2030-01-01")));
}

TEST(Calendar, LoadsCsv) {
    const auto path = std::filesystem::temp_directory_path() / ("modeflow-regime-" + std::to_string(::getpid()) + ".csv");
    write_file_atomic(path, "start,end,label\n2024-01-01,2024-03-31,bull\n2024-04-01,2024-06-30,bear\n");
    const auto cal = RegimeCalendar::load_csv(path);
    std::filesystem::remove(path);
    ASSERT_EQ(cal.periods().size(), 2u);
    EXPECT_EQ(cal.regime_of(Date::parse("2024-05-01")), Regime::Bear);
}

TEST(Classify, RuleBranches) {
    const auto d = weekdays(200);
    const auto cal = split_calendar(d);
    EXPECT_EQ(classify_series(series(d, 100, 100), cal), ModeCategory::LongTerm);
    EXPECT_EQ(classify_series(series(d, 100, 32), cal), ModeCategory::LongTerm);  // 66%
    EXPECT_EQ(classify_series(series(d, 100, 30), cal), ModeCategory::BullEffective);  // exactly 65%
    EXPECT_EQ(classify_series(series(d, 75, 45), cal), ModeCategory::BullEffective);  // 60% overall
    EXPECT_EQ(classify_series(series(d, 75, 10), cal), ModeCategory::BullEffective);
    EXPECT_EQ(classify_series(series(d, 70, 40), cal), ModeCategory::Ineffective);  // exactly 70% bull
    EXPECT_EQ(classify_series(series(d, 20, 80), cal), ModeCategory::BearEffective);
    EXPECT_EQ(classify_series(series(d, 0, 0), cal), ModeCategory::Ineffective);
    EXPECT_EQ(classify_series({}, cal), ModeCategory::Ineffective);
}

TEST(Classify, ZeroPerfIsNotPositive) {
    const auto d = weekdays(4);
    std::vector<PerfObservation> s{{d[0], 0.0}, {d[1], 0.0}, {d[2], 0.0}, {d[3], 0.0}};
    EXPECT_EQ(classify_series(s, RegimeCalendar{}), ModeCategory::Ineffective);
}

TEST(Classify, RaisingOneDayNeverDemotes) {
    std::mt19937_64 rng(1);
    const auto d = weekdays(40);
    const auto cal = split_calendar(d);
    for (int t = 0; t < 500; ++t) {
        std::vector<PerfObservation> s;
        for (const auto& day : d) s.push_back({day, rng() % 3 == 0 ? -0.1 : 0.1});
        const std::size_t i = rng() % s.size();
        s[i].perf = -0.1;
        const auto before = classify_series(s, cal);
        s[i].perf = 0.1;
        EXPECT_GE(rank(classify_series(s, cal)), rank(before));
    }
}

TEST(ClassifyModes, PartitionAndCoverage) {
    const auto d = weekdays(20);
    const auto cal = split_calendar(d);
    PerfHistory h;
    h[1] = series(d, 10, 10);
    h[4] = series(d, 0, 9);
    h[9] = {{d[3], -1.0}};
    const auto recs = classify_modes(h, cal);
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0].category, ModeCategory::LongTerm);
    EXPECT_EQ(recs[1].category, ModeCategory::BearEffective);
    EXPECT_EQ(recs[2].category, ModeCategory::Ineffective);
    EXPECT_EQ(recs[2].active_days, 1u);
    EXPECT_NEAR(*recs[1].bear_positive_fraction, 0.9, 1e-15);
    h[9].push_back({Date::parse("2031-01-01"), 1.0});
    EXPECT_THROW(classify_modes(h, cal), UncoveredDays);
}

TEST(Softmax, ClosedFormAndSymmetry) {
    const auto s = softmax(std::vector<double>{1.0, 0.0});
    EXPECT_NEAR(s[0], std::exp(1.0) / (std::exp(1.0) + 1), 1e-15);
    EXPECT_NEAR(s[0], 0.7311, 1e-4);
    EXPECT_NEAR(s[1], 0.2689, 1e-4);
    for (double v : softmax(std::vector<double>(7, 0.3))) EXPECT_NEAR(v, 1.0 / 7, 1e-15);
}

TEST(Softmax, SumsToOneShiftInvariantAndPositive) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 5.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(1 + rng() % 30);
        for (double& x : v) x = n(rng);
        const auto s = softmax(v);
        EXPECT_NEAR(oracle::sum(s), 1.0, 1e-12);
        for (double x : s) EXPECT_GT(x, 0.0);
        auto shifted = v;
        for (double& x : shifted) x += 123.0;
        const auto s2 = softmax(shifted);
        for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], s2[i], 1e-12);
    }
    const auto big = softmax(std::vector<double>{1000.0, 999.0});
    EXPECT_TRUE(std::isfinite(big[0]));
}

TEST(Shares, CategoryTotalsPerDay) {
    const auto d = weekdays(2);
    std::vector<DayPerf> perf{{d[0], {1, 2}, {0.2, 0.2}}, {d[1], {1, 2, 3}, {0.0, 0.0, 0.0}}};
    const auto shares = daily_shares(perf);
    ASSERT_EQ(shares.size(), 2u);
    EXPECT_EQ(shares[0].shares, (std::vector<double>{0.5, 0.5}));
    std::vector<ModeLifecycleRecord> recs(3);
    recs[0].lineage = 1;
    recs[0].category = ModeCategory::LongTerm;
    recs[1].lineage = 2;
    recs[1].category = ModeCategory::Ineffective;
    recs[2].lineage = 3;
    recs[2].category = ModeCategory::LongTerm;
    const auto cat = category_shares(shares, recs);
    ASSERT_EQ(cat.size(), 8u);
    double day1_long = 0.0, day1_total = 0.0;
    for (const auto& c : cat) {
        if (c.day != d[1]) continue;
        day1_total += c.share;
        if (c.category == ModeCategory::LongTerm) day1_long = c.share;
    }
    EXPECT_NEAR(day1_long, 2.0 / 3, 1e-15);
    EXPECT_NEAR(day1_total, 1.0, 1e-12);
}

TEST(PerfHistory, CollectsByLineage) {
    const auto d = weekdays(3);
    std::vector<DayPerf> perf{{d[0], {0, 1}, {0.1, 0.2}}, {d[1], {1}, {0.3}}, {d[2], {1, 5}, {0.4, 0.5}}};
    const auto h = perf_history(perf);
    EXPECT_EQ(h.at(0).size(), 1u);
    EXPECT_EQ(h.at(1).size(), 3u);
    EXPECT_EQ(h.at(1)[2].perf, 0.4);
    EXPECT_EQ(h.at(5)[0].day, d[2]);
}

TEST(LifecycleCsv, WritesHeaders) {
    const auto dir = std::filesystem::temp_directory_path() / ("modeflow-lc-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    ModeLifecycleRecord r;
    r.lineage = 4;
    r.active_days = 2;
    r.positive_fraction = 0.5;
    write_lineage_csv(dir / "l.csv", {r});
    write_share_csv(dir / "s.csv", {{Date::parse("2024-01-02"), ModeCategory::LongTerm, 0.25}});
    const auto l = read_text_file(dir / "l.csv");
    const auto s = read_text_file(dir / "s.csv");
    std::filesystem::remove_all(dir);
    EXPECT_EQ(l.substr(0, l.find('\n')), "lineage_id,category,active_days,positive_fraction");
    EXPECT_EQ(s.substr(0, s.find('\n')), "day,category,share");
    EXPECT_NE(s.find("2024-01-02"), std::string::npos);
}
