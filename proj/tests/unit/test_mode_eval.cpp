#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "modeflow/errors.hpp"
#include "modeflow/mode_eval.hpp"
#include "oracles.hpp"

using namespace modeflow;

namespace {

const Date kD1 = Date::parse("2024-01-02");
const Date kD2 = Date::parse("2024-01-03");

ModeAlignment pairs_alignment(std::vector<std::pair<std::size_t, std::size_t>> pairs, std::size_t kp,
                              std::size_t kc) {
    ModeAlignment a;
    std::vector<bool> p(kp), c(kc);
    for (auto [i, j] : pairs) p[i] = c[j] = true;
    for (std::size_t i = 0; i < kp; ++i) {
        if (!p[i]) a.retired.push_back(i);
    }
    for (std::size_t j = 0; j < kc; ++j) {
        if (!c[j]) a.born.push_back(j);
    }
    a.pairs = std::move(pairs);
    return a;
}

ModeAlignment identity(std::size_t k) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < k; ++i) pairs.emplace_back(i, i);
    return pairs_alignment(pairs, k, k);
}

}  // namespace

TEST(ExcessReturns, HandExample) {
    const auto r = excess_returns(std::vector<double>{11.0, 20.0}, std::vector<double>{10.0, 20.0});
    EXPECT_NEAR(r[0], 0.05, 1e-15);
    EXPECT_NEAR(r[1], -0.05, 1e-15);
}

TEST(ExcessReturns, UniformMovesGiveZero) {
    const auto r = excess_returns(std::vector<double>{11.0, 22.0, 33.0}, std::vector<double>{10.0, 20.0, 30.0});
    for (double v : r) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(ExcessReturns, SingleStockIsZero) {
    EXPECT_EQ(excess_returns(std::vector<double>{13.0}, std::vector<double>{10.0}), std::vector<double>{0.0});
}

TEST(ExcessReturns, CrossSectionalMeanIsZero) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(1.0, 100.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(2 + rng() % 40), b(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = u(rng);
            b[i] = a[i] * (0.9 + 0.2 * u(rng) / 100.0);
        }
        EXPECT_NEAR(oracle::sum(excess_returns(b, a)), 0.0, 1e-12);
        const auto r = excess_returns(b, a);
        const auto want = oracle::excess_returns(b, a);
        for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], want[i], 1e-15);
    }
}

TEST(ExcessReturns, RejectsBadInput) {
    EXPECT_THROW(excess_returns(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), ShapeMismatch);
    EXPECT_THROW(excess_returns(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 2.0}), MissingPrice);
}

TEST(RealizedExcess, DropsStocksMissingABar) {
    PriceTable prices({{kD1, "A", 10, 10}, {kD1, "B", 20, 20}, {kD1, "C", 5, 5},
                       {kD2, "A", 11, 11}, {kD2, "B", 20, 20}});
    const auto cs = realized_excess_returns(prices, {"A", "B", "C"}, kD1, kD2);
    EXPECT_EQ(cs.tickers, (std::vector<Ticker>{"A", "B"}));
    EXPECT_EQ(cs.excluded, (std::vector<Ticker>{"C"}));
    EXPECT_NEAR(*cs.of("A"), 0.05, 1e-15);
    EXPECT_FALSE(cs.of("C"));
    EXPECT_THROW(realized_excess_returns(prices, {"A", "B", "C"}, kD1, kD2, true), MissingPrice);
}

TEST(RealizedScore, PolaritySign) {
    EXPECT_EQ(realized_score(1, 0.05), 0.05);
    EXPECT_EQ(realized_score(-1, 0.05), -0.05);
    EXPECT_EQ(realized_score(-1, -0.02), 0.02);
}

TEST(Aggregate, WeightedMeanHandExample) {
    const Matrix resp = Matrix::from_rows({{0.2, 0.8}, {0.3, 0.7}, {0.5, 0.5}});
    const auto agg = aggregate_mode_scores(resp, std::vector<double>{1.0, 2.0, 3.0});
    EXPECT_NEAR(agg[0], 2.3, 1e-12);
}

TEST(Aggregate, SymmetricScoresCancel) {
    const Matrix resp = Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}});
    EXPECT_EQ(aggregate_mode_scores(resp, std::vector<double>{0.1, -0.1}), (std::vector<double>{0.0, 0.0}));
}

TEST(Aggregate, HardAssignmentGivesPlainMeans) {
    const Matrix resp = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0, 1, 0}});
    const auto agg = aggregate_mode_scores(resp, std::vector<double>{0.1, 0.4, 0.3, -0.2});
    EXPECT_NEAR(agg[0], 0.2, 1e-15);
    EXPECT_NEAR(agg[1], 0.1, 1e-15);
    EXPECT_EQ(agg[2], 0.0);
}

TEST(Aggregate, ShapeChecked) {
    EXPECT_THROW(aggregate_mode_scores(Matrix(2, 2), std::vector<double>{1.0}), ShapeMismatch);
}

TEST(UpdatePerf, LambdaBoundaries) {
    PerfState prev{kD1, {0.2, -0.7}, {0, 1}, {}, 2};
    const auto al = identity(2);
    const std::vector<double> agg{0.4, 0.9};
    EXPECT_EQ(update_perf(&prev, &al, agg, 1.0, kD2).perf, prev.perf);
    EXPECT_EQ(update_perf(&prev, &al, agg, 0.0, kD2).perf, agg);
    EXPECT_NEAR(update_perf(&prev, &al, agg, 0.5, kD2).perf[0], 0.3, 1e-15);
    EXPECT_THROW(update_perf(&prev, &al, agg, 1.5, kD2), ConfigError);
}

TEST(UpdatePerf, FirstDayModesAreNewborn) {
    const std::vector<double> agg{0.4, -0.2};
    const auto out = update_perf(nullptr, nullptr, agg, 0.5, kD1);
    EXPECT_EQ(out.perf, (std::vector<double>{0.2, -0.1}));
    EXPECT_EQ(out.lineage, (std::vector<std::uint64_t>{0, 1}));
    EXPECT_EQ(out.next_lineage, 2u);
}

TEST(UpdatePerf, MemoryFollowsAlignmentAndRetiredLineagesArchive) {
    PerfState prev{kD1, {0.2, -0.4, 0.8}, {7, 3, 5}, {{1, 0.1}}, 8};
    const auto al = pairs_alignment({{0, 1}, {2, 0}}, 3, 3);
    const std::vector<double> agg{0.0, 0.2, 0.6};
    const auto out = update_perf(&prev, &al, agg, 0.5, kD2);
    EXPECT_NEAR(out.perf[0], 0.4, 1e-15);
    EXPECT_NEAR(out.perf[1], 0.2, 1e-15);
    EXPECT_NEAR(out.perf[2], 0.3, 1e-15);
    EXPECT_EQ(out.lineage, (std::vector<std::uint64_t>{5, 7, 8}));
    EXPECT_EQ(out.next_lineage, 9u);
    EXPECT_EQ(out.archived, (std::map<std::uint64_t, double>{{1, 0.1}, {3, -0.4}}));
    EXPECT_EQ(out.day, kD2);
}

TEST(UpdatePerf, MatchesNaiveEma) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u;
    for (int t = 0; t < 100; ++t) {
        const std::size_t kp = 1 + rng() % 6, kc = 1 + rng() % 6;
        PerfState prev;
        for (std::size_t i = 0; i < kp; ++i) {
            prev.perf.push_back(n(rng));
            prev.lineage.push_back(i);
        }
        prev.next_lineage = kp;
        std::vector<std::size_t> cols(kc);
        std::iota(cols.begin(), cols.end(), 0);
        std::shuffle(cols.begin(), cols.end(), rng);
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < std::min(kp, kc); ++i) pairs.emplace_back(i, cols[i]);
        const auto al = pairs_alignment(pairs, kp, kc);
        std::vector<double> agg(kc);
        for (double& a : agg) a = n(rng);
        const double lambda = u(rng);
        const auto got = update_perf(&prev, &al, agg, lambda, kD2);
        const auto want = oracle::ema(prev.perf, std::map<std::size_t, std::size_t>(pairs.begin(), pairs.end()), agg, lambda);
        for (std::size_t j = 0; j < kc; ++j) EXPECT_NEAR(got.perf[j], want[j], 1e-15);
    }
}

TEST(UpdatePerf, AffineInPreviousAndScores) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    const auto al = identity(4);
    for (int t = 0; t < 50; ++t) {
        PerfState p1{kD1, {}, {0, 1, 2, 3}, {}, 4}, p2 = p1, psum = p1;
        std::vector<double> a1(4), a2(4), asum(4);
        for (std::size_t i = 0; i < 4; ++i) {
            p1.perf.push_back(n(rng));
            p2.perf.push_back(n(rng));
            psum.perf.push_back(p1.perf[i] + p2.perf[i]);
            a1[i] = n(rng);
            a2[i] = n(rng);
            asum[i] = a1[i] + a2[i];
        }
        const double lambda = 0.3;
        const auto r1 = update_perf(&p1, &al, a1, lambda, kD2);
        const auto r2 = update_perf(&p2, &al, a2, lambda, kD2);
        const auto rs = update_perf(&psum, &al, asum, lambda, kD2);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(rs.perf[i], r1.perf[i] + r2.perf[i], 1e-12);
    }
}

TEST(UpdatePerf, ZeroScoresDecayGeometrically) {
    PerfState state{kD1, {0.8, -0.5}, {0, 1}, {}, 2};
    const auto al = identity(2);
    const std::vector<double> zero(2, 0.0);
    const double lambda = 0.5;
    for (int t = 1; t <= 20; ++t) {
        state = update_perf(&state, &al, zero, lambda, kD2);
        EXPECT_NEAR(std::abs(state.perf[0]), std::pow(lambda, t) * 0.8, 1e-15);
        EXPECT_NEAR(std::abs(state.perf[1]), std::pow(lambda, t) * 0.5, 1e-15);
    }
}

TEST(UpdatePerf, RelabelingCurrentModesPermutesState) {
    PerfState prev{kD1, {0.2, -0.4, 0.8}, {0, 1, 2}, {}, 3};
    const auto al = pairs_alignment({{0, 2}, {1, 0}, {2, 1}}, 3, 3);
    const std::vector<double> agg{0.1, -0.3, 0.5};
    const auto base = update_perf(&prev, &al, agg, 0.5, kD2);
    // New label j is old label perm[j].
    const std::vector<std::size_t> perm{2, 0, 1};
    std::vector<std::size_t> inv(3);
    for (std::size_t j = 0; j < 3; ++j) inv[perm[j]] = j;
    std::vector<std::pair<std::size_t, std::size_t>> moved;
    for (auto [i, j] : al.pairs) moved.emplace_back(i, inv[j]);
    const auto al2 = pairs_alignment(moved, 3, 3);
    std::vector<double> agg2(3);
    for (std::size_t j = 0; j < 3; ++j) agg2[j] = agg[perm[j]];
    const auto relabeled = update_perf(&prev, &al2, agg2, 0.5, kD2);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_EQ(relabeled.perf[j], base.perf[perm[j]]);
        EXPECT_EQ(relabeled.lineage[j], base.lineage[perm[j]]);
    }
}

TEST(UpdatePerf, RejectsMissingOrInconsistentAlignment) {
    PerfState prev{kD1, {0.1}, {0}, {}, 1};
    const std::vector<double> agg{0.0, 0.0};
    EXPECT_THROW(update_perf(&prev, nullptr, agg, 0.5, kD2), ShapeMismatch);
    const auto bad = pairs_alignment({{0, 5}}, 1, 6);
    EXPECT_THROW(update_perf(&prev, &bad, agg, 0.5, kD2), ShapeMismatch);
}
