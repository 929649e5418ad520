#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "modeflow/errors.hpp"
#include "modeflow/mode_engine.hpp"
#include "oracles.hpp"

using namespace modeflow;

namespace {

const Date kDay = Date::parse("2024-01-02");

std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("a" + std::to_string(i));
    return out;
}

Matrix gaussian_blobs(std::mt19937_64& rng, const std::vector<std::vector<double>>& centers, std::size_t per,
                      double sd) {
    std::normal_distribution<double> n(0.0, sd);
    const std::size_t d = centers.front().size();
    Matrix m(centers.size() * per, d);
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (std::size_t i = 0; i < per; ++i) {
            for (std::size_t j = 0; j < d; ++j) m(c * per + i, j) = centers[c][j] + n(rng);
        }
    }
    return m;
}

DailyModeSet two_modes_1d(double m0, double m1) {
    DailyModeSet s;
    s.day = kDay;
    s.weights = {0.5, 0.5};
    s.means = Matrix::from_rows({{m0}, {m1}});
    s.variances = Matrix::from_rows({{1.0}, {1.0}});
    return s;
}

}  // namespace

TEST(Posterior, ClosedFormDensityRatio) {
    const auto post = posterior_under(two_modes_1d(0.0, 4.0), std::vector<double>{1.0});
    const double expected = std::exp(4.0) / (1.0 + std::exp(4.0));
    EXPECT_NEAR(post[0], expected, 1e-12);
    EXPECT_NEAR(post[0], 0.9820, 1e-4);
    EXPECT_NEAR(post[1], 1.0 - expected, 1e-12);
}

TEST(Posterior, EquidistantPointSplitsEvenly) {
    DailyModeSet s;
    s.weights = {0.5, 0.5};
    s.means = Matrix::from_rows({{1.0, 0.0}, {-1.0, 0.0}});
    s.variances = Matrix::from_rows({{0.3, 0.3}, {0.3, 0.3}});
    const auto post = posterior_under(s, std::vector<double>{0.0, 5.0});
    EXPECT_NEAR(post[0], 0.5, 1e-9);
    EXPECT_NEAR(post[1], 0.5, 1e-9);
}

TEST(Posterior, SingleModeIsCertain) {
    DailyModeSet s;
    s.weights = {1.0};
    s.means = Matrix::from_rows({{3.0, -2.0}});
    s.variances = Matrix::from_rows({{0.01, 0.01}});
    for (double x : {-1e3, 0.0, 3.0, 1e3}) {
        EXPECT_EQ(posterior_under(s, std::vector<double>{x, x}), std::vector<double>{1.0});
    }
}

TEST(Posterior, FarPointsStayFinite) {
    const auto post = posterior_under(two_modes_1d(0.0, 4.0), std::vector<double>{1e6});
    EXPECT_TRUE(std::isfinite(post[0]));
    EXPECT_NEAR(post[0] + post[1], 1.0, 1e-12);
    EXPECT_EQ(post[1], 1.0);
}

TEST(Posterior, MatchesPlainDensityOracle) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(0.2, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 1 + rng() % 5, d = 1 + rng() % 4;
        DailyModeSet s;
        s.means = Matrix(k, d);
        s.variances = Matrix(k, d);
        std::vector<std::vector<double>> mu(k), var(k);
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += s.weights.emplace_back(u(rng));
        for (double& w : s.weights) w /= total;
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t c = 0; c < d; ++c) {
                mu[j].push_back(s.means(j, c) = n(rng));
                var[j].push_back(s.variances(j, c) = u(rng));
            }
        }
        std::vector<double> x(d);
        for (double& v : x) v = n(rng);
        const auto got = posterior_under(s, x);
        const auto want = oracle::posterior(s.weights, mu, var, x);
        for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
    }
}

TEST(Fit, SingleComponentIsSampleMean) {
    std::mt19937_64 rng(1);
    const Matrix pts = gaussian_blobs(rng, {{1.0, 2.0, 3.0}}, 40, 0.5);
    const auto fit = fit_daily_modes(pts, ids(40), kDay, 1, nullptr, 3);
    ASSERT_EQ(fit.modes.k(), 1u);
    for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(fit.responsibilities.values(i, 0), 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> col;
        for (std::size_t i = 0; i < 40; ++i) col.push_back(pts(i, c));
        EXPECT_NEAR(fit.modes.means(0, c), oracle::avg(col), 1e-12);
    }
}

TEST(Fit, WellSeparatedClustersAreRecovered) {
    std::mt19937_64 rng(2);
    const Matrix pts = gaussian_blobs(rng, {{-10.0}, {10.0}}, 50, 0.1);
    const auto fit = fit_daily_modes(pts, ids(100), kDay, 2, nullptr, 9);
    std::vector<double> means{fit.modes.means(0, 0), fit.modes.means(1, 0)};
    const std::size_t lo = means[0] < means[1] ? 0 : 1;
    EXPECT_NEAR(means[lo], -10.0, 0.1);
    EXPECT_NEAR(means[1 - lo], 10.0, 0.1);
    for (std::size_t i = 0; i < 100; ++i) {
        const std::size_t truth = i < 50 ? lo : 1 - lo;
        EXPECT_NEAR(fit.responsibilities.values(i, truth), 1.0, 1e-6);
    }
}

TEST(Fit, ComponentCountIsClampedToSampleSize) {
    const Matrix pts = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}});
    const auto fit = fit_daily_modes(pts, ids(3), kDay, 20, nullptr, 0);
    EXPECT_EQ(fit.modes.k(), 3u);
}

TEST(Fit, EmptyInputThrows) {
    EXPECT_THROW(fit_daily_modes(Matrix(0, 2), {}, kDay, 2, nullptr, 0), EmptyInput);
}

TEST(Fit, InvariantsHoldOnRandomData) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 2 + rng() % 6, n = 10 + rng() % 60, k = 1 + rng() % 6;
        std::vector<std::vector<double>> centers(3, std::vector<double>(d));
        std::normal_distribution<double> nd;
        for (auto& c : centers) {
            for (double& v : c) v = 2.0 * nd(rng);
        }
        const Matrix pts = gaussian_blobs(rng, centers, n / 3 + 1, 0.7);
        GmmOptions opts;
        const auto fit = fit_daily_modes(pts, ids(pts.rows()), kDay, k, nullptr, trial, opts);
        EXPECT_NO_THROW(fit.modes.validate(opts.variance_floor));
        EXPECT_NEAR(oracle::sum(fit.modes.weights), 1.0, 1e-9);
        for (std::size_t i = 0; i < pts.rows(); ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < fit.modes.k(); ++j) {
                const double r = fit.responsibilities.values(i, j);
                EXPECT_GE(r, 0.0);
                EXPECT_LE(r, 1.0);
                row += r;
            }
            EXPECT_NEAR(row, 1.0, 1e-9);
        }
        for (std::size_t t = 1; t < fit.log_likelihood_trace.size(); ++t) {
            EXPECT_GE(fit.log_likelihood_trace[t], fit.log_likelihood_trace[t - 1] - 1e-8);
        }
        for (std::size_t j = 0; j < fit.modes.k(); ++j) {
            EXPECT_GE(fit.modes.weights[j], opts.weight_floor * (1.0 - 1e-12));
        }
        EXPECT_NEAR(fit.modes.log_likelihood, mixture_log_likelihood(fit.modes, pts), 1e-8 * std::abs(fit.modes.log_likelihood) + 1e-8);
    }
}

TEST(Fit, DeterministicForSameSeed) {
    std::mt19937_64 rng(4);
    const Matrix pts = gaussian_blobs(rng, {{0.0, 0.0}, {3.0, 3.0}, {0.0, 3.0}}, 30, 0.8);
    const auto a = fit_daily_modes(pts, ids(90), kDay, 4, nullptr, 77);
    const auto b = fit_daily_modes(pts, ids(90), kDay, 4, nullptr, 77);
    EXPECT_EQ(a.modes, b.modes);
    EXPECT_EQ(a.responsibilities, b.responsibilities);
    EXPECT_EQ(a.log_likelihood_trace, b.log_likelihood_trace);
}

TEST(Fit, WarmStartUsesPreviousMeans) {
    std::mt19937_64 rng(5);
    const Matrix day1 = gaussian_blobs(rng, {{-4.0, 0.0}, {4.0, 0.0}}, 30, 0.5);
    const Matrix day2 = gaussian_blobs(rng, {{-4.0, 0.2}, {4.0, 0.2}}, 30, 0.5);
    const auto first = fit_daily_modes(day1, ids(60), kDay, 2, nullptr, 1);
    const auto second = fit_daily_modes(day2, ids(60), Date::parse("2024-01-03"), 2, &first.modes, 2);
    EXPECT_TRUE(second.warm_started);
    EXPECT_FALSE(first.warm_started);
    for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_EQ(second.modes.means(j, 0) < 0.0, first.modes.means(j, 0) < 0.0);
    }
    const auto mismatched = fit_daily_modes(day2, ids(60), kDay, 3, &first.modes, 2);
    EXPECT_FALSE(mismatched.warm_started);
}

TEST(Fit, WarmStartIsEquivariantUnderRelabeling) {
    std::mt19937_64 rng(6);
    const Matrix day1 = gaussian_blobs(rng, {{-4.0, 0.0}, {4.0, 0.0}, {0.0, 4.0}}, 20, 0.9);
    const Matrix day2 = gaussian_blobs(rng, {{-4.0, 0.5}, {4.0, 0.5}, {0.0, 3.0}}, 20, 0.9);
    const auto first = fit_daily_modes(day1, ids(60), kDay, 3, nullptr, 1);
    const std::vector<std::size_t> perm{2, 0, 1};
    const auto shuffled = relabel(first, perm);
    const auto a = fit_daily_modes(day2, ids(60), kDay, 3, &first.modes, 5);
    const auto b = fit_daily_modes(day2, ids(60), kDay, 3, &shuffled.modes, 5);
    EXPECT_EQ(relabel(a, perm).modes, b.modes);
    EXPECT_EQ(relabel(a, perm).responsibilities, b.responsibilities);
}

TEST(Relabel, PermutesEverything) {
    std::mt19937_64 rng(7);
    const Matrix pts = gaussian_blobs(rng, {{-3.0}, {3.0}, {9.0}}, 10, 0.3);
    const auto fit = fit_daily_modes(pts, ids(30), kDay, 3, nullptr, 1);
    const std::vector<std::size_t> perm{1, 2, 0};
    const auto r = relabel(fit, perm);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_EQ(r.modes.weights[j], fit.modes.weights[perm[j]]);
        EXPECT_EQ(r.modes.means(j, 0), fit.modes.means(perm[j], 0));
        EXPECT_EQ(r.modes.variances(j, 0), fit.modes.variances(perm[j], 0));
        for (std::size_t i = 0; i < 30; ++i) {
            EXPECT_EQ(r.responsibilities.values(i, j), fit.responsibilities.values(i, perm[j]));
        }
    }
    EXPECT_THROW(relabel(fit, {0, 0, 1}), ShapeMismatch);
}

TEST(Harden, ArgmaxWithLowestIndexOnTies) {
    EXPECT_EQ(harden(std::vector<double>{0.2, 0.5, 0.3}), (std::vector<double>{0.0, 1.0, 0.0}));
    EXPECT_EQ(harden(std::vector<double>{0.4, 0.4, 0.2}), (std::vector<double>{1.0, 0.0, 0.0}));
    ResponsibilityMatrix soft{ids(2), Matrix::from_rows({{0.1, 0.9}, {0.6, 0.4}})};
    const auto hard = harden(soft);
    EXPECT_EQ(hard.values, Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}}));
    EXPECT_EQ(hard.argument_ids, soft.argument_ids);
}

TEST(Singleton, EveryArgumentIsItsOwnMode) {
    const Matrix pts = Matrix::from_rows({{0.0, 1.0}, {2.0, 1.0}, {4.0, 4.0}, {1.0, 1.0}});
    const auto fit = singleton_modes(pts, ids(4), kDay);
    EXPECT_EQ(fit.modes.k(), 4u);
    EXPECT_EQ(fit.modes.means, pts);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(fit.modes.weights[i], 0.25);
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(fit.responsibilities.values(i, j), i == j ? 1.0 : 0.0);
    }
    EXPECT_NO_THROW(fit.modes.validate(1e-6));
}

TEST(Validate, RejectsBrokenMixtures) {
    auto s = two_modes_1d(0.0, 1.0);
    EXPECT_NO_THROW(s.validate(1e-6));
    s.weights = {0.5, 0.6};
    EXPECT_THROW(s.validate(), NumericalFailure);
    s = two_modes_1d(0.0, 1.0);
    s.variances(1, 0) = 1e-9;
    EXPECT_THROW(s.validate(1e-6), NumericalFailure);
    s = two_modes_1d(0.0, std::nan(""));
    EXPECT_THROW(s.validate(), NumericalFailure);
}

TEST(ResponsibilityDigest, ChangesWithContent) {
    ResponsibilityMatrix a{ids(1), Matrix::from_rows({{0.25, 0.75}})};
    ResponsibilityMatrix b = a;
    EXPECT_EQ(a.digest(), b.digest());
    b.values(0, 0) = 0.2500000001;
    EXPECT_NE(a.digest(), b.digest());
}

TEST(Projection, IdentityPassesThrough) {
    const auto p = Projection::identity(3);
    const std::vector<double> x{1.0, -2.0, 0.5};
    EXPECT_EQ(p.apply(x), x);
    EXPECT_TRUE(p.is_identity());
}

TEST(Projection, OrthonormalBasisNeverLengthens) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    Matrix burn(200, 12);
    for (std::size_t i = 0; i < 200; ++i) {
        for (std::size_t j = 0; j < 12; ++j) burn(i, j) = n(rng) * (j < 3 ? 5.0 : 0.3);
    }
    const auto p = Projection::fit(burn, 4);
    EXPECT_EQ(p.output_dim(), 4u);
    EXPECT_EQ(p.input_dim(), 12u);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(12);
        for (double& v : x) v = n(rng);
        EXPECT_LE(l2_norm(p.apply(x)), l2_norm(x) + 1e-9);
    }
    const Matrix& b = p.basis();
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t s = 0; s < 4; ++s) {
            double d = 0.0;
            for (std::size_t c = 0; c < 12; ++c) d += b(r, c) * b(s, c);
            EXPECT_NEAR(d, r == s ? 1.0 : 0.0, 1e-10);
        }
    }
}

TEST(Projection, FrozenBasisGivesSameOutputOnAnyDay) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    Matrix burn(50, 6);
    for (std::size_t i = 0; i < 50; ++i) {
        for (std::size_t j = 0; j < 6; ++j) burn(i, j) = n(rng);
    }
    const auto p = Projection::fit(burn, 2);
    const std::vector<double> x{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    const auto day1 = p.apply(x);
    const auto restored = Projection::from_basis(p.basis());
    EXPECT_EQ(restored.apply(x), day1);
    EXPECT_EQ(p.apply(x), day1);
}

TEST(Projection, WideOutputIsIdentityAndTooFewRowsFails) {
    Matrix burn(10, 4, 1.0);
    EXPECT_TRUE(Projection::fit(burn, 4).is_identity());
    EXPECT_THROW(Projection::fit(Matrix(3, 8, 1.0), 5), ConfigError);
}
