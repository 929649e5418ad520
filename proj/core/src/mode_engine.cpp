#include "modeflow/mode_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "modeflow/digest.hpp"
#include "modeflow/errors.hpp"

namespace modeflow {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_points(const Matrix& points, const std::vector<std::string>& ids) {
    if (points.rows() == 0) throw EmptyInput("mixture fit needs at least one embedding");
    if (points.cols() == 0) throw DimensionMismatch("embeddings have dimension 0");
    if (ids.size() != points.rows()) {
        throw ShapeMismatch(fmt::format("{} argument ids for {} embeddings", ids.size(), points.rows()));
    }
    if (!all_finite(points.data())) throw NumericalFailure("non-finite embedding");
}

/// Per-component terms of the log density that do not depend on the point.
struct Components {
    std::vector<double> constant;  // log w_k - 0.5 * sum_c log(2 pi var_kc)
    Matrix inv_var;
};

Components precompute(const DailyModeSet& modes) {
    const std::size_t k = modes.k(), d = modes.dim();
    Components pc{std::vector<double>(k), Matrix(k, d)};
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double v = modes.variances(j, c);
            s += kLogTwoPi + std::log(v);
            pc.inv_var(j, c) = 1.0 / v;
        }
        pc.constant[j] = std::log(modes.weights[j]) - 0.5 * s;
    }
    return pc;
}

std::vector<double> log_joint_with(const DailyModeSet& modes, const Components& pc, std::span<const double> x) {
    const std::size_t d = modes.dim();
    if (x.size() != d) {
        throw DimensionMismatch(fmt::format("embedding dimension {} does not match mode dimension {}", x.size(), d));
    }
    std::vector<double> out(modes.k());
    for (std::size_t j = 0; j < modes.k(); ++j) {
        const auto mu = modes.means.row(j);
        const auto iv = pc.inv_var.row(j);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = x[c] - mu[c];
            s += diff * diff * iv[c];
        }
        out[j] = pc.constant[j] - 0.5 * s;
    }
    return out;
}

/// Posterior of one row plus its log normalizer. Shared by the EM E-step and
/// responsibilities_under so that both produce identical bits.
std::vector<double> posterior_with_norm(const DailyModeSet& modes, const Components& pc, std::span<const double> x,
                                        double& log_norm) {
    auto lj = log_joint_with(modes, pc, x);
    log_norm = log_sum_exp(lj);
    if (!std::isfinite(log_norm)) throw NumericalFailure("posterior normalizer is not finite");
    for (double& v : lj) v = std::exp(v - log_norm);
    return lj;
}

/// Exact maximizer of sum_k n_k log w_k subject to w_k >= floor, sum w = 1.
std::vector<double> floored_weights(const std::vector<double>& counts, double floor) {
    const std::size_t k = counts.size();
    std::vector<bool> pinned(k, false);
    std::vector<double> w(k, 0.0);
    for (;;) {
        std::vector<double> free_counts;
        std::size_t n_pinned = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (pinned[j]) ++n_pinned;
            else free_counts.push_back(counts[j]);
        }
        const double free_mass = 1.0 - static_cast<double>(n_pinned) * floor;
        const double total = label_invariant_sum(free_counts);
        bool changed = false;
        for (std::size_t j = 0; j < k; ++j) {
            if (pinned[j]) {
                w[j] = floor;
                continue;
            }
            w[j] = total > 0.0 ? free_mass * counts[j] / total
                               : free_mass / static_cast<double>(k - n_pinned);
            if (w[j] < floor) {
                pinned[j] = true;
                changed = true;
            }
        }
        if (!changed) break;
    }
    const double s = label_invariant_sum(w);
    for (double& v : w) v /= s;
    return w;
}

std::vector<double> column_variance(const Matrix& points, double floor) {
    const std::size_t n = points.rows(), d = points.cols();
    std::vector<double> var(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < n; ++r) m += points(r, c);
        m /= static_cast<double>(n);
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += (points(r, c) - m) * (points(r, c) - m);
        var[c] = std::max(floor, s / static_cast<double>(n));
    }
    return var;
}

struct EmResult {
    DailyModeSet modes;
    Matrix resp;
    std::vector<double> trace;
};

double e_step(const DailyModeSet& modes, const Matrix& points, Matrix& resp) {
    resp = Matrix(points.rows(), modes.k());
    const auto pc = precompute(modes);
    double ll = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        double norm = 0.0;
        const auto post = posterior_with_norm(modes, pc, points.row(i), norm);
        std::copy(post.begin(), post.end(), resp.row(i).begin());
        ll += norm;
    }
    return ll;
}

void m_step(DailyModeSet& modes, const Matrix& points, const Matrix& resp, const GmmOptions& opt) {
    const std::size_t n = points.rows(), d = points.cols(), k = modes.k();
    std::vector<double> counts(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < n; ++i) counts[j] += resp(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (!(counts[j] > 0.0)) continue;  // keep previous parameters of an empty mode
        auto mu = modes.means.row(j);
        std::fill(mu.begin(), mu.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = resp(i, j);
            if (r == 0.0) continue;
            const auto x = points.row(i);
            for (std::size_t c = 0; c < d; ++c) mu[c] += r * x[c];
        }
        for (double& v : mu) v /= counts[j];
        auto var = modes.variances.row(j);
        std::fill(var.begin(), var.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = resp(i, j);
            if (r == 0.0) continue;
            const auto x = points.row(i);
            for (std::size_t c = 0; c < d; ++c) var[c] += r * (x[c] - mu[c]) * (x[c] - mu[c]);
        }
        for (double& v : var) v = std::max(opt.variance_floor, v / counts[j]);
    }
    modes.weights = floored_weights(counts, opt.weight_floor);
}

EmResult run_em(DailyModeSet modes, const Matrix& points, const GmmOptions& opt) {
    EmResult res;
    double ll = e_step(modes, points, res.resp);
    res.trace.push_back(ll);
    for (int it = 0; it < opt.max_iterations; ++it) {
        m_step(modes, points, res.resp, opt);
        Matrix resp;
        const double next = e_step(modes, points, resp);
        res.trace.push_back(next);
        res.resp = std::move(resp);
        const double gain = next - ll;
        ll = next;
        if (gain < opt.relative_tolerance * std::max(1.0, std::abs(ll))) break;
    }
    modes.log_likelihood = ll;
    res.modes = std::move(modes);
    return res;
}

DailyModeSet kmeanspp_init(const Matrix& points, std::size_t k, std::uint64_t seed,
                           const GmmOptions& opt) {
    const std::size_t n = points.rows(), d = points.cols();
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> centers;
    centers.push_back(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        const auto c = points.row(centers.back());
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], squared_distance(points.row(i), c));
            total += dist[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double u = uniform01(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (dist[i] <= 0.0) continue;
                pick = i;
                u -= dist[i];
                if (u < 0.0) break;
            }
        }
        if (pick == n) {
            // Every remaining point duplicates a center; take an unused index.
            std::vector<std::size_t> unused;
            for (std::size_t i = 0; i < n; ++i) {
                if (std::find(centers.begin(), centers.end(), i) == centers.end()) unused.push_back(i);
            }
            pick = unused[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(unused.size())) %
                          unused.size()];
        }
        centers.push_back(pick);
    }
    DailyModeSet m;
    m.weights.assign(k, 1.0 / static_cast<double>(k));
    m.means = Matrix(k, d);
    m.variances = Matrix(k, d);
    const auto var = column_variance(points, opt.variance_floor);
    for (std::size_t j = 0; j < k; ++j) {
        std::copy(points.row(centers[j]).begin(), points.row(centers[j]).end(), m.means.row(j).begin());
        std::copy(var.begin(), var.end(), m.variances.row(j).begin());
    }
    return m;
}

}  // namespace

void DailyModeSet::validate(double variance_floor) const {
    const std::size_t k = weights.size();
    if (k == 0) throw NumericalFailure("mode set has no components");
    if (means.rows() != k || variances.rows() != k || variances.cols() != means.cols()) {
        throw ShapeMismatch("mode set parameter shapes disagree");
    }
    if (!all_finite(weights) || !all_finite(means.data()) || !all_finite(variances.data())) {
        throw NumericalFailure("mode set has non-finite parameters");
    }
    if (std::abs(label_invariant_sum(weights) - 1.0) > 1e-9) {
        throw NumericalFailure("mode weights do not sum to 1");
    }
    for (double w : weights) {
        if (w < 0.0) throw NumericalFailure("negative mode weight");
    }
    for (double v : variances.data()) {
        if (v < variance_floor || v <= 0.0) throw NumericalFailure("variance below floor");
    }
}

std::string ResponsibilityMatrix::digest() const {
    return sha256_hex(fmt::format("{}x{}:{}", values.rows(), values.cols(), sha256_hex(values.data())));
}

std::vector<double> log_joint(const DailyModeSet& modes, std::span<const double> x) {
    return log_joint_with(modes, precompute(modes), x);
}

std::vector<double> posterior_under(const DailyModeSet& modes, std::span<const double> x) {
    double norm = 0.0;
    return posterior_with_norm(modes, precompute(modes), x, norm);
}

ResponsibilityMatrix responsibilities_under(const DailyModeSet& modes, const Matrix& points,
                                            const std::vector<std::string>& argument_ids) {
    if (argument_ids.size() != points.rows()) {
        throw ShapeMismatch(fmt::format("{} argument ids for {} embeddings", argument_ids.size(), points.rows()));
    }
    ResponsibilityMatrix out;
    out.argument_ids = argument_ids;
    if (points.rows() == 0) {
        out.values = Matrix(0, modes.k());
        return out;
    }
    e_step(modes, points, out.values);
    return out;
}

double mixture_log_likelihood(const DailyModeSet& modes, const Matrix& points) {
    Matrix scratch;
    return e_step(modes, points, scratch);
}

ResponsibilityMatrix harden(const ResponsibilityMatrix& soft) {
    ResponsibilityMatrix out;
    out.argument_ids = soft.argument_ids;
    out.values = Matrix(soft.rows(), soft.modes());
    for (std::size_t i = 0; i < soft.rows(); ++i) {
        const auto hard = harden(soft.values.row(i));
        std::copy(hard.begin(), hard.end(), out.values.row(i).begin());
    }
    return out;
}

std::vector<double> harden(std::span<const double> posterior) {
    std::vector<double> out(posterior.size(), 0.0);
    if (posterior.empty()) return out;
    const auto it = std::max_element(posterior.begin(), posterior.end());
    out[static_cast<std::size_t>(it - posterior.begin())] = 1.0;
    return out;
}

ModeFit fit_daily_modes(const Matrix& points, const std::vector<std::string>& argument_ids,
                        const Date& day, std::size_t k_target, const DailyModeSet* init,
                        std::uint64_t seed, const GmmOptions& options) {
    check_points(points, argument_ids);
    if (k_target == 0) throw ConfigError("mode count must be positive");
    const std::size_t k = std::min(k_target, points.rows());

    ModeFit fit;
    EmResult best;
    if (init != nullptr && init->k() == k && init->dim() == points.cols()) {
        DailyModeSet start = *init;
        const auto var = column_variance(points, options.variance_floor);
        for (std::size_t j = 0; j < k; ++j) {
            std::copy(var.begin(), var.end(), start.variances.row(j).begin());
        }
        start.weights.assign(k, 1.0 / static_cast<double>(k));
        best = run_em(std::move(start), points, options);
        fit.warm_started = true;
    } else {
        const int restarts = std::max(1, options.cold_start_restarts);
        for (int r = 0; r < restarts; ++r) {
            const std::uint64_t s = seed + static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ULL;
            auto res = run_em(kmeanspp_init(points, k, s, options), points, options);
            if (r == 0 || res.modes.log_likelihood > best.modes.log_likelihood) best = std::move(res);
        }
    }
    best.modes.day = day;
    fit.modes = std::move(best.modes);
    fit.log_likelihood_trace = std::move(best.trace);
    fit.responsibilities.argument_ids = argument_ids;
    fit.responsibilities.values = std::move(best.resp);
    return fit;
}

ModeFit singleton_modes(const Matrix& points, const std::vector<std::string>& argument_ids,
                        const Date& day, const GmmOptions& options) {
    check_points(points, argument_ids);
    const std::size_t n = points.rows(), d = points.cols();
    ModeFit fit;
    fit.modes.day = day;
    fit.modes.weights.assign(n, 1.0 / static_cast<double>(n));
    fit.modes.means = points;
    fit.modes.variances = Matrix(n, d);
    const auto var = column_variance(points, options.variance_floor);
    for (std::size_t j = 0; j < n; ++j) std::copy(var.begin(), var.end(), fit.modes.variances.row(j).begin());
    fit.modes.log_likelihood = mixture_log_likelihood(fit.modes, points);
    fit.log_likelihood_trace = {fit.modes.log_likelihood};
    fit.responsibilities.argument_ids = argument_ids;
    fit.responsibilities.values = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) fit.responsibilities.values(i, i) = 1.0;
    return fit;
}

ModeFit relabel(const ModeFit& fit, const std::vector<std::size_t>& perm) {
    const std::size_t k = fit.modes.k();
    if (perm.size() != k) throw ShapeMismatch("permutation length differs from mode count");
    std::vector<bool> seen(k, false);
    for (std::size_t p : perm) {
        if (p >= k || seen[p]) throw ShapeMismatch("not a permutation");
        seen[p] = true;
    }
    ModeFit out = fit;
    const std::size_t d = fit.modes.dim();
    for (std::size_t j = 0; j < k; ++j) {
        out.modes.weights[j] = fit.modes.weights[perm[j]];
        for (std::size_t c = 0; c < d; ++c) {
            out.modes.means(j, c) = fit.modes.means(perm[j], c);
            out.modes.variances(j, c) = fit.modes.variances(perm[j], c);
        }
        for (std::size_t i = 0; i < fit.responsibilities.rows(); ++i) {
            out.responsibilities.values(i, j) = fit.responsibilities.values(i, perm[j]);
        }
    }
    return out;
}

}  // namespace modeflow
