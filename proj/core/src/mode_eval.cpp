#include "modeflow/mode_eval.hpp"

#include <cmath>

#include <fmt/format.h>

#include "modeflow/errors.hpp"

namespace modeflow {

std::vector<double> excess_returns(std::span<const double> closes_t, std::span<const double> closes_prev) {
    if (closes_t.size() != closes_prev.size()) {
        throw ShapeMismatch(fmt::format("{} closes today vs {} yesterday", closes_t.size(), closes_prev.size()));
    }
    std::vector<double> r(closes_t.size());
    for (std::size_t s = 0; s < r.size(); ++s) {
        const double a = closes_prev[s], b = closes_t[s];
        if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
            throw MissingPrice(fmt::format("stock {} lacks a positive close", s));
        }
        r[s] = (b - a) / a;
    }
    const double m = mean(r);
    for (double& v : r) v -= m;
    return r;
}

std::optional<double> CrossSection::of(const Ticker& ticker) const {
    for (std::size_t i = 0; i < tickers.size(); ++i) {
        if (tickers[i] == ticker) return returns[i];
    }
    return std::nullopt;
}

CrossSection realized_excess_returns(const PriceTable& prices, const std::vector<Ticker>& universe,
                                     const Date& prev_day, const Date& day, bool strict) {
    CrossSection cs;
    std::vector<double> now, before;
    for (const auto& t : universe) {
        const auto c0 = prices.close(prev_day, t);
        const auto c1 = prices.close(day, t);
        if (!c0 || !c1) {
            if (strict) {
                throw MissingPrice(fmt::format("{}: no close on {}", t, (!c0 ? prev_day : day).iso()));
            }
            cs.excluded.push_back(t);
            continue;
        }
        cs.tickers.push_back(t);
        before.push_back(*c0);
        now.push_back(*c1);
    }
    cs.returns = excess_returns(now, before);
    return cs;
}

std::vector<double> aggregate_mode_scores(const Matrix& responsibilities, std::span<const double> scores) {
    if (responsibilities.rows() != scores.size()) {
        throw ShapeMismatch(fmt::format("{} responsibility rows for {} scores", responsibilities.rows(), scores.size()));
    }
    const std::size_t k = responsibilities.cols();
    std::vector<double> agg(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            num += responsibilities(i, j) * scores[i];
            den += responsibilities(i, j);
        }
        agg[j] = den < kDeadModeMass ? 0.0 : num / den;
    }
    return agg;
}

PerfState update_perf(const PerfState* prev, const ModeAlignment* alignment, std::span<const double> agg,
                      double lambda, const Date& day) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError(fmt::format("smoothing factor {} outside [0, 1]", lambda));
    PerfState out;
    out.day = day;
    out.perf.assign(agg.size(), 0.0);
    out.lineage.assign(agg.size(), 0);
    std::vector<long> source(agg.size(), -1);
    if (prev != nullptr) {
        if (alignment == nullptr) throw ShapeMismatch("performance update needs the alignment from the previous modes");
        out.archived = prev->archived;
        out.next_lineage = prev->next_lineage;
        std::vector<bool> matched(prev->perf.size(), false);
        for (const auto& [i, j] : alignment->pairs) {
            if (i >= prev->perf.size() || j >= agg.size()) {
                throw ShapeMismatch(fmt::format("alignment pair ({}, {}) outside {} previous and {} current modes", i, j,
                                                prev->perf.size(), agg.size()));
            }
            source[j] = static_cast<long>(i);
            matched[i] = true;
        }
        for (std::size_t i = 0; i < matched.size(); ++i) {
            if (!matched[i]) out.archived[prev->lineage.at(i)] = prev->perf[i];
        }
    }
    for (std::size_t k = 0; k < agg.size(); ++k) {
        if (!std::isfinite(agg[k])) throw NumericalFailure("non-finite mode score");
        if (source[k] >= 0) {
            const auto j = static_cast<std::size_t>(source[k]);
            out.perf[k] = lambda * prev->perf[j] + (1.0 - lambda) * agg[k];
            out.lineage[k] = prev->lineage.at(j);
        } else {
            out.perf[k] = (1.0 - lambda) * agg[k];
            out.lineage[k] = out.next_lineage++;
        }
    }
    return out;
}

}  // namespace modeflow
