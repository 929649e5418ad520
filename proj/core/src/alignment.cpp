#include "modeflow/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <fmt/format.h>

#include "modeflow/errors.hpp"

namespace modeflow {

namespace {

void check_inputs(const Matrix& prev, const Matrix& curr) {
    if (prev.rows() == 0 || curr.rows() == 0) throw EmptyInput("alignment needs modes on both days");
    if (prev.cols() != curr.cols()) {
        throw DimensionMismatch(fmt::format("mode dimensions differ: {} vs {}", prev.cols(), curr.cols()));
    }
}

Matrix distance_matrix(const Matrix& prev, const Matrix& curr) {
    Matrix d(prev.rows(), curr.rows());
    for (std::size_t i = 0; i < prev.rows(); ++i) {
        for (std::size_t j = 0; j < curr.rows(); ++j) d(i, j) = euclidean_distance(prev.row(i), curr.row(j));
    }
    return d;
}

double tolerance_for(double cost) { return 1e-10 * std::max(1.0, std::abs(cost)); }

struct WideSolution {
    std::vector<long> col_of;
    std::vector<double> u;  // row potentials
    std::vector<double> v;  // column potentials, zero on unmatched columns
};

// Shortest augmenting path assignment for rows <= cols, 1-based potentials.
// The final potentials are optimal duals: u_i + v_j <= a_ij everywhere, with
// equality on matched edges.
WideSolution assign_wide(const Matrix& a) {
    const std::size_t n = a.rows(), m = a.cols();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    WideSolution sol{std::vector<long>(n, -1), std::vector<double>(u.begin() + 1, u.end()),
                     std::vector<double>(v.begin() + 1, v.end())};
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) sol.col_of[p[j] - 1] = static_cast<long>(j - 1);
    }
    return sol;
}

double assignment_cost(const Matrix& cost) {
    if (cost.rows() == 0 || cost.cols() == 0) return 0.0;
    const auto cols = solve_assignment(cost);
    double s = 0.0;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] >= 0) s += cost(i, static_cast<std::size_t>(cols[i]));
    }
    return s;
}

Matrix transposed(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    }
    return t;
}

Matrix submatrix(const Matrix& m, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
    Matrix out(rows.size(), cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = m(rows[r], cols[c]);
    }
    return out;
}

}  // namespace

long ModeAlignment::current_of(std::size_t prev) const {
    for (const auto& [i, j] : pairs) {
        if (i == prev) return static_cast<long>(j);
    }
    return -1;
}

long ModeAlignment::previous_of(std::size_t curr) const {
    for (const auto& [i, j] : pairs) {
        if (j == curr) return static_cast<long>(i);
    }
    return -1;
}

ModeAlignment make_alignment(const Matrix& prev_means, const Matrix& curr_means,
                             std::vector<std::pair<std::size_t, std::size_t>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    ModeAlignment out;
    std::vector<bool> prev_used(prev_means.rows(), false), curr_used(curr_means.rows(), false);
    double cost = 0.0;
    for (const auto& [i, j] : pairs) {
        if (i >= prev_means.rows() || j >= curr_means.rows() || prev_used[i] || curr_used[j]) {
            throw ShapeMismatch("alignment pairs are not an injective map between the mode sets");
        }
        prev_used[i] = curr_used[j] = true;
        cost += euclidean_distance(prev_means.row(i), curr_means.row(j));
    }
    for (std::size_t i = 0; i < prev_used.size(); ++i) {
        if (!prev_used[i]) out.retired.push_back(i);
    }
    for (std::size_t j = 0; j < curr_used.size(); ++j) {
        if (!curr_used[j]) out.born.push_back(j);
    }
    out.pairs = std::move(pairs);
    out.total_cost = cost;
    return out;
}

std::vector<long> solve_assignment(const Matrix& cost) {
    if (cost.rows() == 0) return {};
    if (cost.cols() == 0) return std::vector<long>(cost.rows(), -1);
    if (!all_finite(cost.data())) throw NumericalFailure("assignment cost is not finite");
    if (cost.rows() <= cost.cols()) return assign_wide(cost).col_of;
    const auto row_of_col = assign_wide(transposed(cost)).col_of;
    std::vector<long> col_of(cost.rows(), -1);
    for (std::size_t j = 0; j < row_of_col.size(); ++j) {
        if (row_of_col[j] >= 0) col_of[static_cast<std::size_t>(row_of_col[j])] = static_cast<long>(j);
    }
    return col_of;
}

ModeAlignment align_modes(const Matrix& prev_means, const Matrix& curr_means) {
    check_inputs(prev_means, curr_means);
    const Matrix dist = distance_matrix(prev_means, curr_means);
    const std::size_t kp = dist.rows(), kc = dist.cols();
    if (!all_finite(dist.data())) throw NumericalFailure("mode distances are not finite");

    // Optimal duals in (prev, curr) orientation. Every optimal matching uses
    // only edges of zero reduced cost and leaves unmatched only previous modes
    // whose potential is zero.
    std::vector<double> u_prev, v_curr;
    double optimum = 0.0;
    if (kp <= kc) {
        const auto sol = assign_wide(dist);
        u_prev = sol.u;
        v_curr = sol.v;
        for (std::size_t i = 0; i < kp; ++i) optimum += dist(i, static_cast<std::size_t>(sol.col_of[i]));
    } else {
        const auto sol = assign_wide(transposed(dist));
        u_prev = sol.v;
        v_curr = sol.u;
        for (std::size_t j = 0; j < kc; ++j) optimum += dist(static_cast<std::size_t>(sol.col_of[j]), j);
    }
    const double limit = optimum + tolerance_for(optimum);
    double scale = 1.0;
    for (double d : dist.data()) scale = std::max(scale, d);
    const double dual_tol = 1e-9 * scale;

    // Fix previous modes in index order, each to the smallest current index
    // (or to nothing) that still admits an optimal completion.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<bool> curr_used(kc, false);
    double fixed = 0.0;
    std::size_t unmatched = 0;
    const std::size_t target = std::min(kp, kc);
    const std::size_t allowed_unmatched = kp - target;
    for (std::size_t i = 0; i < kp; ++i) {
        std::vector<std::size_t> rest_rows;
        for (std::size_t r = i + 1; r < kp; ++r) rest_rows.push_back(r);
        auto completion = [&](const std::vector<bool>& used) {
            std::vector<std::size_t> cols;
            for (std::size_t c = 0; c < kc; ++c) {
                if (!used[c]) cols.push_back(c);
            }
            return assignment_cost(submatrix(dist, rest_rows, cols));
        };
        const bool may_skip = unmatched < allowed_unmatched && pairs.size() + rest_rows.size() >= target;
        const bool may_match = pairs.size() < target;

        // Candidates as (column, or kc for "unmatched"), in preference order.
        std::vector<std::size_t> candidates;
        for (std::size_t j = 0; j < kc && may_match; ++j) {
            if (!curr_used[j] && dist(i, j) - u_prev[i] - v_curr[j] <= dual_tol) candidates.push_back(j);
        }
        if (may_skip && std::abs(u_prev[i]) <= dual_tol) candidates.push_back(kc);
        if (candidates.empty()) {
            for (std::size_t j = 0; j < kc && may_match; ++j) {
                if (!curr_used[j]) candidates.push_back(j);
            }
            if (may_skip) candidates.push_back(kc);
        }

        std::optional<std::size_t> choice;
        if (candidates.size() == 1) {
            choice = candidates.front();
        } else {
            for (std::size_t j : candidates) {
                auto used = curr_used;
                double step = 0.0;
                if (j < kc) {
                    used[j] = true;
                    step = dist(i, j);
                }
                if (fixed + step + completion(used) <= limit) {
                    choice = j;
                    break;
                }
            }
        }
        if (!choice) throw NumericalFailure("alignment refinement lost the optimum");
        if (*choice < kc) {
            pairs.emplace_back(i, *choice);
            fixed += dist(i, *choice);
            curr_used[*choice] = true;
        } else {
            ++unmatched;
        }
    }
    return make_alignment(prev_means, curr_means, std::move(pairs));
}

ModeAlignment brute_force_align(const Matrix& prev_means, const Matrix& curr_means) {
    check_inputs(prev_means, curr_means);
    const std::size_t kp = prev_means.rows(), kc = curr_means.rows();
    const std::size_t small = std::min(kp, kc), large = std::max(kp, kc);
    if (small > 8) throw SizeLimitExceeded(fmt::format("exhaustive alignment limited to 8 modes, got {}", small));
    double maps = 1.0;
    for (std::size_t t = 0; t < small; ++t) maps *= static_cast<double>(large - t);
    if (maps > 5e6) {
        throw SizeLimitExceeded(fmt::format("exhaustive alignment would visit {:.0f} maps", maps));
    }
    const Matrix dist = distance_matrix(prev_means, curr_means);
    const std::size_t allowed_unmatched = kp > kc ? kp - kc : 0;

    // Depth-first over previous modes; choices are visited as current index
    // ascending, then "unmatched", so complete maps appear in lexicographic order.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<bool> used(kc, false);
    auto visit = [&](auto&& self, std::size_t i, std::size_t skipped, double cost, auto&& on_map) -> bool {
        if (i == kp) return on_map(cost);
        for (std::size_t j = 0; j < kc; ++j) {
            if (used[j]) continue;
            used[j] = true;
            pairs.emplace_back(i, j);
            const bool stop = self(self, i + 1, skipped, cost + dist(i, j), on_map);
            pairs.pop_back();
            used[j] = false;
            if (stop) return true;
        }
        if (skipped < allowed_unmatched) return self(self, i + 1, skipped + 1, cost, on_map);
        return false;
    };

    double best = std::numeric_limits<double>::infinity();
    visit(visit, 0, 0, 0.0, [&](double c) {
        best = std::min(best, c);
        return false;
    });
    const double limit = best + tolerance_for(best);
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    visit(visit, 0, 0, 0.0, [&](double c) {
        if (c > limit) return false;
        chosen = pairs;
        return true;
    });
    return make_alignment(prev_means, curr_means, std::move(chosen));
}

ModeAlignment identity_alignment(const Matrix& prev_means, const Matrix& curr_means) {
    check_inputs(prev_means, curr_means);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (prev_means.rows() == curr_means.rows()) {
        for (std::size_t i = 0; i < prev_means.rows(); ++i) pairs.emplace_back(i, i);
    }
    return make_alignment(prev_means, curr_means, std::move(pairs));
}

}  // namespace modeflow
