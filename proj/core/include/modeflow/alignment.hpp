#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "modeflow/numeric.hpp"
#include "modeflow/types.hpp"

namespace modeflow {

/// Correspondence between the previous day's modes and the current day's.
struct ModeAlignment {
    Date day_from;
    Date day_to;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (prev, curr), sorted by prev
    std::vector<std::size_t> retired;  // unmatched previous modes
    std::vector<std::size_t> born;     // unmatched current modes
    double total_cost = 0.0;

    /// Current index matched to previous mode `prev`, or -1.
    long current_of(std::size_t prev) const;
    /// Previous index matched to current mode `curr`, or -1.
    long previous_of(std::size_t curr) const;

    friend bool operator==(const ModeAlignment&, const ModeAlignment&) = default;
};

/// Builds an alignment from explicit pairs, filling retired/born and the cost
/// (sum of Euclidean distances in ascending previous-index order).
ModeAlignment make_alignment(const Matrix& prev_means, const Matrix& curr_means,
                             std::vector<std::pair<std::size_t, std::size_t>> pairs);

/// Minimum-cost rectangular assignment of `cost` (rows x cols), matching
/// min(rows, cols) pairs with a shortest-augmenting-path solver. Returns the
/// column of each row, -1 for unmatched rows.
std::vector<long> solve_assignment(const Matrix& cost);

/// Globally minimal matching of size min(k_prev, k_curr) under Euclidean
/// distance. Among equal-cost optima the pair list (sorted by previous index)
/// is lexicographically smallest.
ModeAlignment align_modes(const Matrix& prev_means, const Matrix& curr_means);

/// Exhaustive reference for align_modes. Throws SizeLimitExceeded when
/// min(k_prev, k_curr) > 8 or more than 5e6 injective maps would be visited.
ModeAlignment brute_force_align(const Matrix& prev_means, const Matrix& curr_means);

/// Alignment used when temporal alignment is switched off: index i pairs with
/// i when both days have the same number of modes; otherwise every previous
/// mode retires and every current mode is born.
ModeAlignment identity_alignment(const Matrix& prev_means, const Matrix& curr_means);

}  // namespace modeflow
