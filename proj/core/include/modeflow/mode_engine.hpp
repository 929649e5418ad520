#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modeflow/numeric.hpp"
#include "modeflow/types.hpp"

namespace modeflow {

/// One day's Gaussian mixture over argument embeddings. Covariances are
/// diagonal: `variances` has one row of per-dimension variances per mode.
struct DailyModeSet {
    Date day;
    std::vector<double> weights;
    Matrix means;
    Matrix variances;
    double log_likelihood = 0.0;

    std::size_t k() const noexcept { return weights.size(); }
    std::size_t dim() const noexcept { return means.cols(); }

    /// Throws NumericalFailure when weights do not sum to 1, a variance is below
    /// `variance_floor`, or anything is non-finite.
    void validate(double variance_floor = 0.0) const;

    friend bool operator==(const DailyModeSet&, const DailyModeSet&) = default;
};

/// Per-argument posterior over the day's modes.
struct ResponsibilityMatrix {
    std::vector<std::string> argument_ids;
    Matrix values;  // rows = arguments, cols = modes

    std::size_t rows() const noexcept { return values.rows(); }
    std::size_t modes() const noexcept { return values.cols(); }
    std::string digest() const;

    friend bool operator==(const ResponsibilityMatrix&, const ResponsibilityMatrix&) = default;
};

struct GmmOptions {
    int max_iterations = 200;
    double relative_tolerance = 1e-6;
    double variance_floor = 1e-6;
    double weight_floor = 1e-6;
    /// Independent k-means++ seedings tried on a cold start; the fit with the
    /// highest final log-likelihood wins.
    int cold_start_restarts = 4;
};

struct ModeFit {
    DailyModeSet modes;
    ResponsibilityMatrix responsibilities;
    std::vector<double> log_likelihood_trace;  // one entry per E-step
    bool warm_started = false;
};

/// EM fit of a diagonal-covariance mixture with min(k_target, n) components.
/// Warm-starts from `init` means when its component count and dimension match,
/// otherwise seeds with k-means++ from `seed`.
ModeFit fit_daily_modes(const Matrix& points, const std::vector<std::string>& argument_ids,
                        const Date& day, std::size_t k_target, const DailyModeSet* init,
                        std::uint64_t seed, const GmmOptions& options = {});

/// Per-component log(pi_k * N(x | mu_k, Sigma_k)).
std::vector<double> log_joint(const DailyModeSet& modes, std::span<const double> x);

/// Posterior responsibility vector of `x` under `modes`, computed in log space.
std::vector<double> posterior_under(const DailyModeSet& modes, std::span<const double> x);

/// posterior_under applied row by row.
ResponsibilityMatrix responsibilities_under(const DailyModeSet& modes, const Matrix& points,
                                            const std::vector<std::string>& argument_ids);

/// Total data log-likelihood of `points` under `modes`.
double mixture_log_likelihood(const DailyModeSet& modes, const Matrix& points);

/// One-hot argmax rows (ties go to the lowest index).
ResponsibilityMatrix harden(const ResponsibilityMatrix& soft);
std::vector<double> harden(std::span<const double> posterior);

/// Every argument as its own mode: means are the points, weights uniform,
/// variances the pooled per-dimension variance (floored), responsibilities the
/// identity.
ModeFit singleton_modes(const Matrix& points, const std::vector<std::string>& argument_ids,
                        const Date& day, const GmmOptions& options = {});

/// Reorders mode labels: new mode j is old mode `perm[j]`.
ModeFit relabel(const ModeFit& fit, const std::vector<std::size_t>& perm);

/// Frozen linear map from encoder space to the working space. Identity when no
/// basis has been fitted.
class Projection {
public:
    static Projection identity(std::size_t dim);
    /// Top `output_dim` principal directions of `burn_in` (rows). The basis is
    /// orthonormal and applied without centering, so it never lengthens a vector.
    static Projection fit(const Matrix& burn_in, std::size_t output_dim);
    static Projection from_basis(Matrix basis);

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t output_dim() const noexcept { return is_identity_ ? input_dim_ : basis_.rows(); }
    bool is_identity() const noexcept { return is_identity_; }
    const Matrix& basis() const noexcept { return basis_; }

    std::vector<double> apply(std::span<const double> x) const;
    Matrix apply(const Matrix& points) const;

    friend bool operator==(const Projection&, const Projection&) = default;

private:
    std::size_t input_dim_ = 0;
    bool is_identity_ = true;
    Matrix basis_;  // output_dim x input_dim
};

}  // namespace modeflow
