#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "modeflow/errors.hpp"
#include "modeflow/mode_engine.hpp"

namespace modeflow {

Projection Projection::identity(std::size_t dim) {
    Projection p;
    p.input_dim_ = dim;
    return p;
}

Projection Projection::from_basis(Matrix basis) {
    if (basis.rows() == 0 || basis.cols() == 0) throw ShapeMismatch("projection basis is empty");
    if (!all_finite(basis.data())) throw NumericalFailure("projection basis is not finite");
    Projection p;
    p.input_dim_ = basis.cols();
    p.is_identity_ = false;
    p.basis_ = std::move(basis);
    return p;
}

Projection Projection::fit(const Matrix& burn_in, std::size_t output_dim) {
    const std::size_t n = burn_in.rows(), d = burn_in.cols();
    if (n == 0) throw EmptyInput("projection burn-in has no embeddings");
    if (output_dim == 0) throw ConfigError("projection dimension must be positive");
    if (output_dim >= d) return identity(d);
    if (output_dim > n) {
        throw ConfigError(fmt::format("projection to {} dimensions needs at least that many burn-in embeddings, got {}",
                                      output_dim, n));
    }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        burn_in.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    const Eigen::MatrixXd& v = svd.matrixV();
    Matrix basis(output_dim, d);
    for (std::size_t r = 0; r < output_dim; ++r) {
        // Fix the sign so the largest-magnitude coordinate is positive.
        Eigen::Index arg = 0;
        v.col(static_cast<Eigen::Index>(r)).cwiseAbs().maxCoeff(&arg);
        const double sign = v(arg, static_cast<Eigen::Index>(r)) < 0.0 ? -1.0 : 1.0;
        for (std::size_t c = 0; c < d; ++c) {
            basis(r, c) = sign * v(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));
        }
    }
    return from_basis(std::move(basis));
}

std::vector<double> Projection::apply(std::span<const double> x) const {
    if (x.size() != input_dim_) {
        throw DimensionMismatch(fmt::format("projection expects dimension {}, got {}", input_dim_, x.size()));
    }
    if (is_identity_) return {x.begin(), x.end()};
    std::vector<double> out(basis_.rows(), 0.0);
    for (std::size_t r = 0; r < basis_.rows(); ++r) {
        const auto b = basis_.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) s += b[c] * x[c];
        out[r] = s;
    }
    return out;
}

Matrix Projection::apply(const Matrix& points) const {
    if (points.rows() > 0 && points.cols() != input_dim_) {
        throw DimensionMismatch(fmt::format("projection expects dimension {}, got {}", input_dim_, points.cols()));
    }
    if (is_identity_) return points;
    Matrix out(points.rows(), output_dim());
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto y = apply(points.row(i));
        std::copy(y.begin(), y.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace modeflow
