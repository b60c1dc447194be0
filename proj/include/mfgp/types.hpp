#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace mfgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Pointwise Gaussian posterior at a batch of query locations.
struct GaussianPrediction {
    Vector mean;
    Vector variance;
    std::optional<Matrix> covariance;

    Eigen::Index size() const { return mean.size(); }
};

// Error taxonomy used across the library. The CLI maps these onto exit codes.

/// Mismatched matrix/vector shapes or kernel dimension violations.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed files, schema violations, non-nested designs, bad configs.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Cholesky/conditioning failures, diverged optimizers, non-finite values.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void check_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

} // namespace mfgp
