#include "mfgp/linalg.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace mfgp {

CholResult robust_cholesky(const Matrix& K, double rel_jitter, int escalations) {
    return robust_cholesky_scaled(K, std::max(K.diagonal().mean(), 1e-300), rel_jitter,
                                  escalations);
}

CholResult robust_cholesky_scaled(const Matrix& K, double scale, double rel_jitter,
                                  int escalations) {
    check_shape(K.rows() == K.cols(), "cholesky requires a square matrix");
    double jitter = rel_jitter * std::max(scale, 1e-300);
    for (int attempt = 0; attempt <= escalations; ++attempt) {
        Matrix Kj = K;
        Kj.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(Kj);
        if (llt.info() == Eigen::Success)
            return {Matrix(llt.matrixL()), jitter};
        jitter *= 10.0;
    }
    throw NumericError("cholesky failed after jitter escalation up to " +
                       std::to_string(jitter / 10.0));
}

Vector chol_solve(const Matrix& L, const Vector& b) {
    Vector x = L.triangularView<Eigen::Lower>().solve(b);
    L.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
}

Matrix chol_solve(const Matrix& L, const Matrix& B) {
    Matrix X = L.triangularView<Eigen::Lower>().solve(B);
    L.transpose().triangularView<Eigen::Upper>().solveInPlace(X);
    return X;
}

double chol_logdet(const Matrix& L) {
    return 2.0 * L.diagonal().array().log().sum();
}

} // namespace mfgp
