#pragma once

#include "mfgp/types.hpp"

namespace mfgp {

/// Lower-triangular Cholesky factor of K + jitter*I. The jitter is relative
/// to the mean diagonal (the total signal variance for stationary kernels)
/// and escalates x10 up to three times before giving up.
struct CholResult {
    Matrix L;
    double jitter = 0.0; // absolute value actually added
};

CholResult robust_cholesky(const Matrix& K, double rel_jitter = 1e-6, int escalations = 3);

/// Same escalation ladder with a caller-chosen jitter scale instead of the
/// mean diagonal (the GP solvers scale by the target variance, so a kernel
/// whose fitted amplitude drifted high cannot drag the jitter with it).
CholResult robust_cholesky_scaled(const Matrix& K, double scale, double rel_jitter = 1e-6,
                                  int escalations = 3);

/// Solve L L^T x = b given the lower factor.
Vector chol_solve(const Matrix& L, const Vector& b);
Matrix chol_solve(const Matrix& L, const Matrix& B);

/// log|K| from its Cholesky factor.
double chol_logdet(const Matrix& L);

} // namespace mfgp
