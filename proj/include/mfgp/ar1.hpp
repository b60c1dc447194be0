#pragma once

#include "mfgp/dataset.hpp"
#include "mfgp/gp.hpp"

#include <vector>

namespace mfgp {

/// One level of the linear autoregressive chain. Level 1 is the base GP and
/// carries no scaling; levels above hold the fitted rho and the correction GP
/// trained on y_l - rho * y_{l-1} at this level's inputs.
struct Ar1Level {
    double rho = 0.0;
    GpModel gp;
};

class Ar1Chain {
public:
    explicit Ar1Chain(std::vector<Ar1Level> levels);

    int level_count() const { return static_cast<int>(levels_.size()); }
    const Ar1Level& level(int l) const { return levels_.at(static_cast<std::size_t>(l - 1)); }

    /// Posterior at fidelity `level` (1-based): mean_l = rho_l mean_{l-1} +
    /// mean_delta, var_l = rho_l^2 var_{l-1} + var_delta. The low-fidelity
    /// sample and the correction are independent, so the blocks add.
    GaussianPrediction predict(const Matrix& Xq, int level, bool want_cov = false) const;
    GaussianPrediction predict(const Matrix& Xq) const {
        return predict(Xq, level_count());
    }

private:
    std::vector<Ar1Level> levels_;
};

struct Ar1FitOptions {
    GpFitOptions gp;                          // per-level optimizer settings
    std::vector<KernelPtr> specs_per_level;   // empty -> ARD RBF everywhere
};

/// Correction-level constructor shared by the fitter and by tests that pin
/// hyperparameters: normalizes the level targets, forms the rho-residuals and
/// caches the GP factors. `kernel` is used as-is (no optimization).
Ar1Level build_ar1_level(const Matrix& X, const Vector& y, const Vector& prev_values, double rho,
                         KernelPtr kernel, double noise_variance, double rel_jitter = 1e-6);

/// Level-wise maximum-likelihood fit: the base GP on level 1, then for each
/// higher level a joint gradient fit of (rho, correction kernel, noise) on the
/// residual likelihood. Designs must be nested unless prev_exact values
/// accompany the dataset.
Ar1Chain fit_ar1(const FidelityDataset& data, const Ar1FitOptions& options, Rng& rng);

} // namespace mfgp
