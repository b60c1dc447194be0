#pragma once

#include "mfgp/kernels.hpp"
#include "mfgp/lbfgs.hpp"
#include "mfgp/linalg.hpp"
#include "mfgp/rng.hpp"
#include "mfgp/types.hpp"

#include <optional>
#include <vector>

namespace mfgp {

/// Affine output transform y_norm = (y - mean) / scale applied before
/// fitting and inverted at prediction time.
struct Normalization {
    double mean = 0.0;
    double scale = 1.0;

    static Normalization identity() { return {}; }
    static Normalization from(const Vector& y);
};

/// Marginal likelihood of raw (already normalized) targets under a zero-mean
/// GP prior, with gradients in log-hyperparameter space.
struct LmlResult {
    double value = 0.0;
    Vector kernel_grad;       // d lml / d(log theta)
    double noise_grad = 0.0;  // d lml / d(log sigma_n^2); 0 when noise is 0
};

LmlResult log_marginal_likelihood(const Kernel& kernel, double noise_variance, const Matrix& X,
                                  const Vector& y, double rel_jitter = 1e-6);

struct GpFitOptions {
    int restarts = 10;
    bool learn_noise = true;
    double fixed_noise = 0.0;  // used when learn_noise == false
    double noise_floor = 1e-8; // additive floor under the learned noise
    double init_lo = 1e-2;     // log-uniform initialization box
    double init_hi = 1e1;
    double rel_jitter = 1e-6;
    bool normalize = true;
    // One-sided quadratic wall on kernel log-params one e-fold above the
    // search box. Zero inside the box, so maximum-likelihood behavior is
    // untouched there; it only stops the flat sigma^2, l -> inf ridge of
    // composite kernels (the RBF constant+linear limit), whose inflated
    // signal variance would drag the relative jitter with it.
    double wall_weight = 50.0;
    LbfgsOptions lbfgs;
    // Tried before random restarts; lets refits warm-start from known-good
    // hyperparameters.
    std::vector<Vector> warm_starts;
};

class GpModel {
public:
    /// Build from explicit hyperparameters (no optimization); factors cached.
    static GpModel make(KernelPtr kernel, Matrix X, Vector y, double noise_variance,
                        bool normalize = false, double rel_jitter = 1e-6);

    /// Same, but with caller-supplied normalization constants.
    static GpModel make_with_norm(KernelPtr kernel, Matrix X, Vector y_normalized,
                                  Normalization norm, double noise_variance,
                                  double rel_jitter = 1e-6);

    GaussianPrediction predict(const Matrix& Xq, bool want_cov = false,
                               bool include_noise = false) const;

    /// S x m matrix of joint posterior draws at Xq.
    Matrix sample_posterior(const Matrix& Xq, int count, Rng& rng) const;

    double lml() const { return lml_; }
    double noise_variance() const { return noise_variance_; }
    const Kernel& kernel() const { return *kernel_; }
    const Matrix& x_train() const { return X_; }
    /// Raw-unit training targets.
    Vector y_train_raw() const { return (y_norm_.array() * norm_.scale + norm_.mean).matrix(); }
    const Vector& y_train_normalized() const { return y_norm_; }
    const Normalization& normalization() const { return norm_; }
    double rel_jitter() const { return rel_jitter_; }
    Eigen::Index train_size() const { return X_.rows(); }
    int input_dim() const { return kernel_->input_dim(); }

    /// Flat optimizer view: kernel log-params (+ log noise when learned).
    Vector hyperparameters(bool with_noise) const;

    GpModel clone() const;

private:
    GpModel() = default;
    void refresh();

    KernelPtr kernel_;
    double noise_variance_ = 0.0;
    Matrix X_;
    Vector y_norm_;
    Normalization norm_;
    double rel_jitter_ = 1e-6;

    Matrix chol_;  // lower factor of K + (noise + jitter) I
    Vector alpha_; // (K + noise I)^-1 y_norm
    double lml_ = 0.0;

    friend GpModel fit_gp(const Matrix&, const Vector&, const Kernel&, const GpFitOptions&, Rng&);
    friend struct GpModelAccess;
};

/// Multi-start maximum-likelihood fit. The returned model achieves the best
/// LML over all restarts (and all warm starts, and their raw initial points).
GpModel fit_gp(const Matrix& X, const Vector& y, const Kernel& spec, const GpFitOptions& options,
               Rng& rng);

} // namespace mfgp
