#include "mfgp/gp.hpp"

#include "mfgp/log.hpp"

#include <cmath>
#include <limits>

namespace mfgp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Jitter scale for K_y factorizations: the Gram diagonal, capped at 10x the
// targets' second moment so a drifted kernel amplitude cannot inflate it.
// Floored at 1e-6 of the diagonal: near-zero targets still need enough
// jitter for the factorization itself.
double jitter_scale(const Matrix& Ky, const Vector& y) {
    double diag = std::max(Ky.diagonal().mean(), 1e-300);
    double y2 = y.size() > 0 ? y.squaredNorm() / static_cast<double>(y.size()) : 0.0;
    return std::min(diag, std::max(10.0 * y2, 1e-6 * diag));
}

} // namespace

Normalization Normalization::from(const Vector& y) {
    Normalization n;
    n.mean = y.size() > 0 ? y.mean() : 0.0;
    double var = y.size() > 0 ? (y.array() - n.mean).square().mean() : 0.0;
    n.scale = std::sqrt(var);
    if (!(n.scale > 1e-12 * std::max(1.0, std::abs(n.mean)))) n.scale = 1.0;
    return n;
}

LmlResult log_marginal_likelihood(const Kernel& kernel, double noise_variance, const Matrix& X,
                                  const Vector& y, double rel_jitter) {
    check_shape(X.rows() == y.size(), "lml: X rows must match y length");
    check_shape(X.rows() >= 1, "lml: empty training set");
    const auto n = X.rows();

    Matrix Ky = kernel.gram(X);
    Ky.diagonal().array() += noise_variance;
    CholResult chol = robust_cholesky_scaled(Ky, jitter_scale(Ky, y), rel_jitter);

    Vector alpha = chol_solve(chol.L, y);
    LmlResult res;
    res.value = -0.5 * y.dot(alpha) - 0.5 * chol_logdet(chol.L) - 0.5 * n * kLog2Pi;

    // d lml / d theta_j = 1/2 tr((alpha alpha^T - Ky^-1) dK/dtheta_j)
    Matrix M = alpha * alpha.transpose() - chol_solve(chol.L, Matrix(Matrix::Identity(n, n)));
    std::vector<Matrix> grads = kernel.gram_grad(X);
    res.kernel_grad.resize(static_cast<Eigen::Index>(grads.size()));
    for (std::size_t j = 0; j < grads.size(); ++j)
        res.kernel_grad(static_cast<Eigen::Index>(j)) = 0.5 * M.cwiseProduct(grads[j]).sum();
    res.noise_grad = 0.5 * noise_variance * M.trace();
    return res;
}

GpModel GpModel::make(KernelPtr kernel, Matrix X, Vector y, double noise_variance, bool normalize,
                      double rel_jitter) {
    Normalization norm = normalize ? Normalization::from(y) : Normalization::identity();
    Vector y_norm = ((y.array() - norm.mean) / norm.scale).matrix();
    return make_with_norm(std::move(kernel), std::move(X), std::move(y_norm), norm, noise_variance,
                          rel_jitter);
}

GpModel GpModel::make_with_norm(KernelPtr kernel, Matrix X, Vector y_normalized,
                                Normalization norm, double noise_variance, double rel_jitter) {
    check_shape(X.rows() == y_normalized.size(), "gp: X rows must match y length");
    check_shape(X.cols() == kernel->input_dim(), "gp: X width must match kernel input dim");
    GpModel m;
    m.kernel_ = std::move(kernel);
    m.noise_variance_ = noise_variance;
    m.X_ = std::move(X);
    m.y_norm_ = std::move(y_normalized);
    m.norm_ = norm;
    m.rel_jitter_ = rel_jitter;
    m.refresh();
    return m;
}

void GpModel::refresh() {
    Matrix Ky = kernel_->gram(X_);
    Ky.diagonal().array() += noise_variance_;
    CholResult chol = robust_cholesky_scaled(Ky, jitter_scale(Ky, y_norm_), rel_jitter_);
    chol_ = std::move(chol.L);
    alpha_ = chol_solve(chol_, y_norm_);
    lml_ = -0.5 * y_norm_.dot(alpha_) - 0.5 * chol_logdet(chol_) -
           0.5 * static_cast<double>(X_.rows()) * kLog2Pi;
}

GaussianPrediction GpModel::predict(const Matrix& Xq, bool want_cov, bool include_noise) const {
    check_shape(Xq.cols() == kernel_->input_dim(), "predict: query width mismatch");
    Matrix Kq = kernel_->gram(X_, Xq); // n x m
    GaussianPrediction out;
    out.mean = (Kq.transpose() * alpha_).array() * norm_.scale + norm_.mean;

    Matrix V = chol_.triangularView<Eigen::Lower>().solve(Kq); // n x m
    Vector prior_diag(Xq.rows());
    for (Eigen::Index i = 0; i < Xq.rows(); ++i) {
        Vector xi = Xq.row(i);
        prior_diag(i) = kernel_->eval(xi, xi);
    }
    Vector var = prior_diag - V.colwise().squaredNorm().transpose();
    if (include_noise) var.array() += noise_variance_;
    out.variance = (var.array().max(0.0) * norm_.scale * norm_.scale).matrix();

    if (want_cov) {
        Matrix cov = kernel_->gram(Xq) - V.transpose() * V;
        if (include_noise) cov.diagonal().array() += noise_variance_;
        cov *= norm_.scale * norm_.scale;
        // keep the diagonal consistent with the clamped variance
        for (Eigen::Index i = 0; i < cov.rows(); ++i) cov(i, i) = out.variance(i);
        out.covariance = 0.5 * (cov + cov.transpose());
    }
    return out;
}

Matrix GpModel::sample_posterior(const Matrix& Xq, int count, Rng& rng) const {
    check_shape(count >= 1, "sample_posterior: count must be >= 1");
    GaussianPrediction pred = predict(Xq, /*want_cov=*/true);
    CholResult chol = robust_cholesky(*pred.covariance, rel_jitter_);
    Matrix samples(count, Xq.rows());
    for (int s = 0; s < count; ++s) {
        Vector z = rng.normal_vector(Xq.rows());
        samples.row(s) = (pred.mean + chol.L * z).transpose();
    }
    return samples;
}

Vector GpModel::hyperparameters(bool with_noise) const {
    Vector kp = kernel_->params();
    if (!with_noise) return kp;
    Vector out(kp.size() + 1);
    out.head(kp.size()) = kp;
    out(kp.size()) = std::log(std::max(noise_variance_, 1e-300));
    return out;
}

GpModel GpModel::clone() const {
    GpModel m;
    m.kernel_ = kernel_->clone();
    m.noise_variance_ = noise_variance_;
    m.X_ = X_;
    m.y_norm_ = y_norm_;
    m.norm_ = norm_;
    m.rel_jitter_ = rel_jitter_;
    m.chol_ = chol_;
    m.alpha_ = alpha_;
    m.lml_ = lml_;
    return m;
}

GpModel fit_gp(const Matrix& X, const Vector& y, const Kernel& spec, const GpFitOptions& opt,
               Rng& rng) {
    check_shape(X.rows() == y.size(), "fit_gp: X rows must match y length");
    check_shape(X.rows() >= 1, "fit_gp: empty training set");
    check_shape(opt.restarts >= 1, "fit_gp: restarts must be >= 1");

    Normalization norm = opt.normalize ? Normalization::from(y) : Normalization::identity();
    Vector y_norm = ((y.array() - norm.mean) / norm.scale).matrix();
    if (opt.normalize) {
        // snap normalized targets to a 2^-40 grid so affine-equivalent raw
        // targets yield bit-identical fits (restart selection is chaotic in
        // the last float bits otherwise)
        const double grid = 0x1.0p40;
        y_norm = (y_norm.array() * grid).round() / grid;
    }

    KernelPtr kernel = spec.clone();
    const int n_kernel = kernel->param_count();
    const int n_params = n_kernel + (opt.learn_noise ? 1 : 0);

    auto noise_of = [&](const Vector& p) {
        return opt.learn_noise ? opt.noise_floor + std::exp(p(n_kernel)) : opt.fixed_noise;
    };

    const double wall = std::log(opt.init_hi) + 5.0;
    Objective objective = [&](const Vector& p, Vector& grad) -> double {
        grad.resize(n_params);
        if (p.cwiseAbs().maxCoeff() > 46.0) { // exp() would leave double range
            grad.setZero();
            return std::numeric_limits<double>::quiet_NaN();
        }
        kernel->set_params(p.head(n_kernel));
        try {
            LmlResult r = log_marginal_likelihood(*kernel, noise_of(p), X, y_norm, opt.rel_jitter);
            double penalty = 0.0;
            grad.head(n_kernel) = -r.kernel_grad;
            for (int j = 0; j < n_kernel; ++j) {
                double over = std::max(0.0, p(j) - wall);
                penalty += 0.5 * opt.wall_weight * over * over;
                grad(j) += opt.wall_weight * over;
            }
            if (opt.learn_noise) {
                // lml is differentiated w.r.t. log(sigma^2); chain through the floor
                double sigma2 = noise_of(p);
                grad(n_kernel) = -r.noise_grad / sigma2 * std::exp(p(n_kernel));
            }
            return -r.value + penalty;
        } catch (const NumericError&) {
            grad.setZero();
            return std::numeric_limits<double>::quiet_NaN();
        }
    };

    auto random_init = [&]() {
        Vector p(n_params);
        for (int j = 0; j < n_kernel; ++j) p(j) = std::log(rng.log_uniform(opt.init_lo, opt.init_hi));
        if (opt.learn_noise) p(n_kernel) = std::log(rng.log_uniform(1e-6, 1e-1));
        return p;
    };

    std::vector<Vector> inits = opt.warm_starts;
    for (auto& w : inits)
        check_shape(w.size() == n_params, "fit_gp: warm start has wrong parameter count");
    while (static_cast<int>(inits.size()) < opt.restarts + static_cast<int>(opt.warm_starts.size()))
        inits.push_back(random_init());

    bool have_best = false;
    double best_neg = std::numeric_limits<double>::infinity();
    Vector best_p;
    int failures = 0;
    for (const Vector& p0 : inits) {
        LbfgsResult r = lbfgs_minimize(objective, p0, opt.lbfgs);
        if (r.failed) {
            ++failures;
            continue;
        }
        if (!have_best || r.f < best_neg) {
            best_neg = r.f;
            best_p = r.x;
            have_best = true;
        }
    }
    if (!have_best)
        throw NumericError("fit_gp: all " + std::to_string(inits.size()) +
                           " restarts failed conditioning (" + std::to_string(failures) +
                           " non-finite at init)");

    kernel->set_params(best_p.head(n_kernel));
    double noise = noise_of(best_p);
    log::debug("fit_gp: best lml %.6f over %zu starts", -best_neg, inits.size());
    return GpModel::make_with_norm(std::move(kernel), X, y_norm, norm, noise, opt.rel_jitter);
}

} // namespace mfgp
