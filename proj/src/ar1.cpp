#include "mfgp/ar1.hpp"

#include "mfgp/log.hpp"

#include <cmath>
#include <limits>

namespace mfgp {

Ar1Chain::Ar1Chain(std::vector<Ar1Level> levels) : levels_(std::move(levels)) {
    check_shape(!levels_.empty(), "ar1 chain needs at least one level");
}

GaussianPrediction Ar1Chain::predict(const Matrix& Xq, int level, bool want_cov) const {
    check_shape(level >= 1 && level <= level_count(), "ar1 predict: level out of range");
    GaussianPrediction acc = levels_.front().gp.predict(Xq, want_cov);
    for (int l = 2; l <= level; ++l) {
        const Ar1Level& lev = levels_[static_cast<std::size_t>(l - 1)];
        GaussianPrediction delta = lev.gp.predict(Xq, want_cov);
        acc.mean = lev.rho * acc.mean + delta.mean;
        acc.variance = lev.rho * lev.rho * acc.variance + delta.variance;
        if (want_cov)
            acc.covariance = lev.rho * lev.rho * *acc.covariance + *delta.covariance;
    }
    return acc;
}

Ar1Level build_ar1_level(const Matrix& X, const Vector& y, const Vector& prev_values, double rho,
                         KernelPtr kernel, double noise_variance, double rel_jitter) {
    check_shape(y.size() == X.rows() && prev_values.size() == X.rows(),
                "ar1 level: inconsistent lengths");
    // Center both series and scale by the level's own spread; the residual
    // targets are then exactly zero-mean for every rho.
    const double m_prev = prev_values.mean();
    Normalization norm = Normalization::from(y);
    Vector resid = ((y.array() - norm.mean) - rho * (prev_values.array() - m_prev)) / norm.scale;
    // De-normalizing the correction GP must reproduce y_l - rho*y_{l-1}:
    // delta_raw = (norm.mean - rho*m_prev) + norm.scale * resid_hat.
    Normalization delta_norm{norm.mean - rho * m_prev, norm.scale};
    GpModel gp = GpModel::make_with_norm(std::move(kernel), X, std::move(resid), delta_norm,
                                         noise_variance, rel_jitter);
    return Ar1Level{rho, std::move(gp)};
}

namespace {

Vector previous_level_values(const FidelityDataset& data, std::size_t level_idx) {
    const FidelityLevel& lev = data.levels[level_idx];
    if (lev.prev_exact) return *lev.prev_exact;
    auto map = nesting_map(lev.X, data.levels[level_idx - 1].X);
    Vector prev(lev.X.rows());
    for (Eigen::Index i = 0; i < lev.X.rows(); ++i)
        prev(i) = data.levels[level_idx - 1].y(map[static_cast<std::size_t>(i)]);
    return prev;
}

} // namespace

Ar1Chain fit_ar1(const FidelityDataset& data, const Ar1FitOptions& opt, Rng& rng) {
    data.validate();
    check_shape(data.level_count() >= 2, "ar1 fit needs at least two fidelity levels");
    for (const auto& lev : data.levels)
        check_shape(lev.X.rows() >= 2, "ar1 fit needs at least two points per level");
    if (!opt.specs_per_level.empty())
        check_shape(static_cast<int>(opt.specs_per_level.size()) == data.level_count(),
                    "ar1 fit: one kernel spec per level expected");

    auto spec_for = [&](int level_idx) -> KernelPtr {
        if (!opt.specs_per_level.empty())
            return opt.specs_per_level[static_cast<std::size_t>(level_idx)]->clone();
        return make_rbf_ard(data.dim());
    };

    std::vector<Ar1Level> levels;

    // base level: an ordinary exact GP
    Rng rng_base = rng.split("ar1-level1");
    GpModel base = fit_gp(data.levels[0].X, data.levels[0].y, *spec_for(0), opt.gp, rng_base);
    levels.push_back(Ar1Level{0.0, std::move(base)});

    for (std::size_t l = 1; l < data.levels.size(); ++l) {
        const FidelityLevel& lev = data.levels[l];
        Vector prev = previous_level_values(data, l);

        const double m_prev = prev.mean();
        Normalization norm = Normalization::from(lev.y);
        Vector y_c = ((lev.y.array() - norm.mean) / norm.scale).matrix();
        Vector p_c = ((prev.array() - m_prev) / norm.scale).matrix();

        KernelPtr kernel = spec_for(static_cast<int>(l));
        const int n_kernel = kernel->param_count();
        const bool learn_noise = opt.gp.learn_noise;
        const int n_params = n_kernel + (learn_noise ? 1 : 0);

        auto noise_of = [&](const Vector& p) {
            return learn_noise ? opt.gp.noise_floor + std::exp(p(n_params - 1))
                               : opt.gp.fixed_noise;
        };

        // rho is profiled out: at fixed hyperparameters the likelihood is
        // maximized by the GLS estimate, and by the envelope theorem the
        // kernel gradients at rho*(theta) need no extra term. Joint argmax,
        // without the numerically stiff rho direction.
        auto rho_star = [&](double noise) {
            Matrix Ky = kernel->gram(lev.X);
            Ky.diagonal().array() += noise;
            CholResult chol = robust_cholesky(Ky, opt.gp.rel_jitter);
            Vector a = chol_solve(chol.L, y_c);
            Vector b = chol_solve(chol.L, p_c);
            double denom = p_c.dot(b);
            return denom > 1e-12 ? p_c.dot(a) / denom : 0.0;
        };

        const double wall = std::log(opt.gp.init_hi) + 5.0;
        Objective objective = [&](const Vector& p, Vector& grad) -> double {
            grad.resize(n_params);
            if (p.cwiseAbs().maxCoeff() > 46.0) {
                grad.setZero();
                return std::numeric_limits<double>::quiet_NaN();
            }
            kernel->set_params(p.head(n_kernel));
            try {
                double rho = rho_star(noise_of(p));
                Vector resid = y_c - rho * p_c;
                LmlResult r = log_marginal_likelihood(*kernel, noise_of(p), lev.X, resid,
                                                      opt.gp.rel_jitter);
                grad.head(n_kernel) = -r.kernel_grad;
                double penalty = 0.0;
                for (int k = 0; k < n_kernel; ++k) {
                    double over = std::max(0.0, p(k) - wall);
                    penalty += 0.5 * opt.gp.wall_weight * over * over;
                    grad(k) += opt.gp.wall_weight * over;
                }
                if (learn_noise)
                    grad(n_params - 1) =
                        -r.noise_grad / noise_of(p) * std::exp(p(n_params - 1));
                return -r.value + penalty;
            } catch (const NumericError&) {
                grad.setZero();
                return std::numeric_limits<double>::quiet_NaN();
            }
        };

        Rng rng_level = rng.split("ar1-level" + std::to_string(l + 1));
        bool have_best = false;
        double best_neg = std::numeric_limits<double>::infinity();
        Vector best_p;
        for (int r = 0; r < opt.gp.restarts; ++r) {
            Vector p0(n_params);
            for (int k = 0; k < n_kernel; ++k)
                p0(k) = std::log(rng_level.log_uniform(opt.gp.init_lo, opt.gp.init_hi));
            if (learn_noise) p0(n_params - 1) = std::log(rng_level.log_uniform(1e-6, 1e-1));
            LbfgsResult res = lbfgs_minimize(objective, p0, opt.gp.lbfgs);
            if (res.failed) continue;
            if (!have_best || res.f < best_neg) {
                best_neg = res.f;
                best_p = res.x;
                have_best = true;
            }
        }
        if (!have_best)
            throw NumericError("ar1 fit: all restarts failed conditioning at level " +
                               std::to_string(l + 1));

        kernel->set_params(best_p.head(n_kernel));
        double rho = rho_star(noise_of(best_p));
        log::debug("ar1 level %zu: rho=%.6f lml=%.6f", l + 1, rho, -best_neg);
        levels.push_back(
            build_ar1_level(lev.X, lev.y, prev, rho, std::move(kernel), noise_of(best_p),
                            opt.gp.rel_jitter));
    }

    return Ar1Chain(std::move(levels));
}

} // namespace mfgp
