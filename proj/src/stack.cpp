#include "mfgp/stack.hpp"

#include "mfgp/log.hpp"

#include <cmath>

namespace mfgp {

Matrix shift_inputs(const Matrix& X, int dim, double tau, const Matrix& domain,
                    BoundaryRule rule) {
    check_shape(dim >= 0 && dim < X.cols(), "shift_inputs: dimension out of range");
    Matrix S = X;
    const double lo = domain(dim, 0), hi = domain(dim, 1);
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        double v = S(i, dim) + tau;
        if (rule == BoundaryRule::Clamp) {
            v = std::min(std::max(v, lo), hi);
        } else {
            if (v > hi) v = hi - (v - hi);
            if (v < lo) v = lo + (lo - v);
        }
        S(i, dim) = v;
    }
    return S;
}

Matrix augment_inputs(const Matrix& X, const Vector& lf_values,
                      const std::optional<Matrix>& lf_delay_values,
                      const AugmentScheme& scheme) {
    check_shape(X.cols() == scheme.input_dim, "augment_inputs: input width mismatch");
    check_shape(lf_values.size() == X.rows(), "augment_inputs: lf value count mismatch");
    check_shape(scheme.uses_delay() == lf_delay_values.has_value(),
                "augment_inputs: delay values required exactly for delay schemes");
    const auto d = X.cols();
    Matrix A(X.rows(), scheme.augmented_width());
    A.leftCols(d) = X;
    A.col(d) = lf_values;
    if (scheme.uses_delay()) {
        check_shape(lf_delay_values->rows() == X.rows() && lf_delay_values->cols() == d,
                    "augment_inputs: delay matrix must be n x d");
        A.rightCols(d) = *lf_delay_values;
    }
    return A;
}

NonlinearStack::NonlinearStack(GpModel base, std::vector<StackLayer> layers, Matrix domain,
                               double variance_cutoff)
    : base_(std::move(base)),
      layers_(std::move(layers)),
      domain_(std::move(domain)),
      variance_cutoff_(variance_cutoff) {
    const int d = base_.input_dim();
    check_shape(domain_.rows() == d && domain_.cols() == 2, "stack: domain box must be d x 2");
    for (const auto& l : layers_) {
        check_shape(l.scheme.input_dim == d, "stack: layer scheme dimension mismatch");
        check_shape(l.gp.input_dim() == l.scheme.augmented_width(),
                    "stack: layer gp width must equal the scheme's augmented width");
    }
}

namespace {

// Point sets each layer must be evaluated at, top query set first expanded
// downward through delay shifts: pts[l-1] holds layer l's evaluation points.
std::vector<Matrix> layer_point_sets(const Matrix& Xq, int level,
                                     const std::vector<StackLayer>& layers,
                                     const Matrix& domain) {
    std::vector<Matrix> pts(static_cast<std::size_t>(level));
    pts[static_cast<std::size_t>(level - 1)] = Xq;
    for (int l = level; l >= 2; --l) {
        const StackLayer& layer = layers[static_cast<std::size_t>(l - 2)];
        const Matrix& here = pts[static_cast<std::size_t>(l - 1)];
        if (layer.scheme.uses_delay()) {
            const auto d = here.cols();
            Matrix expanded(here.rows() * (d + 1), d);
            expanded.topRows(here.rows()) = here;
            for (Eigen::Index k = 0; k < d; ++k)
                expanded.middleRows(here.rows() * (k + 1), here.rows()) = shift_inputs(
                    here, static_cast<int>(k), layer.scheme.tau, domain, layer.scheme.boundary);
            pts[static_cast<std::size_t>(l - 2)] = std::move(expanded);
        } else {
            pts[static_cast<std::size_t>(l - 2)] = here;
        }
    }
    return pts;
}

} // namespace

NonlinearStack::MeanPrediction NonlinearStack::predict_mean(const Matrix& Xq, int level) const {
    check_shape(level >= 1 && level <= level_count(), "stack predict: level out of range");
    check_shape(Xq.cols() == base_.input_dim(), "stack predict: query width mismatch");
    if (level == 1) return {base_.predict(Xq), true};

    std::vector<Matrix> pts = layer_point_sets(Xq, level, layers_, domain_);
    GaussianPrediction prev = base_.predict(pts[0]);
    bool within = true;
    double worst = 0.0;
    for (int l = 2; l <= level; ++l) {
        const StackLayer& layer = layers_[static_cast<std::size_t>(l - 2)];
        const Matrix& here = pts[static_cast<std::size_t>(l - 1)];
        const auto n = here.rows();
        const auto d = here.cols();

        // `prev` is layer l-1, an intermediate layer of this chain; the
        // shortcut is only justified while its posterior std (in its own
        // normalized units) stays under the cutoff
        const double prev_scale = l == 2
                                      ? base_.normalization().scale
                                      : layers_[static_cast<std::size_t>(l - 3)]
                                            .gp.normalization()
                                            .scale;
        double prev_std = std::sqrt(prev.variance.maxCoeff()) / prev_scale;
        worst = std::max(worst, prev_std);
        if (prev_std > variance_cutoff_) within = false;

        Vector f_col = prev.mean.head(n);
        std::optional<Matrix> delays;
        if (layer.scheme.uses_delay()) {
            Matrix D(n, d);
            for (Eigen::Index k = 0; k < d; ++k) D.col(k) = prev.mean.segment(n * (k + 1), n);
            delays = std::move(D);
        }
        Matrix A = augment_inputs(here, f_col, delays, layer.scheme);
        prev = layer.gp.predict(A);
    }
    if (!within)
        log::warn("mean-propagation shortcut used with intermediate posterior std %.4f above "
                  "cutoff %.4f; result is approximate",
                  worst, variance_cutoff_);
    return {std::move(prev), within};
}

GaussianPrediction NonlinearStack::predict_mc(const Matrix& Xq, int level, int samples,
                                              Rng& rng) const {
    check_shape(level >= 1 && level <= level_count(), "stack predict: level out of range");
    check_shape(Xq.cols() == base_.input_dim(), "stack predict: query width mismatch");
    check_shape(samples >= 2, "stack predict_mc: need at least two samples");
    if (level == 1) return base_.predict(Xq);

    const auto m = Xq.rows();
    const auto d = Xq.cols();
    GaussianPrediction out;
    out.mean.resize(m);
    out.variance.resize(m);

    for (Eigen::Index qi = 0; qi < m; ++qi) {
        Matrix xq = Xq.row(qi);
        std::vector<Matrix> pts = layer_point_sets(xq, level, layers_, domain_);

        // joint draw at the base so f(x) and f(x+tau) stay coherent
        GaussianPrediction base_pred = base_.predict(pts[0], /*want_cov=*/true);
        CholResult base_chol = robust_cholesky(*base_pred.covariance, base_.rel_jitter());
        const auto b1 = pts[0].rows();
        Matrix values(b1, samples); // layer outputs at pts[layer-1], per sample
        for (int s = 0; s < samples; ++s)
            values.col(s) = base_pred.mean + base_chol.L * rng.normal_vector(b1);

        double mean_acc = 0.0, m2_acc = 0.0, var_acc = 0.0; // Welford over sample means
        for (int l = 2; l <= level; ++l) {
            const StackLayer& layer = layers_[static_cast<std::size_t>(l - 2)];
            const Matrix& here = pts[static_cast<std::size_t>(l - 1)];
            const auto b = here.rows();
            Matrix next_values(b, samples);
            for (int s = 0; s < samples; ++s) {
                Vector f_col = values.col(s).head(b);
                std::optional<Matrix> delays;
                if (layer.scheme.uses_delay()) {
                    Matrix D(b, d);
                    for (Eigen::Index k = 0; k < d; ++k)
                        D.col(k) = values.col(s).segment(b * (k + 1), b);
                    delays = std::move(D);
                }
                Matrix A = augment_inputs(here, f_col, delays, layer.scheme);
                if (l < level) {
                    GaussianPrediction p = layer.gp.predict(A, /*want_cov=*/true);
                    CholResult c = robust_cholesky(*p.covariance, layer.gp.rel_jitter());
                    next_values.col(s) = p.mean + c.L * rng.normal_vector(b);
                } else {
                    GaussianPrediction p = layer.gp.predict(A);
                    double mu = p.mean(0);
                    var_acc += p.variance(0);
                    double delta = mu - mean_acc;
                    mean_acc += delta / (s + 1);
                    m2_acc += delta * (mu - mean_acc);
                }
            }
            values = std::move(next_values);
        }
        out.mean(qi) = mean_acc;
        out.variance(qi) = var_acc / samples + m2_acc / samples;
    }
    return out;
}

namespace {

Vector previous_exact_values(const FidelityDataset& data, std::size_t level_idx) {
    const FidelityLevel& lev = data.levels[level_idx];
    if (lev.prev_exact) return *lev.prev_exact;
    auto map = nesting_map(lev.X, data.levels[level_idx - 1].X);
    Vector prev(lev.X.rows());
    for (Eigen::Index i = 0; i < lev.X.rows(); ++i)
        prev(i) = data.levels[level_idx - 1].y(map[static_cast<std::size_t>(i)]);
    return prev;
}

KernelPtr layer_kernel(StackMethod method, int d) {
    const int width = method == StackMethod::Nargp ? d + 1 : 2 * d + 1;
    std::vector<int> x_dims(d);
    for (int i = 0; i < d; ++i) x_dims[i] = i;
    if (method == StackMethod::Gpdf) return make_rbf_ard(width);
    std::vector<int> f_dims;
    if (method == StackMethod::Nargp) {
        f_dims = {d};
    } else {
        for (int i = d; i <= 2 * d; ++i) f_dims.push_back(i);
    }
    auto k_rho = make_rbf(width, x_dims, RbfParams::unit(d));
    auto k_f = make_rbf(width, f_dims, RbfParams::unit(static_cast<Eigen::Index>(f_dims.size())));
    auto k_delta = make_rbf(width, x_dims, RbfParams::unit(d));
    return make_nargp_composite(std::move(k_rho), std::move(k_f), std::move(k_delta));
}

} // namespace

NonlinearStack fit_stack(const FidelityDataset& data, StackMethod method,
                         const StackFitOptions& opt, Rng& rng) {
    data.validate();
    check_shape(data.level_count() >= 2, "stack fit needs at least two fidelity levels");
    const int d = data.dim();
    check_shape(data.domain.rows() == d, "stack fit needs the domain box for delay shifts");

    const AugmentKind kind = method == StackMethod::Nargp    ? AugmentKind::Nargp
                             : method == StackMethod::Gpdf   ? AugmentKind::Delay
                                                             : AugmentKind::DelayComposite;
    double tau = opt.tau_fraction * data.domain_width(0);
    for (int k = 1; k < d; ++k) tau = std::min(tau, opt.tau_fraction * data.domain_width(k));

    Rng rng_base = rng.split("stack-level1");
    GpModel base = fit_gp(data.levels[0].X, data.levels[0].y, *make_rbf_ard(d), opt.gp, rng_base);

    std::vector<StackLayer> layers;
    for (std::size_t l = 1; l < data.levels.size(); ++l) {
        const FidelityLevel& lev = data.levels[l];
        AugmentScheme scheme{kind, d, tau, opt.boundary};

        Vector f_col = previous_exact_values(data, l);
        std::optional<Matrix> delays;
        if (scheme.uses_delay()) {
            if (lev.prev_delay) {
                delays = *lev.prev_delay;
            } else if (l - 1 < opt.oracles.size() && opt.oracles[l - 1]) {
                Matrix D(lev.X.rows(), d);
                for (int k = 0; k < d; ++k) {
                    Matrix S = shift_inputs(lev.X, k, tau, data.domain, opt.boundary);
                    for (Eigen::Index i = 0; i < S.rows(); ++i) {
                        Vector xi = S.row(i);
                        D(i, k) = opt.oracles[l - 1](xi);
                    }
                }
                delays = std::move(D);
            } else {
                throw DataError("delay method needs prev_delay values or an oracle for level " +
                                std::to_string(l + 1));
            }
        }

        Matrix A = augment_inputs(lev.X, f_col, delays, scheme);
        Rng rng_layer = rng.split("stack-level" + std::to_string(l + 1));
        GpModel gp = fit_gp(A, lev.y, *layer_kernel(method, d), opt.gp, rng_layer);
        layers.push_back(StackLayer{scheme, std::move(gp)});
    }

    return NonlinearStack(std::move(base), std::move(layers), data.domain, opt.variance_cutoff);
}

} // namespace mfgp
