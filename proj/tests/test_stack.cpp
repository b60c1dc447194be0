#include "mfgp/stack.hpp"

#include "test_util.hpp"

#include "doctest.h"

#include <cmath>

using namespace mfgp;

namespace {

Matrix unit_domain(int d = 1) {
    Matrix dom(d, 2);
    for (int k = 0; k < d; ++k) {
        dom(k, 0) = 0.0;
        dom(k, 1) = 1.0;
    }
    return dom;
}

Matrix grid(int n, double lo = 0.0, double hi = 1.0) {
    Matrix X(n, 1);
    for (int i = 0; i < n; ++i) X(i, 0) = lo + (hi - lo) * i / (n - 1.0);
    return X;
}

FidelityDataset nested_data(Rng& rng, int n_lo, int n_hi,
                            const std::function<double(double)>& f_lo,
                            const std::function<double(double)>& f_hi) {
    FidelityDataset data;
    data.domain = unit_domain();
    FidelityLevel lo, hi;
    lo.X.resize(n_lo, 1);
    for (int i = 0; i < n_lo; ++i) lo.X(i, 0) = (i + 0.5 + rng.uniform(-0.3, 0.3)) / n_lo;
    lo.y.resize(n_lo);
    for (int i = 0; i < n_lo; ++i) lo.y(i) = f_lo(lo.X(i, 0));
    std::vector<int> pick;
    for (int i = 0; i < n_lo; ++i) pick.push_back(i);
    for (int i = n_lo - 1; i > 0; --i) std::swap(pick[i], pick[rng.index(i + 1)]);
    hi.X.resize(n_hi, 1);
    hi.y.resize(n_hi);
    for (int i = 0; i < n_hi; ++i) {
        hi.X(i, 0) = lo.X(pick[i], 0);
        hi.y(i) = f_hi(hi.X(i, 0));
    }
    data.levels.push_back(std::move(lo));
    data.levels.push_back(std::move(hi));
    return data;
}

double mse_against(const Vector& mean, const std::function<double(double)>& f, const Matrix& Xq) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < Xq.rows(); ++i) {
        double e = mean(i) - f(Xq(i, 0));
        acc += e * e;
    }
    return acc / static_cast<double>(Xq.rows());
}

} // namespace

TEST_CASE("augmented widths follow the scheme") {
    AugmentScheme nargp{AugmentKind::Nargp, 1};
    CHECK(nargp.augmented_width() == 2);
    AugmentScheme delay2{AugmentKind::Delay, 2, 0.01};
    CHECK(delay2.augmented_width() == 5);

    Matrix X(3, 2);
    X << 0.1, 0.2, 0.5, 0.6, 0.9, 0.1;
    Vector f(3);
    f << 1.0, 2.0, 3.0;
    Matrix D(3, 2);
    D << 1.1, 0.9, 2.1, 1.9, 3.1, 2.9;
    Matrix A = augment_inputs(X, f, D, delay2);
    CHECK(A.cols() == 5);
    CHECK(A(1, 2) == 2.0);
    CHECK(A(1, 3) == 2.1);
    CHECK(A(2, 4) == 2.9);

    CHECK_THROWS_AS(augment_inputs(X, f, std::nullopt, delay2), ShapeError);
    AugmentScheme nargp2{AugmentKind::Nargp, 2};
    CHECK_THROWS_AS(augment_inputs(X, f, D, nargp2), ShapeError);
}

TEST_CASE("vanishing delay reproduces the undelayed column") {
    auto f = [](double x) { return std::sin(5.0 * x); };
    Matrix X = grid(11, 0.05, 0.95);
    const double tau = 1e-8;
    Matrix shifted = shift_inputs(X, 0, tau, unit_domain(), BoundaryRule::Clamp);
    for (int i = 0; i < 11; ++i)
        CHECK(std::abs(f(shifted(i, 0)) - f(X(i, 0))) < 5.0 * tau);
}

TEST_CASE("boundary rules keep shifted points inside the box") {
    Matrix X(2, 1);
    X << 0.995, 0.5;
    Matrix clamped = shift_inputs(X, 0, 0.01, unit_domain(), BoundaryRule::Clamp);
    CHECK(clamped(0, 0) == 1.0);
    CHECK(clamped(1, 0) == doctest::Approx(0.51));
    Matrix reflected = shift_inputs(X, 0, 0.01, unit_domain(), BoundaryRule::Reflect);
    CHECK(reflected(0, 0) == doctest::Approx(0.995));
    CHECK(reflected(1, 0) == doctest::Approx(0.51));
}

TEST_CASE("two identical fidelities: the stack learns the pass-through") {
    Rng rng(301);
    auto f = [](double x) { return std::sin(25.132741228718345 * x); };
    FidelityDataset data = nested_data(rng, 50, 8, f, f);

    StackFitOptions opt;
    opt.gp.learn_noise = false;
    opt.gp.restarts = 5;
    Rng fit_rng(3);
    NonlinearStack stack = fit_stack(data, StackMethod::Nargp, opt, fit_rng);

    Matrix Xq = grid(200);
    auto pred = stack.predict_mean(Xq);
    CHECK(pred.within_cutoff);
    CHECK(mse_against(pred.pred.mean, f, Xq) < 1e-6);

    // identity relation: the top of the stack tracks the base prediction
    auto base_pred = stack.base().predict(Xq);
    CHECK((pred.pred.mean - base_pred.mean).cwiseAbs().maxCoeff() < 5e-3);
}

TEST_CASE("interpolation at high-fidelity training points") {
    Rng rng(307);
    auto f_lo = [](double x) { return std::sin(25.132741228718345 * x); };
    auto f_hi = [](double x) {
        return std::sin(25.132741228718345 * x) * std::sin(25.132741228718345 * x) + 0.5 * x;
    };
    FidelityDataset data = nested_data(rng, 40, 10, f_lo, f_hi);

    StackFitOptions opt;
    opt.gp.learn_noise = false;
    opt.gp.restarts = 5;
    Rng fit_rng(5);
    NonlinearStack stack = fit_stack(data, StackMethod::Nargp, opt, fit_rng);
    auto pred = stack.predict_mean(data.levels[1].X);
    for (Eigen::Index i = 0; i < pred.pred.size(); ++i)
        CHECK(std::abs(pred.pred.mean(i) - data.levels[1].y(i)) < 1e-3);
}

TEST_CASE("level-one monte carlo collapses to the exact GP") {
    Rng rng(311);
    FidelityDataset data = nested_data(rng, 12, 4, [](double x) { return std::sin(9 * x); },
                                       [](double x) { return std::cos(9 * x); });
    StackFitOptions opt;
    opt.gp.learn_noise = false;
    opt.gp.restarts = 3;
    Rng fit_rng(7);
    NonlinearStack stack = fit_stack(data, StackMethod::Nargp, opt, fit_rng);

    Matrix Xq = grid(15);
    Rng mc_rng(1);
    auto mc = stack.predict_mc(Xq, 1, 10, mc_rng);
    auto exact = stack.base().predict(Xq);
    CHECK((mc.mean - exact.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mc.variance - exact.variance).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("monte carlo propagates variance through a linear layer") {
    // base layer with real posterior uncertainty at a gap point
    Rng rng(313);
    Matrix Xlo = grid(10);
    RbfParams pb;
    pb.log_lengthscales = Vector::Constant(1, std::log(0.12));
    Vector ylo = (3.0 * Xlo.col(0)).array().sin();
    GpModel base = GpModel::make(make_rbf(1, {0}, pb), Xlo, ylo, 0.0, false);

    // second layer: depends only on its f column, essentially noise-free
    // linear map y = 2 f learned over the whole f range
    const double slope = 2.0;
    Matrix A(30, 2);
    Vector y2(30);
    Rng data_rng(17);
    for (int i = 0; i < 30; ++i) {
        A(i, 0) = data_rng.uniform();
        A(i, 1) = -1.2 + 2.4 * i / 29.0;
        y2(i) = slope * A(i, 1);
    }
    RbfParams pf;
    pf.log_signal_variance = std::log(25.0);
    pf.log_lengthscales = Vector::Constant(1, std::log(4.0));
    GpModel layer_gp = GpModel::make(make_rbf(2, {1}, pf), A, y2, 0.0, false);

    std::vector<StackLayer> layers;
    layers.push_back(StackLayer{AugmentScheme{AugmentKind::Nargp, 1}, std::move(layer_gp)});
    NonlinearStack stack(std::move(base), std::move(layers), unit_domain(), 0.02);

    Matrix Xq(1, 1);
    Xq(0, 0) = 0.55; // between grid points
    double v1 = stack.base().predict(Xq).variance(0);
    REQUIRE(v1 > 1e-8);

    Rng mc_rng(23);
    auto mc = stack.predict_mc(Xq, 2, 2000, mc_rng);
    CHECK(mc.variance(0) == doctest::Approx(slope * slope * v1).epsilon(0.10));
}

TEST_CASE("mean propagation agrees with monte carlo under dense low-fidelity data") {
    Rng rng(317);
    auto f_lo = [](double x) { return std::sin(25.132741228718345 * x); };
    auto f_hi = [](double x) {
        double s = std::sin(25.132741228718345 * x);
        return s * s;
    };
    FidelityDataset data = nested_data(rng, 50, 9, f_lo, f_hi);
    StackFitOptions opt;
    opt.gp.learn_noise = false;
    opt.gp.restarts = 5;
    Rng fit_rng(11);
    NonlinearStack stack = fit_stack(data, StackMethod::Nargp, opt, fit_rng);

    Matrix Xq = grid(25, 0.02, 0.98);
    auto mean_path = stack.predict_mean(Xq);
    CHECK(mean_path.within_cutoff);
    const int S = 4000;
    Rng mc_rng(29);
    auto mc = stack.predict_mc(Xq, 2, S, mc_rng);
    for (Eigen::Index i = 0; i < Xq.rows(); ++i) {
        double stderr_i = std::sqrt(std::max(mc.variance(i), 1e-12) / S);
        CHECK(std::abs(mean_path.pred.mean(i) - mc.mean(i)) < 3.0 * stderr_i + 1e-6);
    }
}

TEST_CASE("composite kernel with constant f branch matches the plain sum") {
    Rng rng(331);
    auto f_lo = [](double x) { return std::sin(12.0 * x); };
    auto f_hi = [](double x) { return std::sin(12.0 * x + 0.3) + 0.2; };
    auto oracle = [&](const Vector& x) { return f_lo(x(0)); };

    FidelityDataset data = nested_data(rng, 20, 7, f_lo, f_hi);
    const double tau = 0.01;

    // shared augmented training data for both routes
    Vector f_col(7);
    for (int i = 0; i < 7; ++i) f_col(i) = f_lo(data.levels[1].X(i, 0));
    Matrix shifted = shift_inputs(data.levels[1].X, 0, tau, unit_domain(), BoundaryRule::Clamp);
    Matrix delays(7, 1);
    for (int i = 0; i < 7; ++i) delays(i, 0) = f_lo(shifted(i, 0));
    AugmentScheme scheme{AugmentKind::DelayComposite, 1, tau};
    Matrix A = augment_inputs(data.levels[1].X, f_col, delays, scheme);

    RbfParams p_rho, p_delta, p_flat;
    p_rho.log_signal_variance = std::log(0.8);
    p_rho.log_lengthscales = Vector::Constant(1, std::log(0.3));
    p_delta.log_signal_variance = std::log(0.4);
    p_delta.log_lengthscales = Vector::Constant(1, std::log(0.2));
    p_flat.log_lengthscales = Vector::Constant(2, std::log(1e9)); // constant-one branch

    auto composite = make_nargp_composite(make_rbf(3, {0}, p_rho), make_rbf(3, {1, 2}, p_flat),
                                          make_rbf(3, {0}, p_delta));
    auto plain_sum = make_sum(make_rbf(3, {0}, p_rho), make_rbf(3, {0}, p_delta));

    GpModel base = GpModel::make(make_rbf_ard(1), data.levels[0].X, data.levels[0].y, 0.0, true);
    auto build = [&](KernelPtr k) {
        std::vector<StackLayer> layers;
        layers.push_back(StackLayer{scheme, GpModel::make(std::move(k), A, data.levels[1].y,
                                                          0.0, true)});
        return NonlinearStack(base.clone(), std::move(layers), unit_domain(), 0.02);
    };
    NonlinearStack s_composite = build(composite->clone());
    NonlinearStack s_plain = build(plain_sum->clone());

    Matrix Xq = grid(40, 0.01, 0.99);
    auto pc = s_composite.predict_mean(Xq);
    auto pp = s_plain.predict_mean(Xq);
    CHECK((pc.pred.mean - pp.pred.mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((pc.pred.variance - pp.pred.variance).cwiseAbs().maxCoeff() < 1e-6);
    static_cast<void>(oracle);
}

TEST_CASE("monte carlo standard error scales as one over root S") {
    Rng rng(337);
    Matrix Xlo = grid(8);
    RbfParams pb;
    pb.log_lengthscales = Vector::Constant(1, std::log(0.15));
    Vector ylo = (7.0 * Xlo.col(0)).array().sin();
    GpModel base = GpModel::make(make_rbf(1, {0}, pb), Xlo, ylo, 0.0, false);

    Matrix A(25, 2);
    Vector y2(25);
    for (int i = 0; i < 25; ++i) {
        A(i, 0) = i / 24.0;
        A(i, 1) = std::sin(7.0 * A(i, 0));
        y2(i) = A(i, 1) * A(i, 1) + 0.3 * A(i, 0);
    }
    GpModel layer_gp = GpModel::make(make_rbf_ard(2), A, y2, 0.0, true);
    std::vector<StackLayer> layers;
    layers.push_back(StackLayer{AugmentScheme{AugmentKind::Nargp, 1}, std::move(layer_gp)});
    NonlinearStack stack(std::move(base), std::move(layers), unit_domain(), 0.02);

    Matrix Xq(1, 1);
    Xq(0, 0) = 0.44;
    const std::vector<int> sizes{50, 200, 800, 3200};
    const int reps = 24;
    std::vector<double> log_s, log_spread;
    Rng seed_rng(7);
    for (int S : sizes) {
        std::vector<double> means;
        for (int r = 0; r < reps; ++r) {
            Rng mc_rng(seed_rng.next_u64());
            means.push_back(stack.predict_mc(Xq, 2, S, mc_rng).mean(0));
        }
        double mu = 0.0;
        for (double m : means) mu += m;
        mu /= reps;
        double var = 0.0;
        for (double m : means) var += (m - mu) * (m - mu);
        var /= (reps - 1);
        log_s.push_back(std::log(static_cast<double>(S)));
        log_spread.push_back(0.5 * std::log(var));
    }
    // least-squares slope of log spread vs log S
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(log_s.size());
    for (int i = 0; i < n; ++i) {
        sx += log_s[i];
        sy += log_spread[i];
        sxx += log_s[i] * log_s[i];
        sxy += log_s[i] * log_spread[i];
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.2)); // +-0.1 absolute
}

TEST_CASE("query width is validated") {
    Rng rng(347);
    FidelityDataset data = nested_data(rng, 10, 4, [](double x) { return x; },
                                       [](double x) { return 2 * x; });
    StackFitOptions opt;
    opt.gp.learn_noise = false;
    opt.gp.restarts = 2;
    Rng fit_rng(13);
    NonlinearStack stack = fit_stack(data, StackMethod::Nargp, opt, fit_rng);
    Matrix bad(3, 2);
    bad.setZero();
    CHECK_THROWS_AS(stack.predict_mean(bad), ShapeError);
    Rng mc_rng(1);
    CHECK_THROWS_AS(stack.predict_mc(bad, 2, 10, mc_rng), ShapeError);
}

TEST_CASE("delay methods demand delay data or an oracle") {
    Rng rng(349);
    FidelityDataset data = nested_data(rng, 10, 4, [](double x) { return x; },
                                       [](double x) { return 2 * x; });
    StackFitOptions opt;
    opt.gp.restarts = 1;
    Rng fit_rng(17);
    CHECK_THROWS_AS(fit_stack(data, StackMethod::Gpdf, opt, fit_rng), DataError);

    opt.oracles = {[](const Vector& x) { return x(0); }};
    Rng fit_rng2(17);
    CHECK_NOTHROW(fit_stack(data, StackMethod::Gpdf, opt, fit_rng2));
}

TEST_CASE("fixed seed makes monte carlo prediction deterministic") {
    Rng rng(353);
    FidelityDataset data = nested_data(rng, 15, 5, [](double x) { return std::sin(9 * x); },
                                       [](double x) { return std::sin(9 * x) + x; });
    StackFitOptions opt;
    opt.gp.learn_noise = false;
    opt.gp.restarts = 3;
    Rng fit_rng(19);
    NonlinearStack stack = fit_stack(data, StackMethod::Nargp, opt, fit_rng);
    Matrix Xq = grid(7);
    Rng a(99), b(99);
    auto pa = stack.predict_mc(Xq, 2, 64, a);
    auto pb = stack.predict_mc(Xq, 2, 64, b);
    CHECK((pa.mean - pb.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pa.variance - pb.variance).cwiseAbs().maxCoeff() == 0.0);
}
