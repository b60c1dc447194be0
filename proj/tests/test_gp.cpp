#include "mfgp/gp.hpp"

#include "test_util.hpp"

#include "doctest.h"

#include <cmath>

using namespace mfgp;

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;

KernelPtr unit_rbf(int d = 1) {
    std::vector<int> dims(d);
    for (int i = 0; i < d; ++i) dims[i] = i;
    return make_rbf(d, dims, RbfParams::unit(d));
}

Matrix column(std::initializer_list<double> vals) {
    Matrix X(static_cast<Eigen::Index>(vals.size()), 1);
    Eigen::Index i = 0;
    for (double v : vals) X(i++, 0) = v;
    return X;
}

Vector vec(std::initializer_list<double> vals) {
    Vector y(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double v : vals) y(i++) = v;
    return y;
}

// Independent dense evaluation of the marginal likelihood for n = 2 using the
// explicit 2x2 inverse and determinant.
double lml_2x2_oracle(const Kernel& k, double noise, const Matrix& X, const Vector& y) {
    Vector x0 = X.row(0), x1 = X.row(1);
    double a = k.eval(x0, x0) + noise;
    double b = k.eval(x0, x1);
    double d = k.eval(x1, x1) + noise;
    double det = a * d - b * b;
    double quad = (d * y(0) * y(0) - 2.0 * b * y(0) * y(1) + a * y(1) * y(1)) / det;
    return -0.5 * quad - 0.5 * std::log(det) - 2.0 * kHalfLog2Pi;
}

} // namespace

TEST_CASE("marginal likelihood closed forms for one observation") {
    auto k = unit_rbf();
    Matrix X = column({0.0});

    LmlResult zero = log_marginal_likelihood(*k, 0.0, X, vec({0.0}));
    CHECK(zero.value == doctest::Approx(-kHalfLog2Pi).epsilon(1e-5));

    LmlResult one = log_marginal_likelihood(*k, 0.0, X, vec({1.0}));
    CHECK(one.value == doctest::Approx(-0.5 - kHalfLog2Pi).epsilon(1e-5));
}

TEST_CASE("marginal likelihood matches a dense two-point oracle") {
    Rng rng(41);
    for (int t = 0; t < 10; ++t) {
        auto spec = test::random_spec(rng, 2);
        Matrix X = test::random_matrix(rng, 2, 2);
        Vector y = vec({rng.uniform(-2, 2), rng.uniform(-2, 2)});
        double noise = rng.uniform(0.01, 0.5);
        LmlResult r = log_marginal_likelihood(*spec, noise, X, y, 1e-12);
        CHECK(r.value == doctest::Approx(lml_2x2_oracle(*spec, noise, X, y)).epsilon(1e-8));
    }
}

TEST_CASE("marginal likelihood gradient matches finite differences") {
    Rng rng(43);
    for (int t = 0; t < 6; ++t) {
        auto spec = test::random_spec(rng, 2);
        Matrix X = test::random_matrix(rng, 6, 2);
        Vector y(6);
        for (int i = 0; i < 6; ++i) y(i) = rng.uniform(-1, 1);
        double log_noise = rng.uniform(-4.0, -1.0);

        LmlResult r = log_marginal_likelihood(*spec, std::exp(log_noise), X, y, 1e-12);

        Vector p0(spec->param_count() + 1);
        p0.head(spec->param_count()) = spec->params();
        p0(spec->param_count()) = log_noise;
        Vector fd = test::fd_gradient(
            [&](const Vector& p) {
                auto k = spec->clone();
                k->set_params(p.head(spec->param_count()));
                return log_marginal_likelihood(*k, std::exp(p(spec->param_count())), X, y, 1e-12)
                    .value;
            },
            p0, 1e-6);

        for (int j = 0; j < spec->param_count(); ++j)
            CHECK(test::rel_err(r.kernel_grad(j), fd(j)) < 1e-4);
        CHECK(test::rel_err(r.noise_grad, fd(spec->param_count())) < 1e-4);
    }
}

TEST_CASE("predict closed form on a single training point") {
    auto m = GpModel::make(unit_rbf(), column({0.0}), vec({2.0}), 0.0, /*normalize=*/false, 1e-12);
    Matrix Xq = column({1.0});
    auto pred = m.predict(Xq);
    CHECK(pred.mean(0) == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-8));
    CHECK(pred.variance(0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-8));
}

TEST_CASE("noise-free prediction interpolates the training data") {
    Rng rng(47);
    Matrix X = test::random_matrix(rng, 12, 1);
    Vector y = (15.0 * X.col(0)).array().sin() + (40.0 * X.col(0)).array().cos() * 0.3;
    GpFitOptions opt;
    opt.learn_noise = false;
    opt.restarts = 5;
    GpModel m = fit_gp(X, y, *unit_rbf(), opt, rng);
    auto pred = m.predict(X);
    double sigma_total = m.kernel().eval(Vector(X.row(0)), Vector(X.row(0)));
    for (int i = 0; i < 12; ++i) {
        CHECK(std::abs(pred.mean(i) - y(i)) < 1e-4);
        CHECK(pred.variance(i) <
              1e-4 * sigma_total * m.normalization().scale * m.normalization().scale);
    }
}

TEST_CASE("far from the data the prediction reverts to the prior") {
    auto m = GpModel::make(unit_rbf(), column({0.0, 0.1, 0.2}), vec({1.0, 1.1, 0.9}), 0.0,
                           /*normalize=*/false);
    auto pred = m.predict(column({50.0}));
    CHECK(std::abs(pred.mean(0)) < 1e-9);
    CHECK(pred.variance(0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("posterior variance never exceeds the prior variance") {
    Rng rng(53);
    for (int t = 0; t < 5; ++t) {
        auto spec = test::random_spec(rng, 1);
        Matrix X = test::random_matrix(rng, 8, 1);
        Vector y(8);
        for (int i = 0; i < 8; ++i) y(i) = rng.uniform(-1, 1);
        auto m = GpModel::make(spec->clone(), X, y, 0.0, false);
        Matrix Xq = test::random_matrix(rng, 40, 1, -0.5, 1.5);
        auto pred = m.predict(Xq);
        for (int i = 0; i < 40; ++i) {
            Vector xi = Xq.row(i);
            CHECK(pred.variance(i) <= spec->eval(xi, xi) + 1e-8);
        }
    }
}

TEST_CASE("conditioning on one more point never increases posterior variance") {
    Rng rng(59);
    auto spec = unit_rbf();
    Matrix X = test::random_matrix(rng, 6, 1);
    Vector y(6);
    for (int i = 0; i < 6; ++i) y(i) = rng.uniform(-1, 1);
    Matrix X2(7, 1);
    X2.topRows(6) = X;
    X2(6, 0) = 0.55;
    Vector y2(7);
    y2.head(6) = y;
    y2(6) = 0.3;

    auto before = GpModel::make(spec->clone(), X, y, 0.0, false, 1e-10);
    auto after = GpModel::make(spec->clone(), X2, y2, 0.0, false, 1e-10);
    Matrix Xq = test::random_matrix(rng, 60, 1, -0.2, 1.2);
    auto pb = before.predict(Xq);
    auto pa = after.predict(Xq);
    for (int i = 0; i < 60; ++i) CHECK(pa.variance(i) <= pb.variance(i) + 1e-8);
}

TEST_CASE("fitting a constant-zero target degenerates gracefully") {
    Rng rng(61);
    Matrix X = test::random_matrix(rng, 10, 1);
    Vector y = Vector::Zero(10);
    GpFitOptions opt;
    opt.learn_noise = false;
    opt.restarts = 3;
    GpModel m = fit_gp(X, y, *unit_rbf(), opt, rng);
    Vector params = m.kernel().params();
    CHECK(params(0) <= std::log(1e-2) + 1e-6); // signal variance at/below the box floor
    auto pred = m.predict(column({0.5}));
    CHECK(std::abs(pred.mean(0)) < 1e-8);
}

TEST_CASE("lengthscale recovery from a known draw") {
    int hits = 0;
    for (int seed = 0; seed < 10; ++seed) {
        Rng rng(100 + seed);
        Matrix X = test::random_matrix(rng, 50, 1);
        RbfParams truth;
        truth.log_lengthscales = Vector::Constant(1, std::log(0.2));
        auto ktrue = make_rbf(1, {0}, truth);
        Matrix K = ktrue->gram(X);
        CholResult chol = robust_cholesky(K, 1e-10);
        Vector y = chol.L * rng.normal_vector(50);

        GpFitOptions opt;
        opt.learn_noise = false;
        opt.restarts = 4;
        GpModel m = fit_gp(X, y, *unit_rbf(), opt, rng);
        double ell = std::exp(m.kernel().params()(1));
        if (ell > 0.1 && ell < 0.4) ++hits;
    }
    CHECK(hits >= 8);
}

TEST_CASE("more restarts can only improve the achieved likelihood") {
    Rng rng(67);
    Matrix X = test::random_matrix(rng, 12, 1);
    Vector y = (25.13274122871834 * X.col(0)).array().sin(); // oscillatory, multimodal fit
    GpFitOptions opt;
    opt.learn_noise = false;
    opt.restarts = 1;
    Rng r1(5), r10(5);
    GpModel m1 = fit_gp(X, y, *unit_rbf(), opt, r1);
    opt.restarts = 10;
    GpModel m10 = fit_gp(X, y, *unit_rbf(), opt, r10);
    CHECK(m10.lml() >= m1.lml() - 1e-9);
}

TEST_CASE("denormalization round trip is affine-exact") {
    Rng data_rng(71);
    Matrix X = test::random_matrix(data_rng, 15, 1);
    Vector y(15);
    for (int i = 0; i < 15; ++i) y(i) = std::sin(15.0 * X(i, 0)) + 0.2 * X(i, 0);
    Matrix Xq = test::random_matrix(data_rng, 20, 1);

    GpFitOptions opt;
    opt.learn_noise = false;
    opt.restarts = 10;
    opt.lbfgs.f_tolerance = 0.0;
    Rng rng_base(9);
    GpModel base = fit_gp(X, y, *unit_rbf(), opt, rng_base);
    auto pb = base.predict(Xq);

    for (double a : {2.0, 10.0}) {
        for (double b : {-3.0, 5.0}) {
            Vector ty = (a * y.array() + b).matrix();
            Rng rng_t(9);
            GpModel t = fit_gp(X, ty, *unit_rbf(), opt, rng_t);
            auto pt = t.predict(Xq);
            for (int i = 0; i < 20; ++i)
                CHECK(pt.mean(i) == doctest::Approx(a * pb.mean(i) + b).epsilon(1e-6));
        }
    }
}

TEST_CASE("posterior sampling statistics and determinism") {
    // data drawn from the prior itself, so the model is well specified and
    // the training-point covariance is jitter-level
    Rng rng(73);
    Matrix X = test::random_matrix(rng, 8, 1);
    RbfParams p;
    p.log_lengthscales = Vector::Constant(1, std::log(0.3));
    auto kdata = make_rbf(1, {0}, p);
    Vector y = robust_cholesky(kdata->gram(X), 1e-10).L * rng.normal_vector(8);
    auto m = GpModel::make(kdata->clone(), X, y, 0.0, false, 1e-10);

    SUBCASE("samples collapse to the mean at noise-free training points") {
        Rng srng(1);
        Matrix s = m.sample_posterior(X, 50, srng);
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 8; ++j) CHECK(std::abs(s(i, j) - y(j)) < 1e-3);
    }

    SUBCASE("single-point sample variance matches the predicted variance") {
        Matrix Xq = column({0.5});
        auto pred = m.predict(Xq);
        Rng srng(2);
        Matrix s = m.sample_posterior(Xq, 100000, srng);
        double mean = s.col(0).mean();
        double var = (s.col(0).array() - mean).square().mean();
        CHECK(var == doctest::Approx(pred.variance(0)).epsilon(0.05));
    }

    SUBCASE("fixed seed reproduces the sample matrix bit for bit") {
        Matrix Xq = test::random_matrix(rng, 5, 1);
        Rng a(42), b(42);
        Matrix sa = m.sample_posterior(Xq, 30, a);
        Matrix sb = m.sample_posterior(Xq, 30, b);
        CHECK((sa - sb).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("empirical mean approaches the predictive mean") {
        Matrix Xq = column({0.3, 0.9});
        auto pred = m.predict(Xq);
        Rng srng(3);
        const int S = 10000;
        Matrix s = m.sample_posterior(Xq, S, srng);
        for (int j = 0; j < 2; ++j) {
            double stderr_j = std::sqrt(pred.variance(j) / S);
            CHECK(std::abs(s.col(j).mean() - pred.mean(j)) < 3.0 * stderr_j + 1e-12);
        }
    }
}
