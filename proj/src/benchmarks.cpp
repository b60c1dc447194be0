#include "mfgp/benchmarks.hpp"

#include <cmath>

namespace mfgp {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

double low_fidelity(double x) { return std::sin(8.0 * kPi * x); }

} // namespace

double BenchmarkProblem::eval(int level, double x) const {
    if (!(x >= 0.0 && x <= 1.0))
        throw DataError("benchmark point " + std::to_string(x) + " outside [0,1]");
    check_shape(level >= 1 && level <= fidelity_count, "benchmark level out of range");

    if (name == "three_fidelity") {
        double s = low_fidelity(x);
        if (level == 1) return s;
        if (level == 2) return s * s;
        return s * s + x * x;
    }
    if (level == 1) return low_fidelity(x);
    if (name == "linear") return 0.8 * std::sin(8.0 * kPi * x) + 0.3 * std::sin(2.0 * kPi * x);
    if (name == "nonlinear") {
        double s = std::sin(8.0 * kPi * x);
        return s * s;
    }
    // phase_shift
    double s = std::sin(8.0 * kPi * x + kPi / 10.0);
    return s * s + std::cos(4.0 * kPi * x);
}

FidelityDataset BenchmarkProblem::sample_dataset(const std::vector<int>& points_per_level,
                                                 Rng& rng) const {
    check_shape(static_cast<int>(points_per_level.size()) == fidelity_count,
                "benchmark dataset: one point count per fidelity level");
    FidelityDataset data;
    data.domain = domain;

    FidelityLevel base;
    const int n0 = points_per_level[0];
    base.X.resize(n0, 1);
    base.y.resize(n0);
    for (int i = 0; i < n0; ++i) {
        base.X(i, 0) = rng.uniform();
        base.y(i) = eval(1, base.X(i, 0));
    }
    data.levels.push_back(std::move(base));

    for (int l = 1; l < fidelity_count; ++l) {
        const FidelityLevel& prev = data.levels.back();
        const int n = points_per_level[static_cast<std::size_t>(l)];
        check_shape(n <= prev.X.rows(), "benchmark dataset: levels must shrink (nested subsets)");
        std::vector<int> pick(static_cast<std::size_t>(prev.X.rows()));
        for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = static_cast<int>(i);
        for (std::size_t i = pick.size() - 1; i > 0; --i)
            std::swap(pick[i], pick[rng.index(i + 1)]);
        FidelityLevel lev;
        lev.X.resize(n, 1);
        lev.y.resize(n);
        for (int i = 0; i < n; ++i) {
            lev.X(i, 0) = prev.X(pick[static_cast<std::size_t>(i)], 0);
            lev.y(i) = eval(l + 1, lev.X(i, 0));
        }
        data.levels.push_back(std::move(lev));
    }
    return data;
}

Matrix BenchmarkProblem::test_grid(int size) const {
    Matrix X(size, 1);
    for (int i = 0; i < size; ++i) X(i, 0) = static_cast<double>(i) / (size - 1.0);
    return X;
}

Vector BenchmarkProblem::truth_on(const Matrix& Xq, int level) const {
    Vector t(Xq.rows());
    for (Eigen::Index i = 0; i < Xq.rows(); ++i) t(i) = eval(level, Xq(i, 0));
    return t;
}

BenchmarkProblem benchmark_problem(const std::string& name) {
    for (const auto& known : benchmark_problem_names()) {
        if (name == known) {
            BenchmarkProblem p;
            p.name = name;
            p.fidelity_count = name == "three_fidelity" ? 3 : 2;
            p.domain.resize(1, 2);
            p.domain << 0.0, 1.0;
            return p;
        }
    }
    throw DataError("unknown benchmark problem: " + name);
}

const std::vector<std::string>& benchmark_problem_names() {
    static const std::vector<std::string> names{"linear", "nonlinear", "phase_shift",
                                                "three_fidelity"};
    return names;
}

double mean_squared_error(const Vector& prediction, const Vector& truth) {
    check_shape(prediction.size() == truth.size(), "mse: length mismatch");
    return (prediction - truth).squaredNorm() / static_cast<double>(truth.size());
}

} // namespace mfgp
