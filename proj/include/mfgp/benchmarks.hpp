#pragma once

#include "mfgp/dataset.hpp"
#include "mfgp/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mfgp {

/// Closed-form benchmark family over [0,1]. The low-fidelity function is the
/// same oscillator throughout; the high-fidelity functions exercise linear
/// scaling, squaring, and phase-shifted transformations of it.
struct BenchmarkProblem {
    std::string name;
    int fidelity_count = 2;
    Matrix domain; // 1 x 2

    /// level is 1-based, low to high fidelity. x must lie in [0,1].
    double eval(int level, double x) const;

    std::function<double(const Vector&)> oracle(int level) const {
        return [this, level](const Vector& x) { return eval(level, x(0)); };
    }

    /// Uniform-random low-fidelity design with a nested random subset at each
    /// higher level; evaluations filled from the closed forms.
    FidelityDataset sample_dataset(const std::vector<int>& points_per_level, Rng& rng) const;

    Matrix test_grid(int size) const;
    Vector truth_on(const Matrix& Xq, int level) const;
};

BenchmarkProblem benchmark_problem(const std::string& name);
const std::vector<std::string>& benchmark_problem_names();

double mean_squared_error(const Vector& prediction, const Vector& truth);

} // namespace mfgp
