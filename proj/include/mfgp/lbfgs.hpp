#pragma once

#include "mfgp/types.hpp"

#include <functional>

namespace mfgp {

/// Objective callback: fills `grad` and returns the function value.
/// Returning a non-finite value marks the point as infeasible; the line
/// search backs off instead of aborting.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
    int max_iterations = 200;
    int memory = 8;
    double grad_tolerance = 1e-8;  // on the inf-norm, relative to max(1, |x|_inf)
    double f_tolerance = 1e-13;    // relative decrease per step
    double c1 = 1e-4;              // Armijo
    double c2 = 0.9;               // curvature
    int max_line_search = 40;
};

struct LbfgsResult {
    Vector x;
    double f = 0.0;
    int iterations = 0;
    bool converged = false; // gradient or f tolerance met (vs. iteration cap)
    bool failed = false;    // objective non-finite at the start, no progress possible
};

/// Minimizes the objective from x0 by limited-memory BFGS with a strong-Wolfe
/// line search. Always returns the best point seen.
LbfgsResult lbfgs_minimize(const Objective& objective, const Vector& x0,
                           const LbfgsOptions& options = {});

} // namespace mfgp
