#include "mfgp/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace mfgp {

namespace {

bool finite(double v) { return std::isfinite(v); }

struct LinePoint {
    double alpha;
    double f;
    double df; // directional derivative along the search direction
};

// Cubic interpolation between two line-search points, safeguarded into the
// interior of the bracket.
double interpolate(const LinePoint& lo, const LinePoint& hi) {
    double a = lo.alpha, b = hi.alpha;
    double d1 = lo.df + hi.df - 3.0 * (lo.f - hi.f) / (a - b);
    double disc = d1 * d1 - lo.df * hi.df;
    if (disc >= 0.0 && finite(disc) && finite(lo.f) && finite(hi.f)) {
        double d2 = std::sqrt(disc) * (b > a ? 1.0 : -1.0);
        double denom = hi.df - lo.df + 2.0 * d2;
        if (std::abs(denom) > 1e-300) {
            double cand = b - (b - a) * (hi.df + d2 - d1) / denom;
            double lo_b = std::min(a, b), hi_b = std::max(a, b);
            double margin = 0.1 * (hi_b - lo_b);
            if (finite(cand) && cand > lo_b + margin && cand < hi_b - margin) return cand;
        }
    }
    return 0.5 * (a + b);
}

struct SearchOutcome {
    bool accepted = false;
    double alpha = 0.0;
    double f = 0.0;
    Vector grad;
};

// Strong-Wolfe line search: bracketing phase followed by zoom.
SearchOutcome wolfe_search(const Objective& objective, const Vector& x, double f0,
                           const Vector& d, double df0, double alpha0, const LbfgsOptions& opt) {
    SearchOutcome out;
    Vector grad_new(x.size());
    const LinePoint origin{0.0, f0, df0};
    LinePoint prev = origin, lo = origin, hi = origin;
    double alpha = alpha0;
    bool bracketed = false;

    for (int ls = 0; ls < opt.max_line_search; ++ls) {
        Vector x_try = x + alpha * d;
        double f_new = objective(x_try, grad_new);
        bool ok = finite(f_new) && grad_new.allFinite();
        double df_new = ok ? grad_new.dot(d) : 0.0;
        if (!ok || f_new > f0 + opt.c1 * alpha * df0 || (ls > 0 && f_new >= prev.f)) {
            lo = prev;
            hi = {alpha, ok ? f_new : std::numeric_limits<double>::infinity(), df_new};
            bracketed = true;
            break;
        }
        if (std::abs(df_new) <= -opt.c2 * df0) {
            out.accepted = true;
            out.alpha = alpha;
            out.f = f_new;
            out.grad = grad_new;
            return out;
        }
        if (df_new >= 0.0) {
            lo = {alpha, f_new, df_new};
            hi = prev;
            bracketed = true;
            break;
        }
        prev = {alpha, f_new, df_new};
        alpha *= 2.0;
    }
    if (!bracketed) return out;

    for (int z = 0; z < opt.max_line_search; ++z) {
        double a = interpolate(lo, hi);
        Vector x_try = x + a * d;
        double f_new = objective(x_try, grad_new);
        bool ok = finite(f_new) && grad_new.allFinite();
        double df_new = ok ? grad_new.dot(d) : 0.0;
        if (!ok || f_new > f0 + opt.c1 * a * df0 || f_new >= lo.f) {
            hi = {a, ok ? f_new : std::numeric_limits<double>::infinity(), df_new};
        } else {
            if (std::abs(df_new) <= -opt.c2 * df0) {
                out.accepted = true;
                out.alpha = a;
                out.f = f_new;
                out.grad = grad_new;
                return out;
            }
            if (df_new * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
            lo = {a, f_new, df_new};
        }
        if (std::abs(hi.alpha - lo.alpha) < 1e-14 * std::max(1.0, std::abs(lo.alpha))) {
            // interval collapsed; accept a strict-decrease point if we have one
            if (lo.alpha > 0.0 && lo.f < f0) {
                Vector x_acc = x + lo.alpha * d;
                double f_acc = objective(x_acc, grad_new);
                if (finite(f_acc) && grad_new.allFinite() && f_acc < f0) {
                    out.accepted = true;
                    out.alpha = lo.alpha;
                    out.f = f_acc;
                    out.grad = grad_new;
                }
            }
            return out;
        }
    }
    return out;
}

} // namespace

LbfgsResult lbfgs_minimize(const Objective& objective, const Vector& x0,
                           const LbfgsOptions& opt) {
    LbfgsResult result;
    result.x = x0;

    Vector x = x0, grad(x0.size());
    double f = objective(x, grad);
    if (!finite(f) || !grad.allFinite()) {
        result.failed = true;
        result.f = std::numeric_limits<double>::infinity();
        return result;
    }
    result.f = f;

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        result.iterations = iter;
        double xscale = std::max(1.0, x.cwiseAbs().maxCoeff());
        if (grad.cwiseAbs().maxCoeff() <= opt.grad_tolerance * xscale) {
            result.converged = true;
            break;
        }

        // two-loop recursion for the quasi-Newton direction
        Vector d = -grad;
        std::vector<double> corr(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            corr[i] = rho_hist[i] * s_hist[i].dot(d);
            d -= corr[i] * y_hist[i];
        }
        if (!s_hist.empty())
            d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            double beta = rho_hist[i] * y_hist[i].dot(d);
            d += (corr[i] - beta) * s_hist[i];
        }

        double df0 = grad.dot(d);
        if (!(df0 < 0.0)) {
            d = -grad;
            df0 = grad.dot(d);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        double alpha0 =
            s_hist.empty() ? std::min(1.0, 1.0 / std::max(1e-12, grad.cwiseAbs().sum())) : 1.0;
        SearchOutcome ls = wolfe_search(objective, x, f, d, df0, alpha0, opt);
        if (!ls.accepted && !s_hist.empty()) {
            // quasi-Newton step unusable; drop curvature info and retry steepest
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -grad;
            df0 = grad.dot(d);
            alpha0 = std::min(1.0, 1.0 / std::max(1e-12, grad.cwiseAbs().sum()));
            ls = wolfe_search(objective, x, f, d, df0, alpha0, opt);
        }
        if (!ls.accepted) break;

        Vector s = ls.alpha * d;
        Vector y = ls.grad - grad;
        double f_prev = f;
        x += s;
        f = ls.f;
        grad = std::move(ls.grad);
        result.iterations = iter + 1;
        if (f < result.f) {
            result.f = f;
            result.x = x;
        }

        double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            if (s_hist.size() >= static_cast<std::size_t>(opt.memory)) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
        }

        if (opt.f_tolerance > 0.0 &&
            std::abs(f_prev - f) <=
                opt.f_tolerance * std::max({1.0, std::abs(f_prev), std::abs(f)})) {
            result.converged = true;
            break;
        }
    }

    return result;
}

} // namespace mfgp
