#pragma once

#include "mfgp/types.hpp"

#include "json.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mfgp {

/// RBF hyperparameters, stored as logs so positivity is structural.
struct RbfParams {
    double log_signal_variance = 0.0;
    Vector log_lengthscales; // one per active dimension (ARD)

    static RbfParams unit(Eigen::Index n_dims) {
        RbfParams p;
        p.log_lengthscales = Vector::Zero(n_dims);
        return p;
    }

    double signal_variance() const { return std::exp(log_signal_variance); }
    Vector lengthscales() const { return log_lengthscales.array().exp(); }
};

class Kernel;
using KernelPtr = std::unique_ptr<Kernel>;

/// Node of an immutable kernel tree over a fixed-width input space.
/// Evaluation is pure; hyperparameters live in one flat log-space vector
/// (depth-first over the tree) so a single optimizer drives any composite.
class Kernel {
public:
    virtual ~Kernel() = default;

    /// Width of the input vectors this tree expects.
    int input_dim() const { return input_dim_; }

    virtual double eval(const Vector& x, const Vector& x2) const = 0;

    /// Cross-Gram matrix; entry (i,j) = k(X.row(i), X2.row(j)).
    virtual Matrix gram(const Matrix& X, const Matrix& X2) const = 0;
    Matrix gram(const Matrix& X) const { return gram(X, X); }

    /// d k(X, X2) / d(log theta_p), one matrix per hyperparameter.
    virtual std::vector<Matrix> gram_grad(const Matrix& X, const Matrix& X2) const = 0;
    std::vector<Matrix> gram_grad(const Matrix& X) const { return gram_grad(X, X); }

    /// d k(X.row(i), X2.row(j)) / d X(i,q), one matrix per input dimension q.
    /// Stationary nodes give the X2-side gradient by negation.
    virtual std::vector<Matrix> gram_grad_x1(const Matrix& X, const Matrix& X2) const = 0;

    virtual int param_count() const = 0;
    virtual void get_params(double* out) const = 0;
    virtual void set_params(const double* in) = 0;
    virtual void param_names(const std::string& prefix, std::vector<std::string>& out) const = 0;

    Vector params() const {
        Vector v(param_count());
        get_params(v.data());
        return v;
    }
    void set_params(const Vector& v) {
        check_shape(v.size() == param_count(), "kernel parameter vector has wrong length");
        set_params(v.data());
    }
    std::vector<std::string> param_names() const {
        std::vector<std::string> names;
        param_names("", names);
        return names;
    }

    virtual KernelPtr clone() const = 0;
    virtual nlohmann::json to_json() const = 0;

protected:
    explicit Kernel(int input_dim) : input_dim_(input_dim) {}
    void check_input(const Matrix& X) const {
        check_shape(X.cols() == input_dim_,
                    "kernel expects input width " + std::to_string(input_dim_) + ", got " +
                        std::to_string(X.cols()));
    }

    int input_dim_;
};

// Constructors. `dims` are the active columns of the full input.
KernelPtr make_rbf(int input_dim, std::vector<int> dims, RbfParams params);
KernelPtr make_rbf_ard(int input_dim); // all dims active, unit parameters
KernelPtr make_sum(KernelPtr left, KernelPtr right);
KernelPtr make_product(KernelPtr left, KernelPtr right);

/// k_rho(x,x') * k_f(fl(x),fl(x')) + k_delta(x,x') as one addressable node.
KernelPtr make_nargp_composite(KernelPtr k_rho, KernelPtr k_f, KernelPtr k_delta);

KernelPtr kernel_from_json(const nlohmann::json& j);

} // namespace mfgp
