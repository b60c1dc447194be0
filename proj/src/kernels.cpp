#include "mfgp/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace mfgp {

namespace {

using nlohmann::json;

class RbfKernel final : public Kernel {
public:
    RbfKernel(int input_dim, std::vector<int> dims, RbfParams params)
        : Kernel(input_dim), dims_(std::move(dims)), params_(std::move(params)) {
        check_shape(!dims_.empty(), "RBF kernel needs at least one active dimension");
        for (int d : dims_)
            check_shape(d >= 0 && d < input_dim, "RBF active dimension out of range");
        check_shape(params_.log_lengthscales.size() == static_cast<Eigen::Index>(dims_.size()),
                    "RBF lengthscale count must match active dimension count");
    }

    double eval(const Vector& x, const Vector& x2) const override {
        check_shape(x.size() == input_dim_ && x2.size() == input_dim_,
                    "RBF eval: input width mismatch");
        double q = 0.0;
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            double delta = (x(dims_[i]) - x2(dims_[i])) / std::exp(params_.log_lengthscales(i));
            q += delta * delta;
        }
        return params_.signal_variance() * std::exp(-0.5 * q);
    }

    Matrix gram(const Matrix& X, const Matrix& X2) const override {
        check_input(X);
        check_input(X2);
        Matrix A = scaled_active(X);
        Matrix B = scaled_active(X2);
        Matrix sq = -2.0 * A * B.transpose();
        sq.colwise() += A.rowwise().squaredNorm();
        sq.rowwise() += B.rowwise().squaredNorm().transpose();
        sq = sq.cwiseMax(0.0);
        return params_.signal_variance() * (-0.5 * sq.array()).exp().matrix();
    }

    std::vector<Matrix> gram_grad(const Matrix& X, const Matrix& X2) const override {
        Matrix K = gram(X, X2);
        std::vector<Matrix> grads;
        grads.reserve(1 + dims_.size());
        grads.push_back(K); // K is linear in signal variance
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            double inv_l2 = std::exp(-2.0 * params_.log_lengthscales(i));
            Matrix diff = X.col(dims_[i]).replicate(1, X2.rows());
            diff.rowwise() -= X2.col(dims_[i]).transpose();
            grads.push_back(K.cwiseProduct(diff.array().square().matrix()) * inv_l2);
        }
        return grads;
    }

    std::vector<Matrix> gram_grad_x1(const Matrix& X, const Matrix& X2) const override {
        Matrix K = gram(X, X2);
        std::vector<Matrix> grads(input_dim_, Matrix::Zero(X.rows(), X2.rows()));
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            double inv_l2 = std::exp(-2.0 * params_.log_lengthscales(i));
            Matrix diff = X.col(dims_[i]).replicate(1, X2.rows());
            diff.rowwise() -= X2.col(dims_[i]).transpose();
            grads[dims_[i]] = -inv_l2 * K.cwiseProduct(diff);
        }
        return grads;
    }

    int param_count() const override { return 1 + static_cast<int>(dims_.size()); }

    void get_params(double* out) const override {
        out[0] = params_.log_signal_variance;
        for (std::size_t i = 0; i < dims_.size(); ++i) out[1 + i] = params_.log_lengthscales(i);
    }

    void set_params(const double* in) override {
        params_.log_signal_variance = in[0];
        for (std::size_t i = 0; i < dims_.size(); ++i) params_.log_lengthscales(i) = in[1 + i];
    }

    void param_names(const std::string& prefix, std::vector<std::string>& out) const override {
        out.push_back(prefix + "signal_variance");
        for (int d : dims_) out.push_back(prefix + "lengthscale" + std::to_string(d));
    }

    KernelPtr clone() const override {
        return std::make_unique<RbfKernel>(input_dim_, dims_, params_);
    }

    json to_json() const override {
        return json{{"type", "rbf"},
                    {"input_dim", input_dim_},
                    {"dims", dims_},
                    {"log_signal_variance", params_.log_signal_variance},
                    {"log_lengthscales",
                     std::vector<double>(params_.log_lengthscales.begin(),
                                         params_.log_lengthscales.end())}};
    }

private:
    Matrix scaled_active(const Matrix& X) const {
        Matrix A(X.rows(), dims_.size());
        for (std::size_t i = 0; i < dims_.size(); ++i)
            A.col(i) = X.col(dims_[i]) * std::exp(-params_.log_lengthscales(i));
        return A;
    }

    std::vector<int> dims_;
    RbfParams params_;
};

enum class Combine { Sum, Product };

class BinaryKernel final : public Kernel {
public:
    BinaryKernel(Combine op, KernelPtr left, KernelPtr right)
        : Kernel(left->input_dim()), op_(op), left_(std::move(left)), right_(std::move(right)) {
        check_shape(left_->input_dim() == right_->input_dim(),
                    "sum/product children must share the input width");
    }

    double eval(const Vector& x, const Vector& x2) const override {
        double a = left_->eval(x, x2), b = right_->eval(x, x2);
        return op_ == Combine::Sum ? a + b : a * b;
    }

    Matrix gram(const Matrix& X, const Matrix& X2) const override {
        Matrix a = left_->gram(X, X2), b = right_->gram(X, X2);
        return op_ == Combine::Sum ? Matrix(a + b) : Matrix(a.cwiseProduct(b));
    }

    std::vector<Matrix> gram_grad(const Matrix& X, const Matrix& X2) const override {
        std::vector<Matrix> gl = left_->gram_grad(X, X2);
        std::vector<Matrix> gr = right_->gram_grad(X, X2);
        std::vector<Matrix> out;
        out.reserve(gl.size() + gr.size());
        if (op_ == Combine::Sum) {
            for (auto& g : gl) out.push_back(std::move(g));
            for (auto& g : gr) out.push_back(std::move(g));
        } else {
            Matrix ka = left_->gram(X, X2), kb = right_->gram(X, X2);
            for (auto& g : gl) out.push_back(g.cwiseProduct(kb));
            for (auto& g : gr) out.push_back(g.cwiseProduct(ka));
        }
        return out;
    }

    std::vector<Matrix> gram_grad_x1(const Matrix& X, const Matrix& X2) const override {
        std::vector<Matrix> gl = left_->gram_grad_x1(X, X2);
        std::vector<Matrix> gr = right_->gram_grad_x1(X, X2);
        if (op_ == Combine::Sum) {
            for (int q = 0; q < input_dim_; ++q) gl[q] += gr[q];
            return gl;
        }
        Matrix ka = left_->gram(X, X2), kb = right_->gram(X, X2);
        for (int q = 0; q < input_dim_; ++q)
            gl[q] = gl[q].cwiseProduct(kb) + gr[q].cwiseProduct(ka);
        return gl;
    }

    int param_count() const override { return left_->param_count() + right_->param_count(); }

    void get_params(double* out) const override {
        left_->get_params(out);
        right_->get_params(out + left_->param_count());
    }

    void set_params(const double* in) override {
        left_->set_params(in);
        right_->set_params(in + left_->param_count());
    }

    void param_names(const std::string& prefix, std::vector<std::string>& out) const override {
        left_->param_names(prefix + (op_ == Combine::Sum ? "sum.l." : "prod.l."), out);
        right_->param_names(prefix + (op_ == Combine::Sum ? "sum.r." : "prod.r."), out);
    }

    KernelPtr clone() const override {
        return std::make_unique<BinaryKernel>(op_, left_->clone(), right_->clone());
    }

    json to_json() const override {
        return json{{"type", op_ == Combine::Sum ? "sum" : "product"},
                    {"left", left_->to_json()},
                    {"right", right_->to_json()}};
    }

private:
    Combine op_;
    KernelPtr left_, right_;
};

// k_rho(x,x') k_f(fl(x),fl(x')) + k_delta(x,x'). One node instead of a
// user-assembled Sum(Product(.,.),.) so the three hyperparameter blocks stay
// addressable for reporting and serialization.
class NargpCompositeKernel final : public Kernel {
public:
    NargpCompositeKernel(KernelPtr k_rho, KernelPtr k_f, KernelPtr k_delta)
        : Kernel(k_rho->input_dim()),
          k_rho_(std::move(k_rho)),
          k_f_(std::move(k_f)),
          k_delta_(std::move(k_delta)) {
        check_shape(k_f_->input_dim() == input_dim_ && k_delta_->input_dim() == input_dim_,
                    "composite kernel children must share the input width");
    }

    double eval(const Vector& x, const Vector& x2) const override {
        return k_rho_->eval(x, x2) * k_f_->eval(x, x2) + k_delta_->eval(x, x2);
    }

    Matrix gram(const Matrix& X, const Matrix& X2) const override {
        return k_rho_->gram(X, X2).cwiseProduct(k_f_->gram(X, X2)) + k_delta_->gram(X, X2);
    }

    std::vector<Matrix> gram_grad(const Matrix& X, const Matrix& X2) const override {
        Matrix krho = k_rho_->gram(X, X2), kf = k_f_->gram(X, X2);
        std::vector<Matrix> out;
        out.reserve(param_count());
        for (auto& g : k_rho_->gram_grad(X, X2)) out.push_back(g.cwiseProduct(kf));
        for (auto& g : k_f_->gram_grad(X, X2)) out.push_back(g.cwiseProduct(krho));
        for (auto& g : k_delta_->gram_grad(X, X2)) out.push_back(std::move(g));
        return out;
    }

    std::vector<Matrix> gram_grad_x1(const Matrix& X, const Matrix& X2) const override {
        Matrix krho = k_rho_->gram(X, X2), kf = k_f_->gram(X, X2);
        std::vector<Matrix> grho = k_rho_->gram_grad_x1(X, X2);
        std::vector<Matrix> gf = k_f_->gram_grad_x1(X, X2);
        std::vector<Matrix> gd = k_delta_->gram_grad_x1(X, X2);
        for (int q = 0; q < input_dim_; ++q)
            gd[q] += grho[q].cwiseProduct(kf) + gf[q].cwiseProduct(krho);
        return gd;
    }

    int param_count() const override {
        return k_rho_->param_count() + k_f_->param_count() + k_delta_->param_count();
    }

    void get_params(double* out) const override {
        k_rho_->get_params(out);
        k_f_->get_params(out + k_rho_->param_count());
        k_delta_->get_params(out + k_rho_->param_count() + k_f_->param_count());
    }

    void set_params(const double* in) override {
        k_rho_->set_params(in);
        k_f_->set_params(in + k_rho_->param_count());
        k_delta_->set_params(in + k_rho_->param_count() + k_f_->param_count());
    }

    void param_names(const std::string& prefix, std::vector<std::string>& out) const override {
        k_rho_->param_names(prefix + "rho.", out);
        k_f_->param_names(prefix + "f.", out);
        k_delta_->param_names(prefix + "delta.", out);
    }

    KernelPtr clone() const override {
        return std::make_unique<NargpCompositeKernel>(k_rho_->clone(), k_f_->clone(),
                                                      k_delta_->clone());
    }

    json to_json() const override {
        return json{{"type", "nargp_composite"},
                    {"k_rho", k_rho_->to_json()},
                    {"k_f", k_f_->to_json()},
                    {"k_delta", k_delta_->to_json()}};
    }

private:
    KernelPtr k_rho_, k_f_, k_delta_;
};

} // namespace

KernelPtr make_rbf(int input_dim, std::vector<int> dims, RbfParams params) {
    return std::make_unique<RbfKernel>(input_dim, std::move(dims), std::move(params));
}

KernelPtr make_rbf_ard(int input_dim) {
    std::vector<int> dims(input_dim);
    for (int i = 0; i < input_dim; ++i) dims[i] = i;
    return make_rbf(input_dim, std::move(dims), RbfParams::unit(input_dim));
}

KernelPtr make_sum(KernelPtr left, KernelPtr right) {
    return std::make_unique<BinaryKernel>(Combine::Sum, std::move(left), std::move(right));
}

KernelPtr make_product(KernelPtr left, KernelPtr right) {
    return std::make_unique<BinaryKernel>(Combine::Product, std::move(left), std::move(right));
}

KernelPtr make_nargp_composite(KernelPtr k_rho, KernelPtr k_f, KernelPtr k_delta) {
    return std::make_unique<NargpCompositeKernel>(std::move(k_rho), std::move(k_f),
                                                  std::move(k_delta));
}

KernelPtr kernel_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "rbf") {
        RbfParams p;
        p.log_signal_variance = j.at("log_signal_variance").get<double>();
        auto ls = j.at("log_lengthscales").get<std::vector<double>>();
        p.log_lengthscales = Eigen::Map<const Vector>(ls.data(), ls.size());
        return make_rbf(j.at("input_dim").get<int>(), j.at("dims").get<std::vector<int>>(),
                        std::move(p));
    }
    if (type == "sum")
        return make_sum(kernel_from_json(j.at("left")), kernel_from_json(j.at("right")));
    if (type == "product")
        return make_product(kernel_from_json(j.at("left")), kernel_from_json(j.at("right")));
    if (type == "nargp_composite")
        return make_nargp_composite(kernel_from_json(j.at("k_rho")), kernel_from_json(j.at("k_f")),
                                    kernel_from_json(j.at("k_delta")));
    throw DataError("unknown kernel type in document: " + type);
}

} // namespace mfgp
