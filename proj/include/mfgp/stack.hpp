#pragma once

#include "mfgp/dataset.hpp"
#include "mfgp/gp.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace mfgp {

enum class AugmentKind { Nargp, Delay, DelayComposite };
enum class BoundaryRule { Clamp, Reflect };

/// How a layer's inputs are built from x and lower-fidelity values:
/// [x_1..x_d, f_l(x)] for Nargp, [x_1..x_d, f_l(x), f_l(x+tau_1)..f_l(x+tau_d)]
/// for the delay variants.
struct AugmentScheme {
    AugmentKind kind = AugmentKind::Nargp;
    int input_dim = 1;
    double tau = 0.0; // shift magnitude, same along every dimension
    BoundaryRule boundary = BoundaryRule::Clamp;

    bool uses_delay() const { return kind != AugmentKind::Nargp; }
    int augmented_width() const { return uses_delay() ? 2 * input_dim + 1 : input_dim + 1; }
};

/// X with tau added along one dimension, folded back into the box.
Matrix shift_inputs(const Matrix& X, int dim, double tau, const Matrix& domain,
                    BoundaryRule rule);

/// Fixed column layout [x, f_l(x), f_l(x+tau_i)...]; delay values are required
/// exactly when the scheme uses them.
Matrix augment_inputs(const Matrix& X, const Vector& lf_values,
                      const std::optional<Matrix>& lf_delay_values, const AugmentScheme& scheme);

struct StackLayer {
    AugmentScheme scheme;
    GpModel gp; // over augmented inputs
};

enum class StackMethod { Nargp, Gpdf, Gpdfc };

/// Cascade of GP layers, one per fidelity, each consuming the previous
/// layer's output (and delayed outputs) as extra input columns. Prediction
/// never calls the low-fidelity function: delayed values come from the
/// previous surrogate layer.
class NonlinearStack {
public:
    NonlinearStack(GpModel base, std::vector<StackLayer> layers, Matrix domain,
                   double variance_cutoff);

    int level_count() const { return 1 + static_cast<int>(layers_.size()); }
    const GpModel& base() const { return base_; }
    const StackLayer& layer(int level) const { // level in [2, L]
        return layers_.at(static_cast<std::size_t>(level - 2));
    }
    const Matrix& domain() const { return domain_; }
    double variance_cutoff() const { return variance_cutoff_; }

    struct MeanPrediction {
        GaussianPrediction pred;
        bool within_cutoff = true; // false: an intermediate layer was too uncertain
    };

    /// Deterministic path: each layer receives the previous layer's posterior
    /// mean. Valid when intermediate posterior std is below the cutoff;
    /// otherwise the result is flagged approximate and a warning is logged.
    MeanPrediction predict_mean(const Matrix& Xq, int level) const;
    MeanPrediction predict_mean(const Matrix& Xq) const {
        return predict_mean(Xq, level_count());
    }

    /// Monte-Carlo path: S sample paths drawn level by level; per-query mean
    /// and total variance (law of total variance over the paths).
    GaussianPrediction predict_mc(const Matrix& Xq, int level, int samples, Rng& rng) const;
    GaussianPrediction predict_mc(const Matrix& Xq, int samples, Rng& rng) const {
        return predict_mc(Xq, level_count(), samples, rng);
    }

private:
    GpModel base_;
    std::vector<StackLayer> layers_;
    Matrix domain_;
    double variance_cutoff_;
};

struct StackFitOptions {
    GpFitOptions gp;
    double tau_fraction = 0.01; // tau = fraction of the domain width, per dim
    BoundaryRule boundary = BoundaryRule::Clamp;
    double variance_cutoff = 0.02; // normalized output units
    /// Evaluators of the true fidelity functions (index l evaluates fidelity
    /// l+1); used only to fill missing delay values at training time.
    std::vector<std::function<double(const Vector&)>> oracles;
};

/// Bottom-up fit. The f_l(x) column comes from exact previous-level values
/// (prev_exact or nesting); delay columns come from prev_delay or the oracle.
NonlinearStack fit_stack(const FidelityDataset& data, StackMethod method,
                         const StackFitOptions& options, Rng& rng);

} // namespace mfgp
