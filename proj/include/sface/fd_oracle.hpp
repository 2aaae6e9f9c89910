#pragma once

#include <functional>
#include <vector>

#include "sface/batch.hpp"

namespace sface {

enum class FDMode {
    full,            // loss_fn recomputes everything per probe
    frozen_rescale,  // loss_fn must already pin its re-scale coefficients
};

struct FDConfig {
    double step = 1e-6;  // central-difference half step, in [1e-9, 1e-3]
    FDMode mode = FDMode::full;

    void validate() const;  // throws InvalidSpec
};

struct FDGrad {
    std::vector<double> grad_x;  // same layout as EmbeddingBatch.features
    std::vector<double> grad_w;  // same layout as CenterMatrix.data
};

using LossFn = std::function<double(const EmbeddingBatch&, const CenterMatrix&)>;

/// Central finite differences (f(x+h) - f(x-h)) / 2h per coordinate of
/// the features and the centers. Perturbations hit raw coordinates (no
/// re-normalization), so this differentiates exactly the function the
/// analytic paths claim to differentiate. The mode is a contract tag:
/// in frozen_rescale mode the caller's loss_fn is responsible for
/// pinning its coefficients.
/// Throws NonFiniteLoss if any probe evaluation is non-finite.
FDGrad fd_grad(const LossFn& loss_fn, EmbeddingBatch batch, CenterMatrix centers,
               const FDConfig& cfg);

}  // namespace sface
