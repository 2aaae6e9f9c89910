#pragma once

#include <iosfwd>
#include <vector>

#include "sface/batch.hpp"
#include "sface/rescale.hpp"

namespace sface {

/// Loss value plus analytic gradients for one batch, with per-pair
/// angle diagnostics. Gradients use the mean-over-batch reduction, so
/// their scale is independent of batch size.
struct LossGradReport {
    double loss = 0.0;
    std::size_t n = 0, dim = 0, num_classes = 0;
    std::vector<double> grad_x;  // n x dim, row-major
    std::vector<double> grad_w;  // dim x num_classes, column-major
    std::vector<int> labels;              // copied from the batch
    std::vector<double> intra_angles;     // theta(x_i, W_{y_i}) per sample
    double mean_inter_angle = 0.0;        // mean theta(x_i, W_j), j != y_i
    // Per-sample gradient magnitudes (before the 1/N reduction):
    std::vector<double> intra_grad_norms;
    std::vector<double> inter_grad_norms;

    std::span<const double> grad_x_row(std::size_t i) const {
        return {grad_x.data() + i * dim, dim};
    }
    std::span<const double> grad_w_col(std::size_t j) const {
        return {grad_w.data() + j * dim, dim};
    }
};

/// Forward value: mean over the batch of
///   -r_intra(theta_y) cos(theta_y) + sum_{j != y} r_inter(theta_j) cos(theta_j)
/// The re-scale coefficients are evaluated at the current angles and
/// enter the value as constants (block-gradient semantics: they never
/// contribute derivative terms).
double sface_forward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                     const RescaleSpec& spec);

/// Analytic gradients under the same block-gradient contract:
///   grad_x row i  = (-r_intra dcos_dx(x_i, W_y) + sum_j r_inter dcos_dx(x_i, W_j)) / N
///   grad_w col j  accumulates the matching dcos_dw terms, sample-major,
/// so results are bitwise deterministic.
LossGradReport sface_backward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                              const RescaleSpec& spec);

/// Diagnostic CSV, one row per sample:
/// `index,label,intra_angle,intra_grad_norm,inter_grad_norm`.
void write_loss_diag_csv(std::ostream& out, const LossGradReport& report);

}  // namespace sface
