#pragma once

#include <span>
#include <string>
#include <vector>

#include "sface/batch.hpp"
#include "sface/sface_loss.hpp"

namespace sface {

enum class MarginVariant { softmax, nsoftmax, cosface, arcface, combined };

std::string to_string(MarginVariant variant);
MarginVariant margin_variant_from_string(const std::string& name);

/// Softmax-family configuration.
///   softmax  — raw logits W_j^T x_i (no normalization, no scale)
///   nsoftmax — f(theta) = cos(theta)
///   cosface  — f(theta) = cos(theta) - m
///   arcface  — f(theta) = cos(theta + m)
///   combined — f(theta) = cos(m1 theta + m2) - m3
struct MarginSpec {
    MarginVariant variant = MarginVariant::nsoftmax;
    double s = 64.0;
    double m = 0.0;
    double m1 = 1.0, m2 = 0.0, m3 = 0.0;  // combined only

    void validate() const;  // throws InvalidSpec
    bool uses_cosine_logits() const { return variant != MarginVariant::softmax; }
};

/// Mean over the batch of -log(e^{s f(theta_y)} / (e^{s f(theta_y)} +
/// sum_{j != y} e^{s cos theta_j})). Log-sum-exp shifted. The plain
/// softmax variant uses raw logits over all classes instead.
/// Throws MarginDomain if arcface/combined leave the angular domain.
double margin_forward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                      const MarginSpec& spec);

/// Partials of the per-sample loss w.r.t. the cosines:
///   d_target  = s (P_y - 1) df/dcos theta_y
///   d_other_j = s P_j
/// d_target is computed through the explicit-ratio form (no 1 - P_y
/// cancellation). Only defined for the cosine-logit variants.
/// Throws SingularAngle for arcface/combined at theta_y = 0.
struct CosGrad {
    double d_target = 0.0;
    std::vector<double> d_others;
};
CosGrad margin_grad_cos(double theta_y, std::span<const double> thetas_other,
                        const MarginSpec& spec);

/// Coefficients of the equivalent re-scaled metric form. They must
/// reproduce the cosine partials exactly: intra = -d_target,
/// inter[j] = d_other_j. Evaluated fully in log space, an independent
/// arithmetic route from margin_grad_cos.
struct EquivalentRescale {
    double intra = 0.0;
    std::vector<double> inter;
};
EquivalentRescale equivalent_rescale(double theta_y, std::span<const double> thetas_other,
                                     const MarginSpec& spec);

/// Full analytic gradients of margin_forward via the chain rule through
/// the cosine partials (and directly through the raw logits for the
/// plain softmax variant). Mean reduction, sample-major accumulation.
LossGradReport margin_backward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                               const MarginSpec& spec);

/// Assembles the full gradients two ways — (A) chain rule through the
/// cosine partials, (B) the metric form with coefficients from
/// equivalent_rescale — and returns the maximum elementwise relative
/// deviation between them.
double equivalence_report(const EmbeddingBatch& batch, const CenterMatrix& centers,
                          const MarginSpec& spec);

/// True when every target angle keeps at least `headroom` radians away
/// from the angular-domain edges of the variant (theta_y = 0 and the
/// arcface/combined bound at pi). Always true for variants without a
/// restricted domain.
bool margin_domain_satisfied(const EmbeddingBatch& batch, const CenterMatrix& centers,
                             const MarginSpec& spec, double headroom = 0.0);

/// Effective gradient-magnitude curves of a margin loss under the
/// idealization that all the non-target angles are equal:
///   v_intra(theta) = r_intra_eq(theta_y = theta, others = theta_other) sin(theta)
///   v_inter(theta) = r_inter_eq(theta_y = theta_other, others = theta) sin(theta)
/// with num_classes - 1 identical non-target terms. Unlike the
/// re-scale-function curves, both depend on where the opposite angle
/// sits; theta_other pins it. num_points uniform samples over [0, pi/2].
std::vector<VCurvePoint> margin_v_curves(const MarginSpec& spec, std::size_t num_points,
                                         double theta_other, std::size_t num_classes);

/// Deviation metric shared by equivalence_report and the gradient
/// checks: max over elements of |a - b| / max(|a|, |b|, floor), where
/// floor = floor_fraction * the largest magnitude in either input.
/// Elements far below the gradient's own scale are measured against
/// that scale instead of their own, which keeps the metric meaningful
/// at machine-noise magnitudes.
double max_rel_deviation(std::span<const double> a, std::span<const double> b,
                         double floor_fraction = 1e-3);

}  // namespace sface
