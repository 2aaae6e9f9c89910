#include "sface/margin_loss.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "sface/errors.hpp"
#include "sface/geometry.hpp"

namespace sface {

namespace {

constexpr double kPi = 3.14159265358979323846;

double f_of_theta(double theta, const MarginSpec& spec) {
    switch (spec.variant) {
        case MarginVariant::nsoftmax: return std::cos(theta);
        case MarginVariant::cosface: return std::cos(theta) - spec.m;
        case MarginVariant::arcface: return std::cos(theta + spec.m);
        case MarginVariant::combined:
            return std::cos(spec.m1 * theta + spec.m2) - spec.m3;
        case MarginVariant::softmax: break;
    }
    throw InvalidSpec("f(theta) undefined for the raw softmax variant");
}

// df/dcos(theta); throws SingularAngle where the sin(theta) denominator
// vanishes.
double df_dcos(double theta, const MarginSpec& spec) {
    switch (spec.variant) {
        case MarginVariant::nsoftmax:
        case MarginVariant::cosface:
            return 1.0;
        case MarginVariant::arcface: {
            const double sine = std::sin(theta);
            if (theta <= 0.0 || sine == 0.0) {
                throw SingularAngle("arcface df/dcos undefined at theta = 0");
            }
            return std::sin(theta + spec.m) / sine;
        }
        case MarginVariant::combined: {
            const double sine = std::sin(theta);
            if (theta <= 0.0 || sine == 0.0) {
                throw SingularAngle("combined df/dcos undefined at theta = 0");
            }
            return spec.m1 * std::sin(spec.m1 * theta + spec.m2) / sine;
        }
        case MarginVariant::softmax: break;
    }
    throw InvalidSpec("df/dcos undefined for the raw softmax variant");
}

void check_margin_domain(double theta_y, const MarginSpec& spec) {
    if (spec.variant == MarginVariant::arcface && theta_y + spec.m > kPi) {
        throw MarginDomain("arcface: theta_y + m exceeds pi");
    }
    if (spec.variant == MarginVariant::combined &&
        spec.m1 * theta_y + spec.m2 > kPi) {
        throw MarginDomain("combined: m1 theta_y + m2 exceeds pi");
    }
}

void check_angle_range(double theta) {
    if (!(theta >= 0.0 && theta <= kPi)) {
        throw MarginDomain("angle outside [0, pi]");
    }
}

double logsumexp(std::span<const double> values) {
    double peak = values[0];
    for (double v : values) peak = std::max(peak, v);
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - peak);
    return peak + std::log(sum);
}

// lse(a, b) for two already-reduced terms.
double logsumexp2(double a, double b) {
    const double hi = std::max(a, b);
    const double lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

struct SampleAngles {
    double theta_y = 0.0;
    std::vector<double> theta_others;      // ascending j, skipping y
    std::vector<std::size_t> other_cols;   // column index per entry
};

SampleAngles sample_angles(const EmbeddingBatch& batch, const CenterMatrix& centers,
                           std::size_t i) {
    SampleAngles out;
    const auto x = batch.row(i);
    const auto y = static_cast<std::size_t>(batch.labels[i]);
    out.theta_others.reserve(centers.num_classes - 1);
    out.other_cols.reserve(centers.num_classes - 1);
    for (std::size_t j = 0; j < centers.num_classes; ++j) {
        const double theta = cosine_angle(x, centers.col(j)).theta;
        if (j == y) {
            out.theta_y = theta;
        } else {
            out.theta_others.push_back(theta);
            out.other_cols.push_back(j);
        }
    }
    return out;
}

// Shared gradient assembly: per-class signed cosine coefficients are
// chained through the tangent cosine-gradient identities. The two
// equivalence routes differ only in how the coefficients are produced.
struct AssembledGrads {
    std::vector<double> grad_x;  // n x d
    std::vector<double> grad_w;  // d x c
};

template <typename CoeffFn>
AssembledGrads assemble_cosine_grads(const EmbeddingBatch& batch,
                                     const CenterMatrix& centers, CoeffFn&& coeffs) {
    const std::size_t n = batch.n;
    const std::size_t d = batch.dim;
    const std::size_t c = centers.num_classes;
    AssembledGrads out;
    out.grad_x.assign(n * d, 0.0);
    out.grad_w.assign(d * c, 0.0);

    std::vector<double> center_norms(c);
    for (std::size_t j = 0; j < c; ++j) center_norms[j] = norm(centers.col(j));
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> class_coeff(c);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = batch.row(i);
        const double inv_nx = 1.0 / norm(x);
        coeffs(i, class_coeff);
        double* grad_row = out.grad_x.data() + i * d;
        for (std::size_t j = 0; j < c; ++j) {
            const auto w = centers.col(j);
            const double inv_nw = 1.0 / center_norms[j];
            const double cosine =
                std::clamp(dot(x, w) * inv_nx * inv_nw, -1.0, 1.0);
            const double coeff = class_coeff[j];
            double* grad_col = out.grad_w.data() + j * d;
            for (std::size_t t = 0; t < d; ++t) {
                grad_row[t] += coeff * inv_n * inv_nx * (w[t] * inv_nw - cosine * x[t] * inv_nx);
                grad_col[t] += coeff * inv_n * inv_nw * (x[t] * inv_nx - cosine * w[t] * inv_nw);
            }
        }
    }
    return out;
}

}  // namespace

std::string to_string(MarginVariant variant) {
    switch (variant) {
        case MarginVariant::softmax: return "softmax";
        case MarginVariant::nsoftmax: return "nsoftmax";
        case MarginVariant::cosface: return "cosface";
        case MarginVariant::arcface: return "arcface";
        case MarginVariant::combined: return "combined";
    }
    return "unknown";
}

MarginVariant margin_variant_from_string(const std::string& name) {
    if (name == "softmax") return MarginVariant::softmax;
    if (name == "nsoftmax") return MarginVariant::nsoftmax;
    if (name == "cosface") return MarginVariant::cosface;
    if (name == "arcface") return MarginVariant::arcface;
    if (name == "combined") return MarginVariant::combined;
    throw InvalidSpec("unknown margin variant: " + name);
}

void MarginSpec::validate() const {
    if (!(s > 0.0)) throw InvalidSpec("MarginSpec: s must be positive");
    if ((variant == MarginVariant::cosface || variant == MarginVariant::arcface) &&
        m < 0.0) {
        throw InvalidSpec("MarginSpec: m must be nonnegative");
    }
    if (variant == MarginVariant::combined) {
        if (!(m1 > 0.0)) throw InvalidSpec("MarginSpec: m1 must be positive");
        if (m2 < 0.0 || m3 < 0.0) {
            throw InvalidSpec("MarginSpec: m2, m3 must be nonnegative");
        }
    }
}

double margin_forward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                      const MarginSpec& spec) {
    spec.validate();
    require_same_dim(batch, centers);
    batch.validate(centers.num_classes);
    centers.validate();

    const std::size_t c = centers.num_classes;
    double total = 0.0;
    std::vector<double> logits(c);

    for (std::size_t i = 0; i < batch.n; ++i) {
        const auto x = batch.row(i);
        const auto y = static_cast<std::size_t>(batch.labels[i]);
        if (spec.variant == MarginVariant::softmax) {
            for (std::size_t j = 0; j < c; ++j) logits[j] = dot(centers.col(j), x);
        } else {
            const SampleAngles angles = sample_angles(batch, centers, i);
            check_margin_domain(angles.theta_y, spec);
            logits[y] = spec.s * f_of_theta(angles.theta_y, spec);
            for (std::size_t t = 0; t < angles.other_cols.size(); ++t) {
                logits[angles.other_cols[t]] = spec.s * std::cos(angles.theta_others[t]);
            }
        }
        total += logsumexp(logits) - logits[y];
    }
    return total / static_cast<double>(batch.n);
}

CosGrad margin_grad_cos(double theta_y, std::span<const double> thetas_other,
                        const MarginSpec& spec) {
    spec.validate();
    if (!spec.uses_cosine_logits()) {
        throw InvalidSpec("margin_grad_cos is defined for cosine-logit variants only");
    }
    check_angle_range(theta_y);
    for (double t : thetas_other) check_angle_range(t);
    check_margin_domain(theta_y, spec);

    const double dfdcos = df_dcos(theta_y, spec);
    const double z_y = spec.s * f_of_theta(theta_y, spec);

    double peak = z_y;
    for (double t : thetas_other) peak = std::max(peak, spec.s * std::cos(t));

    double sum_others = 0.0;
    CosGrad grad;
    grad.d_others.resize(thetas_other.size());
    for (std::size_t j = 0; j < thetas_other.size(); ++j) {
        const double e = std::exp(spec.s * std::cos(thetas_other[j]) - peak);
        grad.d_others[j] = e;  // scaled below once the denominator is known
        sum_others += e;
    }
    const double denom = std::exp(z_y - peak) + sum_others;

    // Explicit-ratio form of the target partial; avoids the (P_y - 1)
    // cancellation when the target probability saturates.
    grad.d_target = -spec.s * (sum_others / denom) * dfdcos;
    for (double& d : grad.d_others) d = spec.s * (d / denom);
    return grad;
}

EquivalentRescale equivalent_rescale(double theta_y, std::span<const double> thetas_other,
                                     const MarginSpec& spec) {
    spec.validate();
    if (!spec.uses_cosine_logits()) {
        throw InvalidSpec("equivalent_rescale is defined for cosine-logit variants only");
    }
    check_angle_range(theta_y);
    for (double t : thetas_other) check_angle_range(t);
    check_margin_domain(theta_y, spec);

    const double dfdcos = df_dcos(theta_y, spec);
    const double z_y = spec.s * f_of_theta(theta_y, spec);

    EquivalentRescale out;
    out.inter.resize(thetas_other.size());
    if (thetas_other.empty()) {
        out.intra = 0.0;
        return out;
    }

    std::vector<double> z_others(thetas_other.size());
    for (std::size_t j = 0; j < thetas_other.size(); ++j) {
        z_others[j] = spec.s * std::cos(thetas_other[j]);
    }
    const double lse_others = logsumexp(z_others);
    const double lse_all = logsumexp2(z_y, lse_others);

    out.intra = spec.s * std::exp(lse_others - lse_all) * dfdcos;
    for (std::size_t j = 0; j < thetas_other.size(); ++j) {
        out.inter[j] = spec.s * std::exp(z_others[j] - lse_all);
    }
    return out;
}

LossGradReport margin_backward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                               const MarginSpec& spec) {
    spec.validate();
    require_same_dim(batch, centers);
    batch.validate(centers.num_classes);
    centers.validate();

    const std::size_t n = batch.n;
    const std::size_t d = batch.dim;
    const std::size_t c = centers.num_classes;

    LossGradReport report;
    report.n = n;
    report.dim = d;
    report.num_classes = c;
    report.grad_x.assign(n * d, 0.0);
    report.grad_w.assign(d * c, 0.0);
    report.labels = batch.labels;
    report.intra_angles.resize(n);
    report.intra_grad_norms.resize(n);
    report.inter_grad_norms.resize(n);

    std::vector<double> center_norms(c);
    for (std::size_t j = 0; j < c; ++j) center_norms[j] = norm(centers.col(j));
    const double inv_n = 1.0 / static_cast<double>(n);

    double total = 0.0;
    double inter_angle_sum = 0.0;
    std::vector<double> logits(c);
    std::vector<double> probs(c);
    std::vector<double> inter_part(d);

    for (std::size_t i = 0; i < n; ++i) {
        const auto x = batch.row(i);
        const auto y = static_cast<std::size_t>(batch.labels[i]);
        double* grad_row = report.grad_x.data() + i * d;
        std::fill(inter_part.begin(), inter_part.end(), 0.0);

        if (spec.variant == MarginVariant::softmax) {
            // Raw logits: d L / d x_i = sum_j (P_j - [j = y]) W_j / N.
            for (std::size_t j = 0; j < c; ++j) logits[j] = dot(centers.col(j), x);
            const double lse = logsumexp(logits);
            total += lse - logits[y];
            for (std::size_t j = 0; j < c; ++j) {
                probs[j] = std::exp(logits[j] - lse);
                const double coeff = probs[j] - (j == y ? 1.0 : 0.0);
                const auto w = centers.col(j);
                double* grad_col = report.grad_w.data() + j * d;
                for (std::size_t t = 0; t < d; ++t) {
                    grad_row[t] += coeff * inv_n * w[t];
                    grad_col[t] += coeff * inv_n * x[t];
                    if (j != y) inter_part[t] += probs[j] * w[t];
                }
            }
            const AnglePair intra = cosine_angle(x, centers.col(y));
            report.intra_angles[i] = intra.theta;
            report.intra_grad_norms[i] =
                std::abs(probs[y] - 1.0) * center_norms[y];
            report.inter_grad_norms[i] = norm(inter_part);
            for (std::size_t j = 0; j < c; ++j) {
                if (j != y) inter_angle_sum += cosine_angle(x, centers.col(j)).theta;
            }
            continue;
        }

        const SampleAngles angles = sample_angles(batch, centers, i);
        check_margin_domain(angles.theta_y, spec);
        const CosGrad cos_grad = margin_grad_cos(angles.theta_y, angles.theta_others, spec);

        logits[y] = spec.s * f_of_theta(angles.theta_y, spec);
        for (std::size_t t = 0; t < angles.other_cols.size(); ++t) {
            logits[angles.other_cols[t]] = spec.s * std::cos(angles.theta_others[t]);
            inter_angle_sum += angles.theta_others[t];
        }
        total += logsumexp(logits) - logits[y];

        const double inv_nx = 1.0 / norm(x);
        // Target term plus the inter sum, chained through the tangent
        // cosine identities; sample-major accumulation into grad_w.
        for (std::size_t jj = 0; jj <= angles.other_cols.size(); ++jj) {
            const bool is_target = jj == angles.other_cols.size();
            const std::size_t j = is_target ? y : angles.other_cols[jj];
            const double coeff = is_target ? cos_grad.d_target : cos_grad.d_others[jj];
            const auto w = centers.col(j);
            const double inv_nw = 1.0 / center_norms[j];
            const double cosine =
                std::clamp(dot(x, w) * inv_nx * inv_nw, -1.0, 1.0);
            double* grad_col = report.grad_w.data() + j * d;
            for (std::size_t t = 0; t < d; ++t) {
                const double dx_t = inv_nx * (w[t] * inv_nw - cosine * x[t] * inv_nx);
                const double dw_t = inv_nw * (x[t] * inv_nx - cosine * w[t] * inv_nw);
                grad_row[t] += coeff * inv_n * dx_t;
                grad_col[t] += coeff * inv_n * dw_t;
                if (!is_target) inter_part[t] += coeff * dx_t;
            }
        }
        report.intra_angles[i] = angles.theta_y;
        report.intra_grad_norms[i] =
            std::abs(cos_grad.d_target) * std::sin(angles.theta_y) * inv_nx;
        report.inter_grad_norms[i] = norm(inter_part);
    }

    report.loss = total * inv_n;
    report.mean_inter_angle =
        c > 1 ? inter_angle_sum / static_cast<double>(n * (c - 1)) : 0.0;
    return report;
}

double equivalence_report(const EmbeddingBatch& batch, const CenterMatrix& centers,
                          const MarginSpec& spec) {
    spec.validate();
    if (!spec.uses_cosine_logits()) {
        throw InvalidSpec("equivalence_report is defined for cosine-logit variants only");
    }
    require_same_dim(batch, centers);
    batch.validate(centers.num_classes);
    centers.validate();

    const std::size_t c = centers.num_classes;
    std::vector<SampleAngles> angles(batch.n);
    for (std::size_t i = 0; i < batch.n; ++i) angles[i] = sample_angles(batch, centers, i);

    // Route A: chain rule through the cosine partials.
    const AssembledGrads route_a = assemble_cosine_grads(
        batch, centers, [&](std::size_t i, std::vector<double>& coeff) {
            const auto y = static_cast<std::size_t>(batch.labels[i]);
            const CosGrad g = margin_grad_cos(angles[i].theta_y, angles[i].theta_others, spec);
            coeff.assign(c, 0.0);
            coeff[y] = g.d_target;
            for (std::size_t t = 0; t < angles[i].other_cols.size(); ++t) {
                coeff[angles[i].other_cols[t]] = g.d_others[t];
            }
        });

    // Route B: metric form with the equivalent re-scale coefficients.
    const AssembledGrads route_b = assemble_cosine_grads(
        batch, centers, [&](std::size_t i, std::vector<double>& coeff) {
            const auto y = static_cast<std::size_t>(batch.labels[i]);
            const EquivalentRescale r =
                equivalent_rescale(angles[i].theta_y, angles[i].theta_others, spec);
            coeff.assign(c, 0.0);
            coeff[y] = -r.intra;
            for (std::size_t t = 0; t < angles[i].other_cols.size(); ++t) {
                coeff[angles[i].other_cols[t]] = r.inter[t];
            }
        });

    return std::max(max_rel_deviation(route_a.grad_x, route_b.grad_x),
                    max_rel_deviation(route_a.grad_w, route_b.grad_w));
}

bool margin_domain_satisfied(const EmbeddingBatch& batch, const CenterMatrix& centers,
                             const MarginSpec& spec, double headroom) {
    if (spec.variant != MarginVariant::arcface &&
        spec.variant != MarginVariant::combined) {
        return true;
    }
    for (std::size_t i = 0; i < batch.n; ++i) {
        const double theta =
            cosine_angle(batch.row(i), centers.col(batch.labels[i])).theta;
        if (theta < headroom) return false;
        const double shifted = spec.variant == MarginVariant::arcface
                                   ? theta + spec.m
                                   : spec.m1 * theta + spec.m2;
        if (shifted > kPi - headroom) return false;
    }
    return true;
}

double max_rel_deviation(std::span<const double> a, std::span<const double> b,
                         double floor_fraction) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("max_rel_deviation: size mismatch");
    }
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    if (scale == 0.0) return 0.0;
    const double floor = floor_fraction * scale;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace sface
