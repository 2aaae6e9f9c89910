#include "sface/sface_loss.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "sface/errors.hpp"
#include "sface/geometry.hpp"
#include "sface/text.hpp"

namespace sface {

double sface_forward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                     const RescaleSpec& spec) {
    spec.validate();
    require_same_dim(batch, centers);
    batch.validate(centers.num_classes);
    centers.validate();

    double total = 0.0;
    for (std::size_t i = 0; i < batch.n; ++i) {
        const auto x = batch.row(i);
        const auto y = static_cast<std::size_t>(batch.labels[i]);
        double sample_loss = 0.0;
        for (std::size_t j = 0; j < centers.num_classes; ++j) {
            const AnglePair angle = cosine_angle(x, centers.col(j));
            if (j == y) {
                sample_loss -= r_intra(angle.theta, spec) * angle.cosine;
            } else {
                sample_loss += r_inter(angle.theta, spec) * angle.cosine;
            }
        }
        total += sample_loss;
    }
    return total / static_cast<double>(batch.n);
}

LossGradReport sface_backward(const EmbeddingBatch& batch, const CenterMatrix& centers,
                              const RescaleSpec& spec) {
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
    report.intra_angles.resize(n);
    report.intra_grad_norms.resize(n);
    report.inter_grad_norms.resize(n);
    report.labels = batch.labels;

    std::vector<double> center_norms(c);
    for (std::size_t j = 0; j < c; ++j) center_norms[j] = norm(centers.col(j));

    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    double inter_angle_sum = 0.0;
    std::vector<double> inter_part(d);

    for (std::size_t i = 0; i < n; ++i) {
        const auto x = batch.row(i);
        const auto y = static_cast<std::size_t>(batch.labels[i]);
        const double nx = norm(x);
        const double inv_nx = 1.0 / nx;
        double* grad_row = report.grad_x.data() + i * d;
        std::fill(inter_part.begin(), inter_part.end(), 0.0);

        for (std::size_t j = 0; j < c; ++j) {
            const auto w = centers.col(j);
            const double nw = center_norms[j];
            const double inv_nw = 1.0 / nw;
            const double cosine =
                std::clamp(dot(x, w) * inv_nx * inv_nw, -1.0, 1.0);
            const double theta = std::acos(cosine);

            // Block-gradient contract: the coefficient is evaluated at
            // the current angle and treated as a constant from here on.
            const double coeff =
                j == y ? -r_intra(theta, spec) : r_inter(theta, spec);
            total += coeff * cosine;

            double* grad_col = report.grad_w.data() + j * d;
            for (std::size_t t = 0; t < d; ++t) {
                const double dx_t = inv_nx * (w[t] * inv_nw - cosine * x[t] * inv_nx);
                const double dw_t = inv_nw * (x[t] * inv_nx - cosine * w[t] * inv_nw);
                grad_row[t] += coeff * dx_t;
                grad_col[t] += coeff * inv_n * dw_t;
                if (j != y) inter_part[t] += coeff * dx_t;
            }

            if (j == y) {
                report.intra_angles[i] = theta;
                report.intra_grad_norms[i] =
                    r_intra(theta, spec) * std::sin(theta) * inv_nx;
            } else {
                inter_angle_sum += theta;
            }
        }
        for (std::size_t t = 0; t < d; ++t) grad_row[t] *= inv_n;
        report.inter_grad_norms[i] = norm(inter_part);
    }

    report.loss = total * inv_n;
    report.mean_inter_angle =
        c > 1 ? inter_angle_sum / static_cast<double>(n * (c - 1)) : 0.0;
    return report;
}

void write_loss_diag_csv(std::ostream& out, const LossGradReport& report) {
    out << "index,label,intra_angle,intra_grad_norm,inter_grad_norm\n";
    for (std::size_t i = 0; i < report.n; ++i) {
        out << i << ',' << report.labels[i] << ',' << g17(report.intra_angles[i]) << ','
            << g17(report.intra_grad_norms[i]) << ','
            << g17(report.inter_grad_norms[i]) << '\n';
    }
}

}  // namespace sface
