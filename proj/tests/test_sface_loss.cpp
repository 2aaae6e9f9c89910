#include "sface/sface_loss.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "sface/errors.hpp"
#include "sface/fd_oracle.hpp"
#include "sface/geometry.hpp"
#include "sface/margin_loss.hpp"  // max_rel_deviation
#include "sface/rng.hpp"
#include "test_util.hpp"

using namespace sface;
using testutil::random_batch;
using testutil::random_centers;

namespace {

RescaleSpec sigmoid_spec(double a = 0.90, double b = 1.20) {
    return {RescaleFamily::sigmoid, 64, 80, a, b};
}

// Test-local scalar oracle: loops over every (i, j) pair in long double,
// no shared code with the implementation beyond the r definitions.
long double forward_oracle(const EmbeddingBatch& batch, const CenterMatrix& centers,
                           const RescaleSpec& spec) {
    long double total = 0.0L;
    for (std::size_t i = 0; i < batch.n; ++i) {
        const auto x = batch.row(i);
        for (std::size_t j = 0; j < centers.num_classes; ++j) {
            const auto w = centers.col(j);
            const long double cosine =
                testutil::dot_ld(x, w) / (testutil::norm_ld(x) * testutil::norm_ld(w));
            const auto theta = static_cast<double>(std::acos(cosine));
            if (j == static_cast<std::size_t>(batch.labels[i])) {
                total -= static_cast<long double>(r_intra(theta, spec)) * cosine;
            } else {
                total += static_cast<long double>(r_inter(theta, spec)) * cosine;
            }
        }
    }
    return total / static_cast<long double>(batch.n);
}

// Coefficients pinned at the evaluation point; the loss the frozen-mode
// FD oracle differentiates.
struct FrozenCoeffs {
    std::vector<double> coeff;  // n x c, signed
};

FrozenCoeffs freeze_coeffs(const EmbeddingBatch& batch, const CenterMatrix& centers,
                           const RescaleSpec& spec) {
    FrozenCoeffs frozen;
    frozen.coeff.resize(batch.n * centers.num_classes);
    for (std::size_t i = 0; i < batch.n; ++i) {
        for (std::size_t j = 0; j < centers.num_classes; ++j) {
            const double theta = cosine_angle(batch.row(i), centers.col(j)).theta;
            frozen.coeff[i * centers.num_classes + j] =
                j == static_cast<std::size_t>(batch.labels[i]) ? -r_intra(theta, spec)
                                                               : r_inter(theta, spec);
        }
    }
    return frozen;
}

double frozen_loss(const EmbeddingBatch& batch, const CenterMatrix& centers,
                   const FrozenCoeffs& frozen) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.n; ++i) {
        for (std::size_t j = 0; j < centers.num_classes; ++j) {
            const double cosine = cosine_angle(batch.row(i), centers.col(j)).cosine;
            total += frozen.coeff[i * centers.num_classes + j] * cosine;
        }
    }
    return total / static_cast<double>(batch.n);
}

}  // namespace

TEST_CASE("forward is zero when every cosine is zero") {
    EmbeddingBatch batch(1, 2);
    batch.row(0)[0] = 1.0;
    batch.labels[0] = 0;
    CenterMatrix centers(2, 2);
    centers.col(0)[1] = 1.0;
    centers.col(1)[1] = -1.0;
    CHECK(sface_forward(batch, centers, sigmoid_spec()) == 0.0);
}

TEST_CASE("forward with aligned target and suppressed inter term") {
    EmbeddingBatch batch(1, 2);
    batch.row(0)[0] = 1.0;
    batch.labels[0] = 0;
    CenterMatrix centers(2, 2);
    centers.col(0)[0] = 1.0;  // theta_y = 0
    centers.col(1)[1] = 1.0;  // theta_j = pi/2
    const double loss = sface_forward(batch, centers, sigmoid_spec());
    CHECK(std::abs(loss) < 1e-27);
    CHECK(loss < 0.0);  // the -r_intra(0) cos(0) term survives
}

TEST_CASE("forward matches the per-pair brute-force oracle") {
    Xoshiro256 rng(20240);
    for (int trial = 0; trial < 10; ++trial) {
        const auto batch = random_batch(rng, 8, 16, 5);
        const auto centers = random_centers(rng, 16, 5);
        const double got = sface_forward(batch, centers, sigmoid_spec());
        const double want = static_cast<double>(forward_oracle(batch, centers, sigmoid_spec()));
        CHECK(testutil::rel_err(got, want) <= 1e-12);
    }
}

TEST_CASE("backward reports the closed-form per-sample magnitudes") {
    // Single sample, |x| = 1, theta_y = a = 0.9, theta_other = pi/2.
    EmbeddingBatch batch(1, 2);
    batch.row(0)[0] = 1.0;
    batch.labels[0] = 0;
    CenterMatrix centers(2, 2);
    centers.col(0)[0] = std::cos(0.9);
    centers.col(0)[1] = std::sin(0.9);
    centers.col(1)[1] = 1.0;

    const auto report = sface_backward(batch, centers, sigmoid_spec());
    // Intra magnitude: r_intra(a) sin(a) = 32 sin(0.9) ~ 25.066.
    CHECK(report.intra_grad_norms[0] == doctest::Approx(32.0 * std::sin(0.9)).epsilon(1e-9));
    CHECK(report.intra_grad_norms[0] == doctest::Approx(25.066).epsilon(1e-4));
    // Inter magnitude: r_inter(pi/2) sin(pi/2) < 1e-10.
    CHECK(report.inter_grad_norms[0] < 1e-10);
    CHECK(report.intra_angles[0] == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("gradients vanish on a perfectly arranged batch") {
    // Every x_i equals its center direction; centers are orthonormal.
    const std::size_t c = 4;
    EmbeddingBatch batch(c, c);
    CenterMatrix centers(c, c);
    for (std::size_t j = 0; j < c; ++j) {
        centers.col(j)[j] = 1.0;
        batch.row(j)[j] = 1.0;
        batch.labels[j] = static_cast<int>(j);
    }
    const auto report = sface_backward(batch, centers, sigmoid_spec());
    for (std::size_t i = 0; i < c; ++i) {
        CHECK(norm(report.grad_x_row(i)) <= 1e-10);
    }
    for (std::size_t j = 0; j < c; ++j) {
        CHECK(norm(report.grad_w_col(j)) <= 1e-10);
    }
}

TEST_CASE("backward matches the frozen-coefficient finite-difference oracle") {
    Xoshiro256 rng(11);
    const auto batch = random_batch(rng, 8, 16, 5);
    const auto centers = random_centers(rng, 16, 5);
    const auto spec = sigmoid_spec();

    const auto report = sface_backward(batch, centers, spec);
    const FrozenCoeffs frozen = freeze_coeffs(batch, centers, spec);
    const FDGrad fd = fd_grad(
        [&frozen](const EmbeddingBatch& b, const CenterMatrix& w) {
            return frozen_loss(b, w, frozen);
        },
        batch, centers, FDConfig{1e-6, FDMode::frozen_rescale});

    CHECK(max_rel_deviation(report.grad_x, fd.grad_x) <= 1e-5);
    CHECK(max_rel_deviation(report.grad_w, fd.grad_w) <= 1e-5);
}

TEST_CASE("analytic gradient follows the frozen loss, not the full loss") {
    // Angles near the intra cutoff, where the sigmoid slope is steep and
    // the two differentials disagree strongly.
    Xoshiro256 rng(5);
    const std::size_t d = 8;
    CenterMatrix centers = random_centers(rng, d, 3);
    EmbeddingBatch batch(4, d);
    for (std::size_t i = 0; i < batch.n; ++i) {
        batch.labels[i] = static_cast<int>(i % 3);
        // Place x at ~0.9 rad from its center along a random tangent.
        const auto w = centers.col(static_cast<std::size_t>(batch.labels[i]));
        const double wn = norm(w);
        auto tangent = testutil::random_vector(rng, d);
        const double along = dot(tangent, w) / (wn * wn);
        for (std::size_t t = 0; t < d; ++t) tangent[t] -= along * w[t];
        const double tn = norm(tangent);
        auto x = batch.row(i);
        for (std::size_t t = 0; t < d; ++t) {
            x[t] = std::cos(0.9) * w[t] / wn + std::sin(0.9) * tangent[t] / tn;
        }
    }
    const auto spec = sigmoid_spec();
    const auto report = sface_backward(batch, centers, spec);

    const FrozenCoeffs frozen = freeze_coeffs(batch, centers, spec);
    const FDGrad fd_frozen = fd_grad(
        [&frozen](const EmbeddingBatch& b, const CenterMatrix& w) {
            return frozen_loss(b, w, frozen);
        },
        batch, centers, FDConfig{1e-6, FDMode::frozen_rescale});
    const FDGrad fd_full = fd_grad(
        [&spec](const EmbeddingBatch& b, const CenterMatrix& w) {
            return sface_forward(b, w, spec);
        },
        batch, centers, FDConfig{1e-6, FDMode::full});

    const double vs_frozen = max_rel_deviation(report.grad_x, fd_frozen.grad_x);
    const double vs_full = max_rel_deviation(report.grad_x, fd_full.grad_x);
    CHECK(vs_frozen <= 1e-5);
    CHECK(vs_full > 1e-4);  // the oracles genuinely disagree here
    CHECK(max_rel_deviation(fd_frozen.grad_x, fd_full.grad_x) > 1e-4);
}

TEST_CASE("gradient tangency across shapes") {
    Xoshiro256 rng(77);
    for (const auto& [d, c] : {std::pair<std::size_t, std::size_t>{2, 2},
                               {8, 10},
                               {64, 100}}) {
        const auto batch = random_batch(rng, 6, d, c);
        const auto centers = random_centers(rng, d, c);
        const auto report = sface_backward(batch, centers, sigmoid_spec());
        for (std::size_t i = 0; i < batch.n; ++i) {
            const auto g = report.grad_x_row(i);
            const auto x = batch.row(i);
            CHECK(std::abs(dot(g, x)) <= 1e-9 * norm(g) * norm(x) + 1e-300);
        }
        for (std::size_t j = 0; j < c; ++j) {
            const auto g = report.grad_w_col(j);
            const auto w = centers.col(j);
            CHECK(std::abs(dot(g, w)) <= 1e-9 * norm(g) * norm(w) + 1e-300);
        }
    }
}

TEST_CASE("homogeneity: scaling a feature row leaves the loss alone") {
    Xoshiro256 rng(13);
    auto batch = random_batch(rng, 5, 8, 3);
    const auto centers = random_centers(rng, 8, 3);
    const auto spec = sigmoid_spec();

    const double base_loss = sface_forward(batch, centers, spec);
    const auto base_report = sface_backward(batch, centers, spec);

    const double alpha = 3.5;
    for (double& v : batch.row(2)) v *= alpha;
    const double scaled_loss = sface_forward(batch, centers, spec);
    const auto scaled_report = sface_backward(batch, centers, spec);

    CHECK(testutil::rel_err(scaled_loss, base_loss) <= 1e-10);
    const auto g0 = base_report.grad_x_row(2);
    const auto g1 = scaled_report.grad_x_row(2);
    for (std::size_t t = 0; t < g0.size(); ++t) {
        CHECK(std::abs(g1[t] - g0[t] / alpha) <=
              1e-10 * std::max(std::abs(g0[t] / alpha), 1e-12));
    }
}

TEST_CASE("backward agrees with a naive per-pair reassembly") {
    Xoshiro256 rng(4242);
    const auto batch = random_batch(rng, 8, 16, 5);
    const auto centers = random_centers(rng, 16, 5);
    const auto spec = sigmoid_spec();
    const auto report = sface_backward(batch, centers, spec);

    std::vector<double> grad_x(batch.n * batch.dim, 0.0);
    std::vector<double> grad_w(batch.dim * centers.num_classes, 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.n);
    for (std::size_t i = 0; i < batch.n; ++i) {
        for (std::size_t j = 0; j < centers.num_classes; ++j) {
            const double theta = cosine_angle(batch.row(i), centers.col(j)).theta;
            const double coeff = j == static_cast<std::size_t>(batch.labels[i])
                                     ? -r_intra(theta, spec)
                                     : r_inter(theta, spec);
            const auto gx = dcos_dx(batch.row(i), centers.col(j));
            const auto gw = dcos_dw(batch.row(i), centers.col(j));
            for (std::size_t t = 0; t < batch.dim; ++t) {
                grad_x[i * batch.dim + t] += coeff * inv_n * gx[t];
                grad_w[j * batch.dim + t] += coeff * inv_n * gw[t];
            }
        }
    }
    CHECK(max_rel_deviation(report.grad_x, grad_x) <= 1e-12);
    CHECK(max_rel_deviation(report.grad_w, grad_w) <= 1e-12);
}

TEST_CASE("backward is deterministic") {
    Xoshiro256 rng(300);
    const auto batch = random_batch(rng, 8, 16, 5);
    const auto centers = random_centers(rng, 16, 5);
    const auto a = sface_backward(batch, centers, sigmoid_spec());
    const auto b = sface_backward(batch, centers, sigmoid_spec());
    CHECK(a.grad_x == b.grad_x);
    CHECK(a.grad_w == b.grad_w);
    CHECK(a.loss == b.loss);
}

TEST_CASE("shape and degeneracy errors propagate") {
    Xoshiro256 rng(1);
    auto batch = random_batch(rng, 3, 8, 2);
    const auto centers = random_centers(rng, 9, 2);
    CHECK_THROWS_AS(sface_forward(batch, centers, sigmoid_spec()), DimensionMismatch);

    const auto good_centers = random_centers(rng, 8, 2);
    for (double& v : batch.row(1)) v = 0.0;
    CHECK_THROWS_AS(sface_forward(batch, good_centers, sigmoid_spec()), DegenerateVector);
}

TEST_CASE("diagnostic CSV layout") {
    Xoshiro256 rng(9);
    const auto batch = random_batch(rng, 3, 4, 2);
    const auto centers = random_centers(rng, 4, 2);
    const auto report = sface_backward(batch, centers, sigmoid_spec());
    std::ostringstream out;
    write_loss_diag_csv(out, report);
    const std::string text = out.str();
    CHECK(text.rfind("index,label,intra_angle,intra_grad_norm,inter_grad_norm\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
