#include "sface/margin_loss.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "sface/errors.hpp"
#include "sface/fd_oracle.hpp"
#include "sface/geometry.hpp"
#include "sface/rng.hpp"
#include "test_util.hpp"

using namespace sface;
using testutil::random_batch;
using testutil::random_centers;

namespace {

constexpr double kPi = 3.14159265358979323846;

MarginSpec make_spec(MarginVariant variant, double s = 64, double m = 0) {
    MarginSpec spec;
    spec.variant = variant;
    spec.s = s;
    spec.m = m;
    return spec;
}

// One sample at theta_y from its center, pi/2 from the other, d = 2.
struct SymmetricPair {
    EmbeddingBatch batch{1, 2};
    CenterMatrix centers{2, 2};
};

SymmetricPair symmetric_pair() {
    SymmetricPair p;
    p.batch.row(0)[0] = 1.0;
    p.batch.labels[0] = 0;
    p.centers.col(0)[1] = 1.0;   // theta_y = pi/2
    p.centers.col(1)[1] = -1.0;  // theta_j = pi/2
    return p;
}

double logsumexp_ref(const std::vector<double>& z) {
    double peak = z[0];
    for (double v : z) peak = std::max(peak, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - peak);
    return peak + std::log(sum);
}

}  // namespace

TEST_CASE("nsoftmax symmetric two-class loss is log 2") {
    const auto p = symmetric_pair();
    const double loss = margin_forward(p.batch, p.centers, make_spec(MarginVariant::nsoftmax));
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(loss == doctest::Approx(0.693147).epsilon(1e-5));
}

TEST_CASE("cosface symmetric two-class loss matches the scalar form") {
    const auto p = symmetric_pair();
    const double loss =
        margin_forward(p.batch, p.centers, make_spec(MarginVariant::cosface, 64, 0.35));
    const double want = 22.4 + std::log1p(std::exp(-22.4));  // log(1 + e^{0.35 * 64})
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
    CHECK(loss == doctest::Approx(22.4).epsilon(1e-4));
}

TEST_CASE("single-class batches have zero loss") {
    EmbeddingBatch batch(2, 3);
    batch.row(0)[0] = 1.0;
    batch.row(1)[2] = 2.0;
    CenterMatrix centers(3, 1);
    centers.col(0)[1] = 1.0;
    for (const auto variant : {MarginVariant::softmax, MarginVariant::nsoftmax,
                               MarginVariant::cosface, MarginVariant::arcface}) {
        CHECK(margin_forward(batch, centers, make_spec(variant, 64, 0.3)) == 0.0);
    }
}

TEST_CASE("margin_grad_cos in the symmetric case") {
    const std::vector<double> others{kPi / 2};
    const auto grad = margin_grad_cos(kPi / 2, others, make_spec(MarginVariant::nsoftmax));
    CHECK(grad.d_target == doctest::Approx(-32.0).epsilon(1e-13));
    REQUIRE(grad.d_others.size() == 1);
    CHECK(grad.d_others[0] == doctest::Approx(32.0).epsilon(1e-13));
}

TEST_CASE("arcface correction factor at theta = pi/2") {
    const std::vector<double> others{kPi / 2};
    const auto spec = make_spec(MarginVariant::arcface, 64, 0.5);
    // d_target = s (P_y - 1) sin(theta + m)/sin(theta); extract the factor.
    const auto grad = margin_grad_cos(kPi / 2, others, spec);
    const double z_y = 64.0 * std::cos(kPi / 2 + 0.5);
    const double z_j = 0.0;
    const double lse = logsumexp_ref({z_y, z_j});
    const double p_y = std::exp(z_y - lse);
    const double factor = std::sin(kPi / 2 + 0.5) / std::sin(kPi / 2);
    CHECK(factor == doctest::Approx(std::cos(0.5)).epsilon(1e-15));
    CHECK(std::cos(0.5) == doctest::Approx(0.877583).epsilon(1e-5));
    CHECK(grad.d_target == doctest::Approx(64.0 * (p_y - 1.0) * factor).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one through the partials") {
    Xoshiro256 rng(17);
    for (const auto variant : {MarginVariant::nsoftmax, MarginVariant::cosface}) {
        for (int trial = 0; trial < 50; ++trial) {
            const double theta_y = 0.2 + 2.4 * rng.uniform();
            std::vector<double> others(6);
            for (double& t : others) t = 0.2 + 2.4 * rng.uniform();
            const auto spec = make_spec(variant, 64, 0.35);
            const auto grad = margin_grad_cos(theta_y, others, spec);
            // df/dcos = 1 here, so d_target = s (P_y - 1) and the sum of
            // all partials telescopes to zero.
            double sum = grad.d_target;
            for (double d : grad.d_others) sum += d;
            CHECK(std::abs(sum) <= 1e-12 * spec.s);
        }
    }
}

TEST_CASE("P_y - 1 form agrees with the explicit-ratio form") {
    Xoshiro256 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const double theta_y = 0.1 + 2.6 * rng.uniform();
        std::vector<double> others(4);
        for (double& t : others) t = 0.1 + 2.6 * rng.uniform();
        const auto spec = make_spec(MarginVariant::cosface, 64, 0.35);
        const auto grad = margin_grad_cos(theta_y, others, spec);

        std::vector<double> z(others.size() + 1);
        z[0] = spec.s * (std::cos(theta_y) - spec.m);
        for (std::size_t j = 0; j < others.size(); ++j) {
            z[j + 1] = spec.s * std::cos(others[j]);
        }
        const double lse = logsumexp_ref(z);
        const double p_y = std::exp(z[0] - lse);
        const double py_form = spec.s * (p_y - 1.0);
        CHECK(std::abs(grad.d_target - py_form) <=
              1e-12 * (spec.s + std::abs(grad.d_target) + std::abs(py_form)));
    }
}

TEST_CASE("equivalent_rescale reproduces the partials") {
    SUBCASE("symmetric case") {
        const std::vector<double> others{kPi / 2};
        const auto eq = equivalent_rescale(kPi / 2, others, make_spec(MarginVariant::nsoftmax));
        CHECK(eq.intra == doctest::Approx(32.0).epsilon(1e-13));
        CHECK(eq.inter[0] == doctest::Approx(32.0).epsilon(1e-13));
    }
    SUBCASE("random cosface angles") {
        Xoshiro256 rng(31);
        for (int trial = 0; trial < 50; ++trial) {
            const double theta_y = 0.2 + 2.0 * rng.uniform();
            std::vector<double> others(9);
            for (double& t : others) t = 0.2 + 2.0 * rng.uniform();
            const auto spec = make_spec(MarginVariant::cosface, 64, 0.35);
            const auto grad = margin_grad_cos(theta_y, others, spec);
            const auto eq = equivalent_rescale(theta_y, others, spec);
            CHECK(testutil::rel_err(eq.intra, -grad.d_target) <= 1e-12);
            for (std::size_t j = 0; j < others.size(); ++j) {
                CHECK(testutil::rel_err(eq.inter[j], grad.d_others[j]) <= 1e-12);
            }
        }
    }
    SUBCASE("saturated-target limit stays accurate in log space") {
        // theta_y -> 0, others at pi/2: intra -> s (C-1) / (e^s + C - 1).
        const std::vector<double> others(9, kPi / 2);
        const auto eq = equivalent_rescale(1e-9, others, make_spec(MarginVariant::nsoftmax, 64));
        const double want = 64.0 * 9.0 / (std::exp(64.0) + 9.0);
        CHECK(eq.intra < 1e-24);
        CHECK(eq.intra == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("equivalence report over random instances") {
    Xoshiro256 rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        const auto batch = random_batch(rng, 8, 16, 5);
        const auto centers = random_centers(rng, 16, 5);
        CHECK(equivalence_report(batch, centers, make_spec(MarginVariant::nsoftmax)) <= 1e-10);
        CHECK(equivalence_report(batch, centers, make_spec(MarginVariant::cosface, 64, 0.35)) <=
              1e-10);
        CHECK(equivalence_report(batch, centers, make_spec(MarginVariant::arcface, 64, 0.5)) <=
              1e-9);
        MarginSpec combined = make_spec(MarginVariant::combined, 64);
        combined.m1 = 0.9;
        combined.m2 = 0.4;
        combined.m3 = 0.15;
        CHECK(equivalence_report(batch, centers, combined) <= 1e-9);
    }
    CHECK_THROWS_AS(equivalence_report(random_batch(rng, 2, 4, 2), random_centers(rng, 4, 2),
                                       make_spec(MarginVariant::softmax)),
                    InvalidSpec);
}

TEST_CASE("full-loss gradients match finite differences for every variant") {
    Xoshiro256 rng(55);
    const auto batch = random_batch(rng, 6, 12, 4);
    const auto centers = random_centers(rng, 12, 4);
    for (const auto variant : {MarginVariant::softmax, MarginVariant::nsoftmax,
                               MarginVariant::cosface, MarginVariant::arcface}) {
        const auto spec = make_spec(variant, 64, variant == MarginVariant::arcface ? 0.5 : 0.35);
        const auto report = margin_backward(batch, centers, spec);
        const FDGrad fd = fd_grad(
            [&spec](const EmbeddingBatch& b, const CenterMatrix& w) {
                return margin_forward(b, w, spec);
            },
            batch, centers, FDConfig{1e-6, FDMode::full});
        CHECK(max_rel_deviation(report.grad_x, fd.grad_x) <= 1e-5);
        CHECK(max_rel_deviation(report.grad_w, fd.grad_w) <= 1e-5);
    }
}

TEST_CASE("margin gradients keep their sign structure") {
    Xoshiro256 rng(808);
    for (const auto variant :
         {MarginVariant::nsoftmax, MarginVariant::cosface, MarginVariant::arcface}) {
        for (int trial = 0; trial < 50; ++trial) {
            const double theta_y = 0.2 + 2.0 * rng.uniform();
            std::vector<double> others(5);
            for (double& t : others) t = 0.2 + 2.0 * rng.uniform();
            const auto spec = make_spec(variant, 64, variant == MarginVariant::arcface ? 0.3 : 0.35);
            const auto grad = margin_grad_cos(theta_y, others, spec);
            CHECK(-grad.d_target > 0.0);  // intra coefficient always positive
            for (double d : grad.d_others) CHECK(d >= 0.0);
        }
    }
}

TEST_CASE("cosface loss is nondecreasing in the margin") {
    Xoshiro256 rng(63);
    const auto batch = random_batch(rng, 5, 8, 3);
    const auto centers = random_centers(rng, 8, 3);
    double prev = -1.0;
    for (double m = 0.0; m <= 0.8; m += 0.05) {
        const double loss = margin_forward(batch, centers, make_spec(MarginVariant::cosface, 64, m));
        CHECK(loss >= prev);
        prev = loss;
    }
}

TEST_CASE("margin domain and singularity errors") {
    const std::vector<double> others{kPi / 2};
    // arcface: theta_y + m beyond pi.
    CHECK_THROWS_AS(margin_grad_cos(3.0, others, make_spec(MarginVariant::arcface, 64, 0.5)),
                    MarginDomain);
    // arcface at theta_y = 0: sin denominator vanishes.
    CHECK_THROWS_AS(margin_grad_cos(0.0, others, make_spec(MarginVariant::arcface, 64, 0.5)),
                    SingularAngle);
    // angles outside [0, pi].
    CHECK_THROWS_AS(margin_grad_cos(-0.1, others, make_spec(MarginVariant::nsoftmax)),
                    MarginDomain);
    // invalid margins.
    CHECK_THROWS_AS(margin_forward(symmetric_pair().batch, symmetric_pair().centers,
                                   make_spec(MarginVariant::cosface, 64, -0.1)),
                    InvalidSpec);
    // forward propagates the arcface domain error.
    EmbeddingBatch batch(1, 2);
    batch.row(0)[0] = 1.0;
    batch.labels[0] = 0;
    CenterMatrix centers(2, 2);
    centers.col(0)[0] = -1.0;  // theta_y = pi
    centers.col(1)[1] = 1.0;
    CHECK_THROWS_AS(margin_forward(batch, centers, make_spec(MarginVariant::arcface, 64, 0.5)),
                    MarginDomain);
}

TEST_CASE("margin_backward is deterministic and labels the report") {
    Xoshiro256 rng(99);
    const auto batch = random_batch(rng, 4, 8, 3);
    const auto centers = random_centers(rng, 8, 3);
    const auto spec = make_spec(MarginVariant::cosface, 64, 0.35);
    const auto a = margin_backward(batch, centers, spec);
    const auto b = margin_backward(batch, centers, spec);
    CHECK(a.grad_x == b.grad_x);
    CHECK(a.grad_w == b.grad_w);
    CHECK(a.labels == batch.labels);
    CHECK(a.loss == doctest::Approx(margin_forward(batch, centers, spec)).epsilon(1e-14));
}
