#include "sface/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "sface/errors.hpp"

namespace sface {

namespace {

// Knuth two-sum: s = fl(a + b), err = exact residual.
inline void two_sum(double a, double b, double& s, double& err) {
    s = a + b;
    const double z = s - a;
    err = (a - (s - z)) + (b - z);
}

// Ogita-Rump-Oishi Dot2: twoprod via fma, residuals accumulated apart.
double dot_compensated(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double p = a[i] * b[i];
        const double p_err = std::fma(a[i], b[i], -p);
        double s, s_err;
        two_sum(sum, p, s, s_err);
        sum = s;
        comp += s_err + p_err;
    }
    return sum + comp;
}

constexpr std::size_t kCompensatedThreshold = 256;

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("dot: vector lengths differ");
    }
    if (a.size() >= kCompensatedThreshold) {
        return dot_compensated(a, b);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

AnglePair cosine_angle(std::span<const double> u, std::span<const double> v) {
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu < kNormFloor || nv < kNormFloor) {
        throw DegenerateVector("cosine_angle: vector norm below 1e-12");
    }
    const double raw = dot(u, v) / (nu * nv);
    const double cosine = std::clamp(raw, -1.0, 1.0);
    return {cosine, std::acos(cosine)};
}

void dcos_dx(std::span<const double> x, std::span<const double> w,
             std::span<double> out) {
    if (x.size() != w.size() || out.size() != x.size()) {
        throw DimensionMismatch("dcos_dx: dimension mismatch");
    }
    const double nx = norm(x);
    const double nw = norm(w);
    if (nx < kNormFloor || nw < kNormFloor) {
        throw DegenerateVector("dcos_dx: vector norm below 1e-12");
    }
    const double cosine = std::clamp(dot(x, w) / (nx * nw), -1.0, 1.0);
    const double inv_nx = 1.0 / nx;
    const double inv_nw = 1.0 / nw;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = inv_nx * (w[i] * inv_nw - cosine * x[i] * inv_nx);
    }
}

void dcos_dw(std::span<const double> x, std::span<const double> w,
             std::span<double> out) {
    dcos_dx(w, x, out);  // the identity is symmetric in (x, w)
}

std::vector<double> dcos_dx(std::span<const double> x, std::span<const double> w) {
    std::vector<double> out(x.size());
    dcos_dx(x, w, std::span<double>(out));
    return out;
}

std::vector<double> dcos_dw(std::span<const double> x, std::span<const double> w) {
    std::vector<double> out(w.size());
    dcos_dw(x, w, std::span<double>(out));
    return out;
}

}  // namespace sface
