#include "sface/rescale.hpp"

#include <cmath>
#include <ostream>

#include "sface/errors.hpp"
#include "sface/text.hpp"

namespace sface {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kHalfPi = kPi / 2.0;

// 1 / (1 + e^{-t}) without ever exponentiating a positive argument.
double stable_logistic(double t) {
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

}  // namespace

std::string to_string(RescaleFamily family) {
    switch (family) {
        case RescaleFamily::sigmoid: return "sigmoid";
        case RescaleFamily::piecewise: return "piecewise";
        case RescaleFamily::constant: return "constant";
    }
    return "unknown";
}

RescaleFamily rescale_family_from_string(const std::string& name) {
    if (name == "sigmoid") return RescaleFamily::sigmoid;
    if (name == "piecewise") return RescaleFamily::piecewise;
    if (name == "constant") return RescaleFamily::constant;
    throw InvalidSpec("unknown re-scale family: " + name);
}

void RescaleSpec::validate() const {
    if (!(s > 0.0)) throw InvalidSpec("RescaleSpec: s must be positive");
    if (family == RescaleFamily::sigmoid && !(k > 0.0)) {
        throw InvalidSpec("RescaleSpec: k must be positive for the sigmoid family");
    }
    if (!(a > 0.0 && a < kHalfPi)) {
        throw InvalidSpec("RescaleSpec: a must lie in (0, pi/2)");
    }
    if (!(b > 0.0 && b <= kHalfPi)) {
        throw InvalidSpec("RescaleSpec: b must lie in (0, pi/2]");
    }
}

double r_intra(double theta, const RescaleSpec& spec) {
    switch (spec.family) {
        case RescaleFamily::sigmoid:
            return spec.s * stable_logistic(spec.k * (theta - spec.a));
        case RescaleFamily::piecewise:
            return theta > spec.a ? spec.s : 0.0;
        case RescaleFamily::constant:
            return spec.s;
    }
    return spec.s;
}

double r_inter(double theta, const RescaleSpec& spec) {
    switch (spec.family) {
        case RescaleFamily::sigmoid:
            return spec.s * stable_logistic(-spec.k * (theta - spec.b));
        case RescaleFamily::piecewise:
            return theta < spec.b ? spec.s : 0.0;
        case RescaleFamily::constant:
            return spec.s;
    }
    return spec.s;
}

std::vector<VCurvePoint> v_curves(const RescaleSpec& spec, std::size_t num_points) {
    spec.validate();
    if (num_points < 2) throw InvalidSpec("v_curves: num_points must be >= 2");
    std::vector<VCurvePoint> points;
    points.reserve(num_points);
    for (std::size_t i = 0; i < num_points; ++i) {
        const double theta =
            kHalfPi * static_cast<double>(i) / static_cast<double>(num_points - 1);
        const double sine = std::sin(theta);
        points.push_back({theta, r_intra(theta, spec) * sine, r_inter(theta, spec) * sine});
    }
    return points;
}

CurvePropertyReport check_curve_properties(const RescaleSpec& spec) {
    const auto points = v_curves(spec, kCurveGridPoints);
    const double threshold = kSuppressionFraction * spec.s;

    CurvePropertyReport report;
    report.intra_nonneg_nondecreasing = true;
    report.inter_nonneg = true;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].v_intra < 0.0) report.intra_nonneg_nondecreasing = false;
        if (i > 0 && points[i].v_intra < points[i - 1].v_intra) {
            report.intra_nonneg_nondecreasing = false;
        }
        if (points[i].v_inter < 0.0) report.inter_nonneg = false;
    }

    // Suppression near 0: longest prefix with v_intra below threshold.
    std::size_t prefix = 0;
    while (prefix < points.size() && points[prefix].v_intra < threshold) ++prefix;
    report.intra_suppression_width = prefix == 0 ? 0.0 : points[prefix - 1].theta;

    // Suppression near pi/2: longest suffix with v_inter below threshold.
    std::size_t suffix = points.size();
    while (suffix > 0 && points[suffix - 1].v_inter < threshold) --suffix;
    report.inter_suppression_width =
        suffix == points.size() ? 0.0 : kHalfPi - points[suffix].theta;

    report.has_suppression_intervals =
        report.intra_suppression_width >= kMinSuppressionWidth &&
        report.inter_suppression_width >= kMinSuppressionWidth;
    return report;
}

void write_v_curves_csv(std::ostream& out, const std::vector<VCurvePoint>& points) {
    out << "theta,v_intra,v_inter\n";
    for (const auto& p : points) {
        out << g17(p.theta) << ',' << g17(p.v_intra) << ',' << g17(p.v_inter) << '\n';
    }
}

}  // namespace sface
