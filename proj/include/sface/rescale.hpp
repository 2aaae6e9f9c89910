#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace sface {

enum class RescaleFamily { sigmoid, piecewise, constant };

std::string to_string(RescaleFamily family);
RescaleFamily rescale_family_from_string(const std::string& name);

/// Gradient re-scale configuration.
///   s — upper asymptote (initial gradient scale)
///   k — sigmoid slope (sigmoid family only)
///   a — intra-class cutoff angle, radians, in (0, pi/2)
///   b — inter-class cutoff angle, radians, in (0, pi/2]
struct RescaleSpec {
    RescaleFamily family = RescaleFamily::sigmoid;
    double s = 64.0;
    double k = 80.0;
    double a = 0.90;
    double b = 1.20;

    void validate() const;  // throws InvalidSpec
};

/// Intra-class re-scale coefficient at angle theta.
///   sigmoid:   s / (1 + exp(-k (theta - a)))
///   piecewise: s * sign(max(theta - a, 0))
///   constant:  s
/// Evaluated in the overflow-safe branch form; total on [0, pi].
double r_intra(double theta, const RescaleSpec& spec);

/// Inter-class re-scale coefficient at angle theta.
///   sigmoid:   s / (1 + exp(k (theta - b)))
///   piecewise: s * sign(max(b - theta, 0))
///   constant:  s
double r_inter(double theta, const RescaleSpec& spec);

/// One sample of the effective gradient-magnitude curves
/// v(theta) = r(theta) * sin(theta).
struct VCurvePoint {
    double theta;
    double v_intra;
    double v_inter;
};

/// num_points uniform samples of theta over [0, pi/2] inclusive.
std::vector<VCurvePoint> v_curves(const RescaleSpec& spec, std::size_t num_points);

/// Result of checking the three curve properties on a fixed
/// 10,001-point grid over [0, pi/2]:
///   (1) v_intra nonnegative and nondecreasing,
///   (2) v_inter nonnegative,
///   (3) suppression intervals: v_intra < 0.01 s near 0 and
///       v_inter < 0.01 s near pi/2, each at least kMinSuppressionWidth
///       wide.
struct CurvePropertyReport {
    bool intra_nonneg_nondecreasing = false;
    bool inter_nonneg = false;
    bool has_suppression_intervals = false;
    double intra_suppression_width = 0.0;  // measured prefix [0, w)
    double inter_suppression_width = 0.0;  // measured suffix (pi/2 - w, pi/2]

    bool all() const {
        return intra_nonneg_nondecreasing && inter_nonneg && has_suppression_intervals;
    }
};

inline constexpr std::size_t kCurveGridPoints = 10001;
inline constexpr double kSuppressionFraction = 0.01;  // of s
/// A suppression interval narrower than this does not count; rules out
/// the trivial dip v = s sin(theta) < 0.01 s at theta < ~0.01.
inline constexpr double kMinSuppressionWidth = 0.02;

CurvePropertyReport check_curve_properties(const RescaleSpec& spec);

/// CSV with header `theta,v_intra,v_inter`, 17-significant-digit values.
void write_v_curves_csv(std::ostream& out, const std::vector<VCurvePoint>& points);

}  // namespace sface
