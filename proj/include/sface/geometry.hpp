#pragma once

#include <span>
#include <vector>

namespace sface {

/// Norms below this are treated as degenerate: operations that need a
/// direction throw DegenerateVector instead of returning NaN.
inline constexpr double kNormFloor = 1e-12;

/// Cosine plus the angle it determines. The cosine is always clamped
/// into [-1, 1] before arccos, so theta is finite even when rounding
/// pushes the raw ratio past +/-1.
struct AnglePair {
    double cosine;
    double theta;
};

/// Dot product. Vectors of 256+ elements are accumulated with an
/// error-free transform (twoprod/twosum) so the 1e-10 tangency and
/// magnitude tolerances hold at high dimension.
double dot(std::span<const double> a, std::span<const double> b);

double norm(std::span<const double> v);

/// Angle between the directions of u and v.
/// Throws DegenerateVector if either norm is below kNormFloor.
AnglePair cosine_angle(std::span<const double> u, std::span<const double> v);

/// d cos(theta(x, w)) / d x = (1/|x|) (w/|w| - cos(theta) x/|x|).
/// The result is tangent: <out, x> = 0, and |out| = sin(theta)/|x|.
void dcos_dx(std::span<const double> x, std::span<const double> w,
             std::span<double> out);

/// d cos(theta(x, w)) / d w; symmetric to dcos_dx with roles swapped.
void dcos_dw(std::span<const double> x, std::span<const double> w,
             std::span<double> out);

std::vector<double> dcos_dx(std::span<const double> x, std::span<const double> w);
std::vector<double> dcos_dw(std::span<const double> x, std::span<const double> w);

}  // namespace sface
