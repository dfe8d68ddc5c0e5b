#pragma once

#include <span>
#include <vector>

#include "clab/geometry.hpp"

namespace clab {

/// Components of a symmetric tensor in the local (e_r, e_θ) frame.
struct PolarTensor {
  double rr = 0.0;
  double rt = 0.0;
  double tt = 0.0;
};

PolarTensor to_polar_frame(const Matrix2& a, double theta);
Vector2 radial_unit(double theta);
Vector2 angular_unit(double theta);

/// Polar gradient components (∂_r y, r⁻¹∂_θ y) at every node. Central
/// differences in the interior, one-sided second-order stencils on the two
/// boundary circles.
struct PolarGradient {
  std::vector<double> dr;
  std::vector<double> dt;  // (1/r) ∂_θ
};

PolarGradient polar_gradient(const PolarGrid& grid, std::span<const double> values);
std::vector<Vector2> cartesian_gradient(const PolarGrid& grid, std::span<const double> values);

/// One-sided second-order radial derivative ∂_r y on boundary ring `ring`.
double boundary_radial_derivative(const PolarGrid& grid, std::span<const double> values, int ring,
                                  int j);

/// Discrete div(A∇y) at interior rings; boundary rings are left at 0.
std::vector<double> div_a_grad_interior(const PolarGrid& grid, std::span<const double> values,
                                        const DiffusionField& a);

/// Bilinear interpolation in (r, θ), periodic in θ and clamped in r.
double interpolate_polar(const PolarGrid& grid, std::span<const double> values, double r,
                         double theta);

}  // namespace clab
