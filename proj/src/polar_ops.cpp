#include "clab/polar_ops.hpp"

#include <algorithm>
#include <cmath>

namespace clab {

Vector2 radial_unit(double theta) { return {std::cos(theta), std::sin(theta)}; }
Vector2 angular_unit(double theta) { return {-std::sin(theta), std::cos(theta)}; }

PolarTensor to_polar_frame(const Matrix2& a, double theta) {
  const Vector2 er = radial_unit(theta);
  const Vector2 et = angular_unit(theta);
  return {er.dot(a * er), er.dot(a * et), et.dot(a * et)};
}

double boundary_radial_derivative(const PolarGrid& grid, std::span<const double> values, int ring,
                                  int j) {
  const double h = grid.h_r();
  if (ring == 0) {
    return (-3.0 * values[grid.node(0, j)] + 4.0 * values[grid.node(1, j)] -
            values[grid.node(2, j)]) /
           (2.0 * h);
  }
  const int n = grid.n_r - 1;
  return (3.0 * values[grid.node(n, j)] - 4.0 * values[grid.node(n - 1, j)] +
          values[grid.node(n - 2, j)]) /
         (2.0 * h);
}

PolarGradient polar_gradient(const PolarGrid& grid, std::span<const double> values) {
  PolarGradient g;
  g.dr.resize(grid.n_space());
  g.dt.resize(grid.n_space());
  const double h = grid.h_r();
  const double k = grid.h_theta();
  for (int i = 0; i < grid.n_r; ++i) {
    const double r = grid.radius(i);
    for (int j = 0; j < grid.n_theta; ++j) {
      const int p = grid.node(i, j);
      if (i == 0 || i == grid.n_r - 1) {
        g.dr[p] = boundary_radial_derivative(grid, values, i, j);
      } else {
        g.dr[p] = (values[grid.node(i + 1, j)] - values[grid.node(i - 1, j)]) / (2.0 * h);
      }
      g.dt[p] = (values[grid.node(i, j + 1)] - values[grid.node(i, j - 1)]) / (2.0 * k * r);
    }
  }
  return g;
}

std::vector<Vector2> cartesian_gradient(const PolarGrid& grid, std::span<const double> values) {
  const PolarGradient g = polar_gradient(grid, values);
  std::vector<Vector2> out(grid.n_space());
  for (int p = 0; p < grid.n_space(); ++p) {
    const double theta = grid.angle(grid.column_of(p));
    out[p] = g.dr[p] * radial_unit(theta) + g.dt[p] * angular_unit(theta);
  }
  return out;
}

std::vector<double> div_a_grad_interior(const PolarGrid& grid, std::span<const double> values,
                                        const DiffusionField& a) {
  const int n = grid.n_space();
  std::vector<PolarTensor> pa(n);
  for (int p = 0; p < n; ++p) pa[p] = to_polar_frame(a[p], grid.angle(grid.column_of(p)));

  const double h = grid.h_r();
  const double k = grid.h_theta();
  auto y = [&](int i, int j) { return values[grid.node(i, j)]; };
  auto dtheta = [&](int i, int j) { return (y(i, j + 1) - y(i, j - 1)) / (2.0 * k); };
  auto dr = [&](int i, int j) { return (y(i + 1, j) - y(i - 1, j)) / (2.0 * h); };

  std::vector<double> out(n, 0.0);
  for (int i = 1; i < grid.n_r - 1; ++i) {
    const double r = grid.radius(i);
    const double rp = r + 0.5 * h;
    const double rm = r - 0.5 * h;
    for (int j = 0; j < grid.n_theta; ++j) {
      const auto& c = pa[grid.node(i, j)];
      const double arr_p = 0.5 * (c.rr + pa[grid.node(i + 1, j)].rr);
      const double arr_m = 0.5 * (c.rr + pa[grid.node(i - 1, j)].rr);
      const double att_p = 0.5 * (c.tt + pa[grid.node(i, j + 1)].tt);
      const double att_m = 0.5 * (c.tt + pa[grid.node(i, j - 1)].tt);
      const double t1 =
          (rp * arr_p * (y(i + 1, j) - y(i, j)) - rm * arr_m * (y(i, j) - y(i - 1, j))) /
          (r * h * h);
      const double t2 = (pa[grid.node(i + 1, j)].rt * dtheta(i + 1, j) -
                         pa[grid.node(i - 1, j)].rt * dtheta(i - 1, j)) /
                        (2.0 * h * r);
      const double t3 = (pa[grid.node(i, j + 1)].rt * dr(i, j + 1) -
                         pa[grid.node(i, j - 1)].rt * dr(i, j - 1)) /
                        (2.0 * k * r);
      const double t4 =
          (att_p * (y(i, j + 1) - y(i, j)) - att_m * (y(i, j) - y(i, j - 1))) / (r * r * k * k);
      out[grid.node(i, j)] = t1 + t2 + t3 + t4;
    }
  }
  return out;
}

double interpolate_polar(const PolarGrid& grid, std::span<const double> values, double r,
                         double theta) {
  const double h = grid.h_r();
  const double k = grid.h_theta();
  double x = (r - grid.r0) / h;
  x = std::clamp(x, 0.0, static_cast<double>(grid.n_r - 1));
  int i = std::min(static_cast<int>(std::floor(x)), grid.n_r - 2);
  const double fx = x - i;
  double u = theta / k;
  const double fl = std::floor(u);
  const double fy = u - fl;
  const int j = static_cast<int>(fl);
  const double v00 = values[grid.node(i, j)];
  const double v10 = values[grid.node(i + 1, j)];
  const double v01 = values[grid.node(i, j + 1)];
  const double v11 = values[grid.node(i + 1, j + 1)];
  return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 + fx * fy * v11;
}

}  // namespace clab
