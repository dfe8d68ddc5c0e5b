#include "clab/convergence.hpp"

#include <cmath>
#include <limits>

#include "clab/errors.hpp"

namespace clab {

double manufactured_value(double r0, double r1, double t, double r) {
  const double u = r - r0;
  const double v = r1 - r;
  return t * u * u * v * v;
}

double manufactured_source(double r0, double r1, double t, double r) {
  const double u = r - r0;
  const double v = r1 - r;
  const double p = u * u * v * v;
  const double dp = 2.0 * u * v * v - 2.0 * u * u * v;
  const double ddp = 2.0 * v * v - 8.0 * u * v + 2.0 * u * u;
  return p - t * (ddp + dp / r);
}

SpaceTimeField manufactured_field(const PolarGrid& grid, bool source) {
  SpaceTimeField f(1, grid);
  for (int m = 0; m < grid.n_t; ++m) {
    const double t = grid.time(m);
    for (int p = 0; p < grid.n_space(); ++p) {
      const double r = grid.radius(grid.ring_of(p));
      f.at(0, m, p) = source ? manufactured_source(grid.r0, grid.r1, t, r)
                             : manufactured_value(grid.r0, grid.r1, t, r);
    }
  }
  return f;
}

namespace {

StateField solve_manufactured(const PolarGrid& grid, TimeScheme scheme) {
  const SystemCoefficients coeffs = make_uniform_system(
      grid, 1, 1.0, Eigen::MatrixXd::Zero(1, 1), uniform_boundary(grid, 1.0, 1.0, 1.0, 1.0));
  return solve_forward_linear(coeffs, manufactured_field(grid, true), zero_initial(grid, 1), grid,
                              scheme);
}

void fill_slopes(std::vector<ConvergenceRow>& rows) {
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].slope = k == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : std::log2(rows[k - 1].error / rows[k].error);
  }
}

}  // namespace

ConvergenceTable run_convergence_study(const ConvergenceOptions& opt, TimeScheme scheme) {
  if (opt.levels < 2 || opt.space_n_r < 3 || opt.time_n_t < 2 || opt.time_n_r < 3 ||
      opt.space_n_t < 2 || opt.n_theta < 4) {
    throw Error(ErrorCode::InvalidArgument, "convergence study needs at least two levels and a nondegenerate grid");
  }
  ConvergenceTable table;
  table.scheme = scheme;
  for (int k = 0; k < opt.levels; ++k) {
    const int nr = (opt.space_n_r - 1) * (1 << k) + 1;
    const PolarGrid grid = build_polar_grid(opt.r0, opt.r1, nr, opt.n_theta, opt.T, opt.space_n_t);
    SpaceTimeField err = solve_manufactured(grid, scheme).data;
    const SpaceTimeField exact = manufactured_field(grid, false);
    for (std::size_t q = 0; q < err.values.size(); ++q) err.values[q] -= exact.values[q];
    table.space.push_back({nr, opt.space_n_t, norm_L2_Q(grid, err), 0.0});
  }
  fill_slopes(table.space);

  auto grid_for = [&](int k) {
    return build_polar_grid(opt.r0, opt.r1, opt.time_n_r, opt.n_theta, opt.T,
                            (opt.time_n_t - 1) * (1 << k) + 1);
  };
  PolarGrid coarse = grid_for(0);
  StateField y_coarse = solve_manufactured(coarse, scheme);
  for (int k = 0; k < opt.levels; ++k) {
    const PolarGrid fine = grid_for(k + 1);
    StateField y_fine = solve_manufactured(fine, scheme);
    SpaceTimeField diff = y_coarse.data;
    for (int m = 0; m < coarse.n_t; ++m) {
      for (int p = 0; p < coarse.n_space(); ++p) diff.at(0, m, p) -= y_fine.data.at(0, 2 * m, p);
    }
    table.time.push_back({opt.time_n_r, coarse.n_t, norm_L2_Q(coarse, diff), 0.0});
    coarse = fine;
    y_coarse = std::move(y_fine);
  }
  fill_slopes(table.time);
  return table;
}

}  // namespace clab
