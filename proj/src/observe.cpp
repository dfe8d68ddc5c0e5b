#include "clab/observe.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "clab/errors.hpp"
#include "clab/logspace.hpp"
#include "clab/polar_ops.hpp"

namespace clab {

namespace {

// Index into BoundaryCondition arrays for the circle with radial index `ring`.
int side_of(const PolarGrid& grid, int ring) { return ring == 0 ? 0 : (ring == grid.n_r - 1 ? 1 : -1); }

// Outward normal orientation: −e_r on the inner circle, +e_r on the outer.
double normal_sign(int side) { return side == 0 ? -1.0 : 1.0; }

void check_spec_shape(const ObservationSpec& spec, int n, const PolarGrid& grid) {
  if (static_cast<int>(spec.gamma.size()) != n || static_cast<int>(spec.delta.size()) != n) {
    throw Error(ErrorCode::ShapeMismatch, "observation spec has wrong component count");
  }
  for (int c = 0; c < n; ++c) {
    if (static_cast<int>(spec.gamma[c].size()) != grid.n_theta ||
        static_cast<int>(spec.delta[c].size()) != grid.n_theta) {
      throw Error(ErrorCode::ShapeMismatch, "observation spec is not defined on every Γ₁ node");
    }
  }
}

}  // namespace

BoundarySeries::BoundarySeries(int comps, const PolarGrid& grid, int ring_index, double fill)
    : n_comp(comps), n_t(grid.n_t), n_theta(grid.n_theta), ring(ring_index),
      values(static_cast<std::size_t>(comps) * grid.n_t * grid.n_theta, fill) {}

ObservationSpec uniform_observation(const PolarGrid& grid, int n, double gamma, double delta,
                                    double epsilon) {
  ObservationSpec s;
  s.gamma.assign(n, std::vector<double>(grid.n_theta, gamma));
  s.delta.assign(n, std::vector<double>(grid.n_theta, delta));
  s.epsilon = epsilon;
  return s;
}

double check_compatibility(const ObservationSpec& spec, const SystemCoefficients& coeffs,
                           const PolarGrid& grid) {
  check_spec_shape(spec, coeffs.n, grid);
  const int side = side_of(grid, grid.gamma1_ring());
  double worst = std::numeric_limits<double>::infinity();
  for (int c = 0; c < coeffs.n; ++c) {
    const auto& bc = coeffs.boundary[c];
    for (int j = 0; j < grid.n_theta; ++j) {
      const double det = spec.gamma[c][j] * bc.eta[side][j] - bc.beta[side][j] * spec.delta[c][j];
      if (!(det >= spec.epsilon)) {
        std::ostringstream msg;
        msg << "γη − βδ = " << det << " < ε = " << spec.epsilon << " at component " << c
            << ", Γ₁ node " << j;
        throw Error(ErrorCode::CompatibilityViolated, msg.str());
      }
      worst = std::min(worst, det);
    }
  }
  return worst;
}

BoundaryTrace extract_trace_and_conormal(const StateField& y, const SystemCoefficients& coeffs,
                                         const PolarGrid& grid, Boundary which) {
  const auto& d = y.data;
  if (!d.matches(grid) || d.n_comp != coeffs.n) {
    throw Error(ErrorCode::ShapeMismatch, "state does not match grid/coefficients");
  }
  const int ring = which == Boundary::Gamma1 ? grid.gamma1_ring() : grid.gamma0_ring();
  const double sign = normal_sign(side_of(grid, ring));
  const double r = grid.radius(ring);
  const double k = grid.h_theta();
  BoundaryTrace bt{BoundarySeries(d.n_comp, grid, ring), BoundarySeries(d.n_comp, grid, ring)};
  for (int c = 0; c < d.n_comp; ++c) {
    for (int m = 0; m < d.n_t; ++m) {
      const auto sl = d.slice(c, m);
      for (int j = 0; j < grid.n_theta; ++j) {
        const int p = grid.node(ring, j);
        const PolarTensor a = to_polar_frame(coeffs.a[c][p], grid.angle(j));
        const double yr = boundary_radial_derivative(grid, sl, ring, j);
        const double yt = (sl[grid.node(ring, j + 1)] - sl[grid.node(ring, j - 1)]) / (2.0 * k * r);
        bt.trace.at(c, m, j) = sl[p];
        bt.conormal.at(c, m, j) = sign * (a.rr * yr + a.rt * yt);
      }
    }
  }
  return bt;
}

double boundary_residual(const BoundaryTrace& bt, const SystemCoefficients& coeffs,
                         const PolarGrid& grid) {
  const int side = side_of(grid, bt.trace.ring);
  double worst = 0.0;
  for (int c = 0; c < bt.trace.n_comp; ++c) {
    const auto& bc = coeffs.boundary[c];
    for (int m = 0; m < bt.trace.n_t; ++m) {
      for (int j = 0; j < bt.trace.n_theta; ++j) {
        const double res = bc.beta[side][j] * bt.conormal.at(c, m, j) +
                           bc.eta[side][j] * bt.trace.at(c, m, j);
        worst = std::max(worst, std::abs(res));
      }
    }
  }
  return worst;
}

BoundarySeries apply_observation(const ObservationSpec& spec, const BoundaryTrace& bt) {
  BoundarySeries z = bt.trace;
  for (int c = 0; c < z.n_comp; ++c) {
    for (int m = 0; m < z.n_t; ++m) {
      for (int j = 0; j < z.n_theta; ++j) {
        z.at(c, m, j) = spec.gamma[c][j] * bt.conormal.at(c, m, j) +
                        spec.delta[c][j] * bt.trace.at(c, m, j);
      }
    }
  }
  return z;
}

TraceRecovery recover_trace_from_observation(const BoundarySeries& zeta,
                                             const ObservationSpec& spec,
                                             const SystemCoefficients& coeffs,
                                             const PolarGrid& grid) {
  check_spec_shape(spec, coeffs.n, grid);
  if (zeta.n_comp != coeffs.n || zeta.n_t != grid.n_t || zeta.n_theta != grid.n_theta) {
    throw Error(ErrorCode::ShapeMismatch, "observation series does not match grid");
  }
  const int side = side_of(grid, zeta.ring);
  TraceRecovery out{{zeta, zeta}, std::vector<double>(zeta.n_comp * zeta.n_theta), 0.0};
  for (int c = 0; c < zeta.n_comp; ++c) {
    const auto& bc = coeffs.boundary[c];
    for (int j = 0; j < zeta.n_theta; ++j) {
      const double beta = bc.beta[side][j];
      const double eta = bc.eta[side][j];
      const double det = spec.gamma[c][j] * eta - beta * spec.delta[c][j];
      if (!(det >= spec.epsilon)) {
        throw Error(ErrorCode::SingularRecovery,
                    "determinant " + std::to_string(det) + " below ε at component " +
                        std::to_string(c) + ", node " + std::to_string(j));
      }
      const double kn = (std::abs(beta) + std::abs(eta)) / det;
      out.k_node[c * zeta.n_theta + j] = kn;
      out.k_max = std::max(out.k_max, kn);
      for (int m = 0; m < zeta.n_t; ++m) {
        const double z = zeta.at(c, m, j);
        out.values.trace.at(c, m, j) = -beta * z / det;
        out.values.conormal.at(c, m, j) = eta * z / det;
      }
    }
  }
  return out;
}

double norm_L2_Sigma(const PolarGrid& grid, const BoundarySeries& series) {
  const std::vector<double> tw = grid.time_weights();
  const double arc = grid.arc_weight(series.ring);
  double sum = 0.0;
  for (int c = 0; c < series.n_comp; ++c) {
    for (int m = 0; m < series.n_t; ++m) {
      for (int j = 0; j < series.n_theta; ++j) {
        const double v = series.at(c, m, j);
        sum += tw[m] * arc * v * v;
      }
    }
  }
  return std::sqrt(sum);
}

double log_weighted_Sigma(const PolarGrid& grid, const BoundarySeries& series,
                          const WeightFields& weights, double power) {
  if (weights.n_t != series.n_t || weights.n_space != grid.n_space()) {
    throw Error(ErrorCode::WeightGridMismatch, "weights were built on a different grid");
  }
  const std::vector<double> tw = grid.time_weights();
  const double arc = grid.arc_weight(series.ring);
  const double sl = std::log(weights.params.s * weights.params.lambda);
  LogSum acc;
  for (int c = 0; c < series.n_comp; ++c) {
    for (int m = 1; m + 1 < series.n_t; ++m) {
      for (int j = 0; j < series.n_theta; ++j) {
        const double v = series.at(c, m, j);
        if (v == 0.0) continue;
        const int p = grid.node(series.ring, j);
        acc.add(std::log(tw[m] * arc * v * v) + power * sl + weights.log_weighted(m, p, power));
      }
    }
  }
  return acc.value();
}

double norm_weighted_Sigma(const PolarGrid& grid, const BoundarySeries& series,
                           const WeightFields& weights, double power) {
  return std::exp(0.5 * log_weighted_Sigma(grid, series, weights, power));
}

void write_observation_csv(const std::filesystem::path& path, const PolarGrid& grid,
                           const BoundarySeries& series) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "t,theta,component,zeta\n" << std::setprecision(17);
  for (int c = 0; c < series.n_comp; ++c) {
    for (int m = 0; m < series.n_t; ++m) {
      for (int j = 0; j < series.n_theta; ++j) {
        out << grid.time(m) << ',' << grid.angle(j) << ',' << c << ',' << series.at(c, m, j)
            << '\n';
      }
    }
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

BoundarySeries read_observation_csv(const std::filesystem::path& path, const PolarGrid& grid) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  struct Row {
    int m, j, c;
    double v;
  };
  std::vector<Row> rows;
  int n_comp = 0;
  const double dt = grid.dt();
  const double k = grid.h_theta();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double t, th, v;
    int c;
    char sep;
    if (!(ls >> t >> sep >> th >> sep >> c >> sep >> v) || c < 0) {
      throw Error(ErrorCode::ConfigParse, "malformed observation row: " + line);
    }
    const int m = static_cast<int>(std::lround(t / dt));
    const int j = static_cast<int>(std::lround(th / k));
    if (m < 0 || m >= grid.n_t || j < 0 || j >= grid.n_theta ||
        std::abs(m * dt - t) > 1e-9 * std::max(1.0, grid.T) ||
        std::abs(j * k - th) > 1e-9) {
      throw Error(ErrorCode::WeightGridMismatch, "observation row off the grid: " + line);
    }
    rows.push_back({m, j, c, v});
    n_comp = std::max(n_comp, c + 1);
  }
  BoundarySeries s(n_comp, grid, grid.gamma1_ring());
  for (const Row& r : rows) s.at(r.c, r.m, r.j) = r.v;
  return s;
}

}  // namespace clab
