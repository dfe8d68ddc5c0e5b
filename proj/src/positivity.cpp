#include "clab/positivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "clab/errors.hpp"

namespace clab {

namespace {

Witness make_witness(const PolarGrid& grid, int c, int l, int m, int p, double value) {
  Witness w;
  w.component = c;
  w.other = l;
  w.time_index = m;
  w.node = p;
  w.t = grid.time(m);
  w.r = grid.radius(grid.ring_of(p));
  w.theta = grid.angle(grid.column_of(p));
  w.value = value;
  return w;
}

int time_index_of(const PolarGrid& grid, double t) {
  const int m = static_cast<int>(std::lround(t / grid.dt()));
  if (m <= 0 || m >= grid.n_t || std::abs(m * grid.dt() - t) > 1e-9 * std::max(1.0, grid.T)) {
    throw Error(ErrorCode::InvalidArgument,
                "check time " + std::to_string(t) + " is not a lattice time in (0, T]");
  }
  return m;
}

double angle_gap(double a, double b) {
  return std::abs(std::remainder(a - b, 2.0 * std::numbers::pi));
}

}  // namespace

SignCheck check_sign_hypotheses(const SystemCoefficients& coeffs, const PolarGrid& grid) {
  SignCheck out;
  const CouplingField& c = coeffs.c;
  const int levels = c.time_dependent() ? c.n_t() : 1;
  for (int m = 0; m < levels; ++m) {
    for (int p = 0; p < c.n_space(); ++p) {
      for (int i = 0; i < c.n(); ++i) {
        for (int l = 0; l < c.n(); ++l) {
          if (i == l || c(i, l, m, p) <= 0.0) continue;
          out.pass = false;
          out.witness = make_witness(grid, i, l, m, p, c(i, l, m, p));
          std::ostringstream msg;
          msg << "c_" << i << l << " = " << c(i, l, m, p) << " > 0 at node " << p;
          out.message = msg.str();
          return out;
        }
      }
    }
  }
  out.message = "off-diagonal couplings are nonpositive";
  return out;
}

SignCheck check_sign_hypotheses(const NonlinearityModel& f, const PolarGrid& grid,
                                const ProbeOptions& options) {
  SignCheck out;
  const int n = f.n;
  const int nl = static_cast<int>(options.levels.size());
  if (nl == 0) throw Error(ErrorCode::InvalidArgument, "probe lattice has no levels");
  long combos = 1;
  for (int k = 0; k < n; ++k) combos *= nl;
  std::vector<double> y(n), fv(n), jac(static_cast<std::size_t>(n) * n);
  auto fail = [&](int i, int l, int m, int p, double v, const std::string& what) {
    out.pass = false;
    out.witness = make_witness(grid, i, l, m, p, v);
    std::ostringstream msg;
    msg << what << " at node " << p << ", t = " << grid.time(m) << ", y = (";
    for (int k = 0; k < n; ++k) msg << (k ? ", " : "") << y[k];
    msg << ")";
    out.message = msg.str();
  };
  for (int m = 0; m < grid.n_t; m += std::max(1, options.time_stride)) {
    const double t = grid.time(m);
    for (int p = 0; p < grid.n_space(); p += std::max(1, options.node_stride)) {
      const Vector2 x = node_position(grid, p);
      for (long code = 0; code < combos; ++code) {
        long rest = code;
        for (int k = 0; k < n; ++k) {
          y[k] = options.levels[rest % nl];
          rest /= nl;
        }
        f.f(t, x, y, fv);
        for (int i = 0; i < n; ++i) {
          if (y[i] != 0.0) continue;
          if (f.hypothesis_case == HypothesisCase::CaseA && std::abs(fv[i]) > 1e-12) {
            fail(i, -1, m, p, fv[i], "f_" + std::to_string(i) + " != 0 with y_i = 0");
            return out;
          }
          if (f.hypothesis_case == HypothesisCase::CaseB && fv[i] > 0.0) {
            fail(i, -1, m, p, fv[i], "f_" + std::to_string(i) + " > 0 with y_i = 0");
            return out;
          }
        }
        if (f.hypothesis_case == HypothesisCase::CaseB) {
          f.df(t, x, y, jac);
          for (int i = 0; i < n; ++i) {
            for (int l = 0; l < n; ++l) {
              const double d = jac[static_cast<std::size_t>(i) * n + l];
              if (i != l && d > 0.0) {
                fail(i, l, m, p, d,
                     "df_" + std::to_string(i) + "/dy_" + std::to_string(l) + " > 0");
                return out;
              }
            }
          }
        }
      }
    }
  }
  out.message = f.hypothesis_case == HypothesisCase::CaseA ? "CaseA hypotheses hold on the probe lattice"
                                                           : "CaseB hypotheses hold on the probe lattice";
  return out;
}

PositivityReport run_positivity_check(const StateField& y, const PolarGrid& grid,
                                      double rel_tolerance) {
  const SpaceTimeField& d = y.data;
  if (!d.matches(grid)) throw Error(ErrorCode::ShapeMismatch, "state does not match the grid");
  PositivityReport rep;
  rep.max_abs = d.max_abs();
  rep.tolerance = rel_tolerance * rep.max_abs;
  rep.min_value = std::numeric_limits<double>::infinity();
  int worst_c = 0, worst_m = 0, worst_p = 0;
  for (int c = 0; c < d.n_comp; ++c) {
    for (int m = 0; m < d.n_t; ++m) {
      for (int p = 0; p < d.n_space; ++p) {
        const double v = d.at(c, m, p);
        if (v < rep.min_value) {
          rep.min_value = v;
          worst_c = c;
          worst_m = m;
          worst_p = p;
        }
      }
    }
  }
  if (d.values.empty()) rep.min_value = 0.0;
  rep.pass = rep.min_value >= -rep.tolerance;
  if (!rep.pass) rep.first_violation = make_witness(grid, worst_c, -1, worst_m, worst_p, rep.min_value);
  return rep;
}

PositivityReport run_positivity_improving_check(const StateField& y, const PolarGrid& grid,
                                                std::span<const double> t_check, double rel_floor,
                                                const SpaceTimeField* g,
                                                std::vector<int> components) {
  PositivityReport rep = run_positivity_check(y, grid);
  const SpaceTimeField& d = y.data;
  if (g && (!g->matches(grid) || g->n_comp != d.n_comp)) {
    throw Error(ErrorCode::ShapeMismatch, "source does not match the state");
  }
  if (components.empty()) {
    for (int c = 0; c < d.n_comp; ++c) components.push_back(c);
  }
  rep.relevant_components = components;
  rep.floor = rel_floor * rep.max_abs;
  double total_weight = 0.0;
  for (double w : grid.quad_weights) total_weight += w;

  // y0 ≡ 0 is part of the "data vanish before t" explanation of a zero set.
  bool y0_zero = true;
  for (int c = 0; c < d.n_comp; ++c) {
    for (int p = 0; p < d.n_space; ++p) y0_zero = y0_zero && d.at(c, 0, p) == 0.0;
  }

  for (double t : t_check) {
    TimeCheck tc;
    tc.time_index = time_index_of(grid, t);
    tc.t = grid.time(tc.time_index);
    const int m = tc.time_index;
    bool strict = true;
    bool near = true;
    double zero_weight = 0.0;
    for (int c : components) {
      if (c < 0 || c >= d.n_comp) throw Error(ErrorCode::InvalidArgument, "component out of range");
      double mn = std::numeric_limits<double>::infinity();
      for (int p = 0; p < d.n_space; ++p) {
        const double v = d.at(c, m, p);
        mn = std::min(mn, v);
        if (std::abs(v) <= rep.floor) zero_weight += grid.quad_weights[p];
      }
      tc.min_per_component.push_back(mn);
      strict = strict && mn > rep.floor;
      near = near && mn > 0.1 * rep.floor;
    }
    tc.zero_set_fraction = zero_weight / (total_weight * static_cast<double>(components.size()));
    tc.improving_pass = strict;
    tc.near_violation = !strict && near && rep.floor > 0.0;
    tc.source_l1_before = std::numeric_limits<double>::quiet_NaN();
    if (tc.zero_set_fraction > kZeroSetMeasure && g) {
      double l1 = 0.0;
      for (int k = 0; k <= m; ++k) {
        const double wk = (k == 0 || k == m) ? 0.5 * grid.dt() : grid.dt();
        for (int c = 0; c < g->n_comp; ++c) {
          for (int p = 0; p < g->n_space; ++p) l1 += wk * grid.quad_weights[p] * std::abs(g->at(c, k, p));
        }
      }
      tc.source_l1_before = l1;
    }
    const bool data_vanish = tc.zero_set_fraction > kZeroSetMeasure && y0_zero &&
                             (g ? tc.source_l1_before == 0.0 : rep.max_abs == 0.0);
    tc.consistent = strict || tc.near_violation || data_vanish;
    if (tc.near_violation) ++rep.near_violations;
    rep.improving_pass = rep.improving_pass && (strict || tc.near_violation || data_vanish);
    rep.checks.push_back(std::move(tc));
  }
  return rep;
}

std::vector<int> relevant_components(const SystemCoefficients& coeffs, const SpaceTimeField& g,
                                     std::span<const double> y0) {
  const int n = coeffs.n;
  std::vector<char> seen(n, 0);
  std::vector<int> stack;
  for (int c = 0; c < n; ++c) {
    bool data = false;
    for (int m = 0; m < g.n_t && !data; ++m) {
      for (int p = 0; p < g.n_space && !data; ++p) data = g.at(c, m, p) > 0.0;
    }
    for (int p = 0; p < g.n_space && !data; ++p) data = y0[static_cast<std::size_t>(c) * g.n_space + p] > 0.0;
    if (data) {
      seen[c] = 1;
      stack.push_back(c);
    }
  }
  const CouplingField& cf = coeffs.c;
  const int levels = cf.time_dependent() ? cf.n_t() : 1;
  while (!stack.empty()) {
    const int l = stack.back();
    stack.pop_back();
    for (int i = 0; i < n; ++i) {
      if (seen[i]) continue;
      bool edge = false;
      for (int m = 0; m < levels && !edge; ++m) {
        for (int p = 0; p < cf.n_space() && !edge; ++p) edge = cf(i, l, m, p) < 0.0;
      }
      if (edge) {
        seen[i] = 1;
        stack.push_back(i);
      }
    }
  }
  std::vector<int> out;
  for (int c = 0; c < n; ++c) {
    if (seen[c]) out.push_back(c);
  }
  return out;
}

RescaledSolve solve_with_rescaling(const SystemCoefficients& coeffs, const SpaceTimeField& g,
                                   std::span<const double> y0, const PolarGrid& grid) {
  const CouplingField& cf = coeffs.c;
  const int levels = cf.time_dependent() ? cf.n_t() : 1;
  double norm = 0.0;
  bool growth = false;
  for (int m = 0; m < levels; ++m) {
    for (int p = 0; p < cf.n_space(); ++p) {
      for (int i = 0; i < cf.n(); ++i) {
        growth = growth || cf(i, i, m, p) < 0.0;
        for (int l = 0; l < cf.n(); ++l) norm = std::max(norm, std::abs(cf(i, l, m, p)));
      }
    }
  }
  RescaledSolve out;
  if (!growth) {
    out.y = solve_forward_linear(coeffs, g, y0, grid);
    return out;
  }
  out.gamma = 2.0 * norm + 1.0;
  const int n = coeffs.n;
  // Shift in place so a constant coupling stays constant (one factorization).
  CouplingField shifted = cf;
  for (int m = 0; m < levels; ++m) {
    for (int p = 0; p < cf.n_space(); ++p) {
      for (int i = 0; i < n; ++i) shifted.at(i, i, m, p) += out.gamma;
    }
  }
  SpaceTimeField gz = g;
  for (int c = 0; c < n; ++c) {
    for (int m = 0; m < grid.n_t; ++m) {
      const double e = std::exp(-out.gamma * grid.time(m));
      for (double& v : gz.slice(c, m)) v *= e;
    }
  }
  out.y = solve_forward_linear(with_coupling(coeffs, shifted), gz, y0, grid);
  for (int c = 0; c < n; ++c) {
    for (int m = 0; m < grid.n_t; ++m) {
      const double e = std::exp(out.gamma * grid.time(m));
      for (double& v : out.y.data.slice(c, m)) v *= e;
    }
  }
  return out;
}

SpaceTimeField box_source(const PolarGrid& grid, int n, int component, double r_c, double dr,
                          double theta_c, double dtheta, double height) {
  SpaceTimeField g(n, grid);
  for (int p = 0; p < grid.n_space(); ++p) {
    const double r = grid.radius(grid.ring_of(p));
    const double th = grid.angle(grid.column_of(p));
    if (std::abs(r - r_c) < dr && angle_gap(th, theta_c) < dtheta) {
      for (int m = 0; m < grid.n_t; ++m) g.at(component, m, p) = height;
    }
  }
  return g;
}

PositivityInstance random_positivity_instance(const PolarGrid& grid, const InstanceOptions& opt,
                                              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  const int n = opt.n;
  PositivityInstance inst;
  Eigen::MatrixXd c(n, n);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < n; ++l) {
      if (i == l) {
        c(i, l) = uni(-1.0, 1.0);
      } else {
        c(i, l) = u01(rng) < 0.3 ? 0.0 : -uni(0.0, 1.0);
      }
    }
  }
  inst.coeffs = make_uniform_system(grid, n, 1.0, c, uniform_boundary(grid, 1, 0, 1, 0));
  for (int i = 0; i < n; ++i) {
    const double a0 = uni(0.7, 1.5);
    const double amp = uni(0.0, 0.3);
    const double phase = uni(0.0, 2.0 * std::numbers::pi);
    for (int p = 0; p < grid.n_space(); ++p) {
      const double th = grid.angle(grid.column_of(p));
      const double rr = (grid.radius(grid.ring_of(p)) - grid.r0) / (grid.r1 - grid.r0);
      inst.coeffs.a[i][p] = a0 * (1.0 + amp * std::sin(th + phase) * rr) * Matrix2::Identity();
    }
    const double bm = uni(0.0, opt.max_drift);
    const double bang = uni(0.0, 2.0 * std::numbers::pi);
    inst.coeffs.b[i].assign(grid.n_space(), Vector2(bm * std::cos(bang), bm * std::sin(bang)));
    for (int side = 0; side < 2; ++side) {
      const bool dirichlet = opt.allow_dirichlet && u01(rng) < 0.2;
      const double eta = dirichlet ? 1.0 : (u01(rng) < 0.3 ? 0.0 : uni(0.0, 2.0));
      inst.coeffs.boundary[i].beta[side].assign(grid.n_theta, dirichlet ? 0.0 : 1.0);
      inst.coeffs.boundary[i].eta[side].assign(grid.n_theta, eta);
    }
  }

  auto bump = [&](std::span<double> out) {
    const int nb = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < nb; ++k) {
      const double rc = uni(grid.r0, grid.r1);
      const double tc = uni(0.0, 2.0 * std::numbers::pi);
      const Vector2 xc(rc * std::cos(tc), rc * std::sin(tc));
      const double w = uni(0.1, 0.4);
      const double h = uni(0.2, 1.0);
      for (int p = 0; p < grid.n_space(); ++p) {
        out[p] += h * std::exp(-(node_position(grid, p) - xc).squaredNorm() / (2 * w * w));
      }
    }
  };

  inst.g = SpaceTimeField(n, grid);
  inst.y0.assign(static_cast<std::size_t>(n) * grid.n_space(), 0.0);
  bool any = false;
  for (int i = 0; i < n; ++i) {
    if (!(opt.allow_zero_data && u01(rng) < 0.2)) {
      std::vector<double> prof(grid.n_space(), 0.0);
      bump(prof);
      const double freq = uni(0.0, 3.0);
      const double ph = uni(0.0, 2.0 * std::numbers::pi);
      for (int m = 0; m < grid.n_t; ++m) {
        const double tp = std::max(0.0, std::sin(freq * grid.time(m) + ph)) + uni(0.0, 0.2);
        for (int p = 0; p < grid.n_space(); ++p) inst.g.at(i, m, p) = tp * prof[p];
      }
      any = true;
    }
    if (u01(rng) < 0.5) {
      bump(std::span<double>(inst.y0).subspan(static_cast<std::size_t>(i) * grid.n_space(), grid.n_space()));
      any = true;
    }
  }
  if (!opt.allow_zero_data && !any) {
    for (int m = 0; m < grid.n_t; ++m) {
      for (int p = 0; p < grid.n_space(); ++p) inst.g.at(0, m, p) = 1.0;
    }
  }
  return inst;
}

}  // namespace clab
