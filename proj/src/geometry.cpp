#include "clab/geometry.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/numeric/odeint.hpp>

#include "clab/errors.hpp"
#include "clab/polar_ops.hpp"

namespace clab {

namespace {

// log(DBL_MAX) minus a little headroom.
constexpr double kMaxExponent = 709.0;

}  // namespace

double PolarGrid::h_theta() const { return 2.0 * std::numbers::pi / n_theta; }

std::vector<double> PolarGrid::time_weights() const {
  std::vector<double> w(n_t, dt());
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

double PolarGrid::area() const { return std::numbers::pi * (r1 * r1 - r0 * r0); }

PolarGrid build_polar_grid(double r0, double r1, int n_r, int n_theta, double T, int n_t,
                           Orientation orientation) {
  if (!(r0 > 0.0)) throw Error(ErrorCode::NonPositiveRadius, "inner radius must be positive");
  if (!(r1 > r0)) throw Error(ErrorCode::DegenerateResolution, "outer radius must exceed inner");
  if (n_r < 3 || n_theta < 4 || n_t < 3 || !(T > 0.0)) {
    throw Error(ErrorCode::DegenerateResolution,
                "need n_r >= 3, n_theta >= 4, n_t >= 3 and T > 0");
  }
  PolarGrid g;
  g.r0 = r0;
  g.r1 = r1;
  g.n_r = n_r;
  g.n_theta = n_theta;
  g.T = T;
  g.n_t = n_t;
  g.orientation = orientation;
  g.quad_weights.resize(g.n_space());
  const double h = g.h_r();
  const double k = g.h_theta();
  for (int i = 0; i < n_r; ++i) {
    const double end = (i == 0 || i == n_r - 1) ? 0.5 : 1.0;
    for (int j = 0; j < n_theta; ++j) g.quad_weights[g.node(i, j)] = end * g.radius(i) * h * k;
  }
  for (int j = 0; j < n_theta; ++j) {
    g.gamma0_nodes.push_back(g.node(g.gamma0_ring(), j));
    g.gamma1_nodes.push_back(g.node(g.gamma1_ring(), j));
  }
  return g;
}

Psi0Field psi0_from_values(const PolarGrid& grid, std::vector<double> values) {
  Psi0Field f;
  f.gradient = cartesian_gradient(grid, values);
  f.k0 = std::numeric_limits<double>::infinity();
  f.k1 = -std::numeric_limits<double>::infinity();
  for (int p : grid.gamma0_nodes) f.k0 = std::min(f.k0, values[p]);
  for (int p : grid.gamma1_nodes) f.k1 = std::max(f.k1, values[p]);
  f.grad_min = std::numeric_limits<double>::infinity();
  for (const auto& g : f.gradient) f.grad_min = std::min(f.grad_min, g.norm());
  f.values = std::move(values);
  return f;
}

Psi0Field construct_psi0_radial(const PolarGrid& grid) {
  const double sign = grid.orientation == Orientation::InnerIsGamma0 ? 1.0 : -1.0;
  Psi0Field f;
  f.values.resize(grid.n_space());
  f.gradient.resize(grid.n_space());
  for (int p = 0; p < grid.n_space(); ++p) {
    f.values[p] = sign * grid.radius(grid.ring_of(p));
    f.gradient[p] = sign * radial_unit(grid.angle(grid.column_of(p)));
  }
  f.k0 = sign * grid.gamma0_radius();
  f.k1 = sign * grid.gamma1_radius();
  f.grad_min = 1.0;
  return f;
}

FlowResult construct_psi0_flow(const PolarGrid& grid, const Psi0Field& seed,
                               const FlowOptions& options) {
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 2>;  // (r, θ)

  const PolarGradient grad = polar_gradient(grid, seed.values);
  double grad_min = std::numeric_limits<double>::infinity();
  for (int p = 0; p < grid.n_space(); ++p) {
    grad_min = std::min(grad_min, std::hypot(grad.dr[p], grad.dt[p]));
  }
  if (!(grad_min > options.gradient_tolerance)) {
    throw Error(ErrorCode::VanishingGradient,
                "seed gradient falls to " + std::to_string(grad_min));
  }

  double base = 0.0;
  for (int p : grid.gamma0_nodes) base += seed.values[p];
  base /= static_cast<double>(grid.gamma0_nodes.size());
  const auto [smin, smax] = std::minmax_element(seed.values.begin(), seed.values.end());
  const double s_cap = 2.0 * (*smax - *smin) / grad_min + 1.0;

  const double target = grid.gamma0_radius();
  const double far = grid.gamma1_radius();
  const double slack = 1e-9 * (grid.r1 - grid.r0);

  // Reverse flow −∇ψ/|∇ψ|² in polar coordinates; ψ decreases at unit rate.
  auto rhs = [&](const State& x, State& dxds, double) {
    const double gr = interpolate_polar(grid, grad.dr, x[0], x[1]);
    const double gt = interpolate_polar(grid, grad.dt, x[0], x[1]);
    const double n2 = gr * gr + gt * gt;
    dxds[0] = -gr / n2;
    dxds[1] = -gt / (n2 * x[0]);
  };

  FlowResult result;
  std::vector<double> values(grid.n_space());
  for (int i = 0; i < grid.n_r; ++i) {
    for (int j = 0; j < grid.n_theta; ++j) {
      const int p = grid.node(i, j);
      if (i == grid.gamma0_ring()) {
        values[p] = base;
        continue;
      }
      auto stepper = odeint::make_dense_output(options.abs_tol, options.rel_tol,
                                               odeint::runge_kutta_dopri5<State>());
      const double r_start = grid.radius(i);
      stepper.initialize(State{r_start, grid.angle(j)}, 0.0, 0.05 * grid.h_r());
      const double start_side = r_start - target;
      bool hit = false;
      while (!hit) {
        const auto [s_old, s_new] = stepper.do_step(rhs);
        const State& x = stepper.current_state();
        if ((x[0] - target) * start_side <= 0.0) {
          double lo = s_old;
          double hi = s_new;
          State probe{};
          for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            stepper.calc_state(mid, probe);
            if ((probe[0] - target) * start_side <= 0.0) {
              hi = mid;
            } else {
              lo = mid;
            }
          }
          values[p] = base + 0.5 * (lo + hi);
          hit = true;
        } else if ((x[0] - far) * (r_start - far) < -slack || s_new > s_cap ||
                   !std::isfinite(x[0])) {
          throw Error(ErrorCode::FlowEscape, "trajectory from ring " + std::to_string(i) +
                                                 ", column " + std::to_string(j) +
                                                 " left the annulus");
        }
      }
    }
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double mean = 0.0;
  for (int p : grid.gamma1_nodes) {
    lo = std::min(lo, values[p]);
    hi = std::max(hi, values[p]);
    mean += values[p];
  }
  mean /= static_cast<double>(grid.gamma1_nodes.size());
  for (int p : grid.gamma1_nodes) values[p] = mean;
  result.gamma1_trace_spread = hi - lo;
  result.field = psi0_from_values(grid, std::move(values));
  return result;
}

DiffusionField constant_diffusion(const PolarGrid& grid, const Matrix2& a) {
  return DiffusionField(grid.n_space(), a);
}

std::vector<double> default_mu_grid() { return {0.5, 1.0, 2.0, 4.0, 8.0}; }

SubharmonicResult exponentiate_for_subharmonicity(const PolarGrid& grid, const Psi0Field& psi0,
                                                  const DiffusionField& a,
                                                  std::span<const double> mu_grid) {
  if (static_cast<int>(a.size()) != grid.n_space()) {
    throw Error(ErrorCode::ShapeMismatch, "diffusion field size differs from grid");
  }
  for (const auto& m : a) {
    const double scale = m.cwiseAbs().maxCoeff();
    if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 * std::max(scale, 1.0)) {
      throw Error(ErrorCode::NonSymmetricDiffusion, "diffusion matrix is not symmetric");
    }
    if (!(m(0, 0) > 0.0 && m.determinant() > 0.0)) {
      throw Error(ErrorCode::EllipticityViolated, "diffusion matrix is not positive definite");
    }
  }
  const double span = psi0.k1 - psi0.k0;
  std::vector<double> e(grid.n_space());
  for (double mu : mu_grid) {
    for (int p = 0; p < grid.n_space(); ++p) e[p] = std::exp(mu * (psi0.values[p] - psi0.k0));
    const std::vector<double> lap = div_a_grad_interior(grid, e, a);
    bool admissible = true;
    for (int i = 1; i < grid.n_r - 1 && admissible; ++i) {
      for (int j = 0; j < grid.n_theta; ++j) {
        if (!(lap[grid.node(i, j)] > 0.0)) {
          admissible = false;
          break;
        }
      }
    }
    if (!admissible) continue;
    const double top = std::exp(mu * span) - 1.0;
    std::vector<double> mapped(grid.n_space());
    for (int p = 0; p < grid.n_space(); ++p) mapped[p] = psi0.k0 + span * (e[p] - 1.0) / top;
    for (int p : grid.gamma0_nodes) mapped[p] = psi0.k0;
    for (int p : grid.gamma1_nodes) mapped[p] = psi0.k1;
    return {psi0_from_values(grid, std::move(mapped)), mu};
  }
  throw Error(ErrorCode::NoAdmissibleMu, "no exponent in the search grid makes Δ_A ψ positive");
}

WeightParams choose_shift_K(const Psi0Field& psi0, double margin, bool tilde_ratio) {
  if (!(psi0.k0 < psi0.k1)) throw Error(ErrorCode::InvalidArgument, "need k0 < k1");
  double K = std::max(0.0, 7.0 * psi0.k1 - 8.0 * psi0.k0);
  if (tilde_ratio) K = std::max(K, 8.0 * psi0.k1 - 9.0 * psi0.k0);
  WeightParams w;
  w.K = K + margin;
  w.psi_sup_norm = psi0.k1 + w.K;
  return w;
}

double WeightFields::phi(int m, int p) const { return std::exp(log_phi[index(m, p)]); }
double WeightFields::phi_tilde(int m, int p) const {
  return std::exp(log_phi_tilde[index(m, p)]);
}

double WeightFields::log_weighted(int m, int p, double power, bool tilde) const {
  if (endpoint(m)) return -std::numeric_limits<double>::infinity();
  const std::size_t q = index(m, p);
  const double lp = tilde ? log_phi_tilde[q] : log_phi[q];
  const double a = tilde ? alpha_tilde[q] : alpha[q];
  return power * lp + 2.0 * params.s * a;
}

double WeightFields::weighted(int m, int p, double power, bool tilde) const {
  return std::exp(log_weighted(m, p, power, tilde));
}

WeightFields eval_weights(const PolarGrid& grid, const Psi0Field& psi0, const WeightParams& params) {
  if (!(params.lambda > 0.0 && params.s > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "lambda and s must be positive");
  }
  const double top = 1.5 * params.lambda * params.psi_sup_norm;
  if (top > kMaxExponent) {
    throw Error(ErrorCode::OverflowGuard,
                "exp(1.5 lambda |psi|) overflows; lower lambda (exponent " + std::to_string(top) +
                    ")");
  }
  WeightFields w;
  w.params = params;
  w.T = grid.T;
  w.n_t = grid.n_t;
  w.n_space = grid.n_space();
  w.times.resize(grid.n_t);
  for (int m = 0; m < grid.n_t; ++m) w.times[m] = grid.time(m);
  w.psi.resize(w.n_space);
  w.psi_tilde.resize(w.n_space);
  // Reflection about the Γ₀ level K + k0, so that ψ = ψ̃ on Γ₀.
  w.reflection_level = params.K + psi0.k0;
  for (int p = 0; p < w.n_space; ++p) {
    w.psi[p] = psi0.values[p] + params.K;
    w.psi_tilde[p] = 2.0 * w.reflection_level - w.psi[p];
  }
  const double cap = std::exp(top);
  const std::size_t total = static_cast<std::size_t>(w.n_t) * w.n_space;
  w.log_phi.resize(total);
  w.alpha.resize(total);
  w.log_phi_tilde.resize(total);
  w.alpha_tilde.resize(total);
  const double inf = std::numeric_limits<double>::infinity();
  for (int m = 0; m < w.n_t; ++m) {
    const double t = w.times[m];
    const double tau = t * (grid.T - t);
    for (int p = 0; p < w.n_space; ++p) {
      const std::size_t q = w.index(m, p);
      if (w.endpoint(m)) {
        w.log_phi[q] = w.log_phi_tilde[q] = inf;
        w.alpha[q] = w.alpha_tilde[q] = -inf;
        continue;
      }
      const double lp = params.lambda * w.psi[p];
      const double lpt = params.lambda * w.psi_tilde[p];
      w.log_phi[q] = lp - std::log(tau);
      w.log_phi_tilde[q] = lpt - std::log(tau);
      w.alpha[q] = (std::exp(lp) - cap) / tau;
      w.alpha_tilde[q] = (std::exp(lpt) - cap) / tau;
    }
  }
  return w;
}

namespace {

// Central-difference ratios over the interior time nodes of a uniform
// lattice with n_t nodes on [0, T]; φ, α evaluated in closed form.
TimeBoundRatios time_ratios(std::span<const double> psi, double lambda, double cap, double T,
                            int n_t) {
  TimeBoundRatios r;
  const double dt = T / (n_t - 1);
  auto tau = [&](int m) {
    const double t = m * dt;
    return t * (T - t);
  };
  for (double ps : psi) {
    const double e = std::exp(lambda * ps);
    for (int m = 2; m <= n_t - 3; ++m) {
      const double phi_m = e / tau(m);
      const double phi_p = e / tau(m + 1);
      const double phi_n = e / tau(m - 1);
      const double a_m = (e - cap) / tau(m);
      const double a_p = (e - cap) / tau(m + 1);
      const double a_n = (e - cap) / tau(m - 1);
      const double phi_t = (phi_p - phi_n) / (2.0 * dt);
      const double a_t = (a_p - a_n) / (2.0 * dt);
      const double a_tt = (a_p - 2.0 * a_m + a_n) / (dt * dt);
      r.phi_t = std::max(r.phi_t, std::abs(phi_t) / (phi_m * phi_m));
      r.alpha_t = std::max(r.alpha_t, std::abs(a_t) / (phi_m * phi_m));
      r.alpha_tt = std::max(r.alpha_tt, std::abs(a_tt) / (phi_m * phi_m * phi_m));
    }
  }
  return r;
}

bool within_factor(double a, double b, double factor) {
  if (a == 0.0 && b == 0.0) return true;
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  return lo > 0.0 && hi < factor * lo;
}

}  // namespace

TimeBoundReport check_weight_time_bounds(const WeightFields& weights) {
  if (weights.n_t < 5) throw Error(ErrorCode::DegenerateResolution, "need n_t >= 5");
  const double cap = std::exp(1.5 * weights.params.lambda * weights.params.psi_sup_norm);
  TimeBoundReport rep;
  rep.ratios = time_ratios(weights.psi, weights.params.lambda, cap, weights.T, weights.n_t);
  rep.refined =
      time_ratios(weights.psi, weights.params.lambda, cap, weights.T, 2 * weights.n_t - 1);
  rep.tilde = time_ratios(weights.psi_tilde, weights.params.lambda, cap, weights.T, weights.n_t);
  const auto& a = rep.ratios;
  const auto& b = rep.refined;
  rep.finite = std::isfinite(a.phi_t) && std::isfinite(a.alpha_t) && std::isfinite(a.alpha_tt);
  rep.stable = within_factor(a.phi_t, b.phi_t, 2.0) && within_factor(a.alpha_t, b.alpha_t, 2.0) &&
               within_factor(a.alpha_tt, b.alpha_tt, 2.0);
  return rep;
}

}  // namespace clab
