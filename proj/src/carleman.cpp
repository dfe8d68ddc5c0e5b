#include "clab/carleman.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/quadrature/gauss.hpp>

#include "clab/errors.hpp"
#include "clab/logspace.hpp"
#include "clab/parallel.hpp"
#include "clab/polar_ops.hpp"

namespace clab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Cells whose bound lies this far below the largest bound cannot change a double sum.
constexpr double kDropMargin = 800.0;

// log(φ^p e^{2s(α − α_ref)}) at (t, ψ) in closed form, where α_ref is the
// peak value of α (t = T/2, ψ = ψ_max). With E = e^{λψ}, E_max = e^{λψ_max}
// and D = e^{1.5λ‖ψ‖∞} − E_max,
//   α − α_ref = [(E − E_max) − D (T − 2t)²/T²] / τ,   τ = t(T − t),
// a sum of two nonpositive terms, so nothing cancels even when |α| is huge.
struct LogWeight {
  double lambda, s, T, p;
  double lpsi_max;  // λψ_max
  double emax;      // E_max
  double d;         // D

  double rel_alpha(double t, double lpsi, double inv_tau) const {
    const double c = T - 2.0 * t;
    return (emax * std::expm1(lpsi - lpsi_max) - d * c * c / (T * T)) * inv_tau;
  }

  double operator()(double t, double psi) const {
    const double tau = t * (T - t);
    if (!(tau > 0.0)) return kNegInf;
    const double lpsi = lambda * psi;
    return p * (lpsi - std::log(tau)) + 2.0 * s * rel_alpha(t, lpsi, 1.0 / tau);
  }

  // τ maximizing −p log τ − B(ψ)/τ (unbounded for p = 0).
  double tau_star(double psi) const {
    const double b = 2.0 * s * (d - emax * std::expm1(lambda * psi - lpsi_max));
    return p > 0.0 ? b / p : std::numeric_limits<double>::infinity();
  }

  // Rigorous upper bound over [ta, tb] × [ψ ≤ psi_hi]. The exponent is
  // increasing in ψ and unimodal in τ with its peak at τ*, so the maximum
  // sits at an end, at T/2 or where τ = τ*.
  double bound(double ta, double tb, double psi_hi) const {
    double best = std::max(operator()(ta, psi_hi), operator()(tb, psi_hi));
    auto consider = [&](double t) {
      if (ta < t && t < tb) best = std::max(best, operator()(t, psi_hi));
    };
    consider(0.5 * T);
    const double ts = tau_star(psi_hi);
    if (ts < 0.25 * T * T) {
      const double root = std::sqrt(T * T - 4.0 * ts);
      consider(0.5 * (T - root));
      consider(0.5 * (T + root));
    }
    return best;
  }
};

using Piece = std::pair<double, double>;

// Ten-point Gauss–Legendre rule on [−1, 1].
struct Rule {
  std::array<double, 10> x{};
  std::array<double, 10> w{};
  Rule() {
    using G = boost::math::quadrature::gauss<double, 10>;
    const auto& ax = G::abscissa();
    const auto& wt = G::weights();
    for (std::size_t k = 0; k < ax.size(); ++k) {
      x[2 * k] = -ax[k];
      x[2 * k + 1] = ax[k];
      w[2 * k] = w[2 * k + 1] = wt[k];
    }
  }
};

const Rule& rule() {
  static const Rule r;
  return r;
}

// [lo, hi] cut into pieces that shrink geometrically towards the peak end;
// `drop` is the decay of the log integrand across the interval.
void graded_pieces(double lo, double hi, bool peak_at_hi, double drop, int extra,
                   std::vector<Piece>& out) {
  int levels = 0;
  if (!std::isfinite(drop)) {
    levels = 60;
  } else if (drop > 1.0) {
    levels = std::min(60, static_cast<int>(std::ceil(std::log2(drop))) + extra);
  }
  const double len = hi - lo;
  double a = lo;
  double b = hi;
  for (int k = 0; k < levels; ++k) {
    const double cut = std::ldexp(len, -(k + 1));
    if (peak_at_hi) {
      out.emplace_back(a, hi - cut);
      a = hi - cut;
    } else {
      out.emplace_back(lo + cut, b);
      b = lo + cut;
    }
  }
  out.emplace_back(a, b);
}

// Pieces of the time cell [ta, tb] on which the weight is monotone (split at
// T/2 and at the interior maximizers), each graded towards its peak.
std::vector<Piece> time_pieces(const LogWeight& lw, double ta, double tb, double psi_lo,
                               double psi_hi, int extra) {
  std::vector<double> cuts{ta, tb};
  const double T = lw.T;
  auto add = [&](double t) {
    if (ta < t && t < tb) cuts.push_back(t);
  };
  add(0.5 * T);
  for (double psi : {psi_lo, psi_hi}) {
    const double ts = lw.tau_star(psi);
    if (ts < 0.25 * T * T) {
      const double d = std::sqrt(T * T - 4.0 * ts);
      add(0.5 * (T - d));
      add(0.5 * (T + d));
    }
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<Piece> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double lo = cuts[k];
    const double hi = cuts[k + 1];
    if (!(hi > lo)) continue;
    const double wl = lw(lo, psi_hi);
    const double wh = lw(hi, psi_hi);
    const bool peak_hi = wh >= wl;
    const double drop = 2.0 * std::abs((peak_hi ? wh : wl) - lw(0.5 * (lo + hi), psi_hi));
    graded_pieces(lo, hi, peak_hi, drop, extra, out);
  }
  // e^{−B/τ} is not analytic at τ = 0: pieces touching t = 0 or t = T are
  // halved towards the endpoint until the rest is negligible.
  double ref = kNegInf;
  for (const auto& [lo, hi] : out) ref = std::max({ref, lw(lo, psi_hi), lw(hi, psi_hi)});
  auto split_towards = [&](double end, double other, std::vector<Piece>& pieces) {
    double cur = other;
    for (int k = 0; k < 60; ++k) {
      const double mid = 0.5 * (end + cur);
      const double b = end < cur ? lw.bound(end, mid, psi_hi) : lw.bound(mid, end, psi_hi);
      pieces.emplace_back(std::min(mid, cur), std::max(mid, cur));
      cur = mid;
      if (b < ref - kDropMargin) break;
    }
    pieces.emplace_back(std::min(end, cur), std::max(end, cur));
  };
  if (ta <= 0.0 && !out.empty()) {
    const double b = out.front().second;
    out.erase(out.begin());
    split_towards(0.0, b, out);
  }
  if (tb >= T && !out.empty()) {
    auto it = std::max_element(out.begin(), out.end(),
                               [](const Piece& x, const Piece& y) { return x.second < y.second; });
    const double a = it->first;
    out.erase(it);
    split_towards(T, a, out);
  }
  return out;
}

// Time at which the cell's weight (at ψ_hi) is largest among the piece ends.
double peak_time(const LogWeight& lw, const std::vector<Piece>& pieces, double psi_hi) {
  double best = pieces.front().first;
  double wbest = kNegInf;
  for (const auto& [lo, hi] : pieces) {
    for (double t : {lo, hi}) {
      const double w = lw(t, psi_hi);
      if (w > wbest) {
        wbest = w;
        best = t;
      }
    }
  }
  return best;
}

}  // namespace

WeightedQuadrature::WeightedQuadrature(const PolarGrid& grid, const WeightFields& weights,
                                       std::vector<double> interior_powers,
                                       std::vector<double> boundary_powers,
                                       const QuadratureOptions& options)
    : grid_(grid), params_(weights.params), options_(options) {
  if (weights.n_t != grid.n_t || weights.n_space != grid.n_space()) {
    throw Error(ErrorCode::WeightGridMismatch, "weights were built on a different grid");
  }
  const int nr = grid.n_r;
  const int nt = grid.n_t;
  const int ncell_r = nr - 1;

  // Distinct ψ column profiles.
  column_class_.assign(grid.n_theta, -1);
  for (int j = 0; j < grid.n_theta; ++j) {
    std::vector<double> col(nr);
    for (int i = 0; i < nr; ++i) col[i] = weights.psi[grid.node(i, j)];
    auto it = std::find(psi_columns_.begin(), psi_columns_.end(), col);
    if (it == psi_columns_.end()) {
      psi_columns_.push_back(std::move(col));
      column_class_[j] = static_cast<int>(psi_columns_.size()) - 1;
    } else {
      column_class_[j] = static_cast<int>(it - psi_columns_.begin());
    }
  }

  const double psi_max = *std::max_element(weights.psi.begin(), weights.psi.end());
  const double lpsi_max = params_.lambda * psi_max;
  const double emax = std::exp(lpsi_max);
  const double d = emax * std::expm1(1.5 * params_.lambda * params_.psi_sup_norm - lpsi_max);
  log_scale_ = -2.0 * params_.s * (4.0 * d / (grid.T * grid.T) + options_.alpha_offset);
  const double h = grid.h_r();
  const double dt = grid.dt();
  const int extra = options_.grading_extra;
  const Rule& gl = rule();

  struct Node {
    double x, w, log_tau, inv_tau, q;  // q = (T − 2t)²/(T² τ)
  };
  std::vector<Node> tnodes;
  std::vector<Piece> rpieces;

  for (double p : interior_powers) {
    const LogWeight lw{params_.lambda, params_.s, grid.T, p, lpsi_max, emax, d};
    Table tab;
    tab.power = p;
    const int ncls = static_cast<int>(psi_columns_.size());
    const std::size_t ncell = static_cast<std::size_t>(nt - 1) * ncell_r;
    std::vector<std::vector<double>> bounds(ncls, std::vector<double>(ncell));
    double top = kNegInf;
    for (int c = 0; c < ncls; ++c) {
      const auto& col = psi_columns_[c];
      for (int m = 0; m + 1 < nt; ++m) {
        for (int i = 0; i < ncell_r; ++i) {
          const double psi_hi = std::max(col[i], col[i + 1]);
          const double ub = lw.bound(grid.time(m), grid.time(m + 1), psi_hi) +
                            std::log(grid.radius(i + 1) * h * dt);
          bounds[c][m * ncell_r + i] = ub;
          top = std::max(top, ub);
        }
      }
    }
    tab.log_moments.assign(ncls, std::vector<double>(ncell * 4, kNegInf));
    for (int c = 0; c < ncls; ++c) {
      const auto& col = psi_columns_[c];
      for (int m = 0; m + 1 < nt; ++m) {
        for (int i = 0; i < ncell_r; ++i) {
          const double ub = bounds[c][m * ncell_r + i];
          if (!(ub > top - kDropMargin)) continue;
          ++evaluated_;
          const double ta = grid.time(m);
          const double ra = grid.radius(i);
          const double pa = col[i];
          const double pb = col[i + 1];
          const double psi_lo = std::min(pa, pb);
          const double psi_hi = std::max(pa, pb);
          const double shift = ub - std::log(h * dt);  // bound on the integrand itself

          const std::vector<Piece> tp = time_pieces(lw, ta, ta + dt, psi_lo, psi_hi, extra);
          const double tpk = peak_time(lw, tp, psi_hi);
          // Radial pieces are offsets δ from the end of larger ψ, so nodes
          // within 10⁻¹³ of that end keep their relative precision.
          rpieces.clear();
          graded_pieces(0.0, h, false, std::abs(lw(tpk, pb) - lw(tpk, pa)), extra, rpieces);
          const bool up = pb >= pa;
          const double lpsi_peak = params_.lambda * (psi_hi - psi_max);
          const double slope = params_.lambda * (psi_hi - psi_lo) / h;

          tnodes.clear();
          for (const auto& [lo, hi] : tp) {
            const double half = 0.5 * (hi - lo);
            for (int k = 0; k < 10; ++k) {
              const double t = lo + half * (1.0 + gl.x[k]);
              const double tau = t * (grid.T - t);
              if (!(tau > 0.0)) continue;
              const double c = grid.T - 2.0 * t;
              tnodes.push_back({t, half * gl.w[k], std::log(tau), 1.0 / tau,
                                c * c / (grid.T * grid.T * tau)});
            }
          }
          double mom[4] = {0.0, 0.0, 0.0, 0.0};
          for (const auto& [lo, hi] : rpieces) {
            const double half = 0.5 * (hi - lo);
            for (int k = 0; k < 10; ++k) {
              const double delta = lo + half * (1.0 + gl.x[k]);
              const double v = up ? 1.0 - delta / h : delta / h;
              const double r = up ? ra + h - delta : ra + delta;
              const double lrel = lpsi_peak - slope * delta;  // λ(ψ − ψ_max)
              const double lpsi = lpsi_max + lrel;
              const double a = emax * std::expm1(lrel);
              const double wr = half * gl.w[k] * r;
              double acc0 = 0.0;
              double acc1 = 0.0;
              for (const Node& tn : tnodes) {
                const double e = p * (lpsi - tn.log_tau) +
                                 2.0 * params_.s * (a * tn.inv_tau - d * tn.q) - shift;
                const double f = tn.w * std::exp(e);
                const double u = (tn.x - ta) / dt;
                acc0 += f * (1.0 - u);
                acc1 += f * u;
              }
              mom[0] += wr * acc0 * (1.0 - v);
              mom[1] += wr * acc0 * v;
              mom[2] += wr * acc1 * (1.0 - v);
              mom[3] += wr * acc1 * v;
            }
          }
          for (int q = 0; q < 4; ++q) {
            if (!std::isfinite(mom[q])) {
              throw Error(ErrorCode::QuadratureFailure,
                          "non-finite weight moment in cell (" + std::to_string(m) + ", " +
                              std::to_string(i) + ")");
            }
            if (mom[q] > 0.0) {
              tab.log_moments[c][(m * ncell_r + i) * 4 + q] = shift + std::log(mom[q]);
            }
          }
        }
      }
    }
    tables_.push_back(std::move(tab));
  }

  for (int ring : {grid.gamma0_ring(), grid.gamma1_ring()}) {
    for (double p : boundary_powers) {
      const LogWeight lw{params_.lambda, params_.s, grid.T, p, lpsi_max, emax, d};
      BoundaryTable tab;
      tab.power = p;
      tab.ring = ring;
      tab.log_moments.assign(grid.n_theta, std::vector<double>(2 * (nt - 1), kNegInf));
      double top = kNegInf;
      for (int j = 0; j < grid.n_theta; ++j) {
        const double psi = weights.psi[grid.node(ring, j)];
        for (int m = 0; m + 1 < nt; ++m) {
          top = std::max(top, lw.bound(grid.time(m), grid.time(m + 1), psi) + std::log(dt));
        }
      }
      std::map<double, int> seen;
      for (int j = 0; j < grid.n_theta; ++j) {
        const double psi = weights.psi[grid.node(ring, j)];
        if (auto it = seen.find(psi); it != seen.end()) {
          tab.log_moments[j] = tab.log_moments[it->second];
          continue;
        }
        seen.emplace(psi, j);
        for (int m = 0; m + 1 < nt; ++m) {
          const double ta = grid.time(m);
          const double ub = lw.bound(ta, ta + dt, psi) + std::log(dt);
          if (!(ub > top - kDropMargin)) continue;
          const double shift = ub - std::log(dt);
          double mom[2] = {0.0, 0.0};
          for (const auto& [lo, hi] : time_pieces(lw, ta, ta + dt, psi, psi, extra)) {
            const double half = 0.5 * (hi - lo);
            for (int k = 0; k < 10; ++k) {
              const double t = lo + half * (1.0 + gl.x[k]);
              const double e = lw(t, psi) - shift;
              if (e == kNegInf) continue;
              const double f = half * gl.w[k] * std::exp(e);
              const double u = (t - ta) / dt;
              mom[0] += f * (1.0 - u);
              mom[1] += f * u;
            }
          }
          for (int a = 0; a < 2; ++a) {
            if (!std::isfinite(mom[a])) {
              throw Error(ErrorCode::QuadratureFailure, "non-finite boundary weight moment");
            }
            if (mom[a] > 0.0) tab.log_moments[j][m * 2 + a] = shift + std::log(mom[a]);
          }
        }
      }
      boundary_tables_.push_back(std::move(tab));
    }
  }
}

const WeightedQuadrature::Table& WeightedQuadrature::table(double power) const {
  for (const auto& t : tables_) {
    if (t.power == power) return t;
  }
  throw Error(ErrorCode::InvalidArgument,
              "no interior table for power " + std::to_string(power));
}

const WeightedQuadrature::BoundaryTable& WeightedQuadrature::boundary_table(int ring,
                                                                            double power) const {
  for (const auto& t : boundary_tables_) {
    if (t.ring == ring && t.power == power) return t;
  }
  throw Error(ErrorCode::InvalidArgument, "no boundary table for ring " + std::to_string(ring) +
                                              ", power " + std::to_string(power));
}

double WeightedQuadrature::log_interior(std::span<const double> data, double power) const {
  if (data.size() != static_cast<std::size_t>(grid_.n_t) * grid_.n_space()) {
    throw Error(ErrorCode::WeightGridMismatch, "interior data does not match the grid");
  }
  const Table& tab = table(power);
  const int ncell_r = grid_.n_r - 1;
  const double lk = std::log(grid_.h_theta());
  const int ns = grid_.n_space();
  LogSum acc;
  for (int j = 0; j < grid_.n_theta; ++j) {
    const auto& lm = tab.log_moments[column_class_[j]];
    for (int m = 0; m + 1 < grid_.n_t; ++m) {
      for (int i = 0; i < ncell_r; ++i) {
        const std::size_t base = static_cast<std::size_t>(m * ncell_r + i) * 4;
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            const double l = lm[base + 2 * a + b];
            if (l == kNegInf) continue;
            const double f = data[static_cast<std::size_t>(m + a) * ns + grid_.node(i + b, j)];
            if (f < 0.0) throw Error(ErrorCode::InvalidArgument, "weighted data must be >= 0");
            if (f == 0.0) continue;
            acc.add(l + lk + std::log(f));
          }
        }
      }
    }
  }
  return acc.value();
}

double WeightedQuadrature::log_boundary(std::span<const double> data, int ring,
                                        double power) const {
  if (data.size() != static_cast<std::size_t>(grid_.n_t) * grid_.n_theta) {
    throw Error(ErrorCode::WeightGridMismatch, "boundary data does not match the grid");
  }
  const BoundaryTable& tab = boundary_table(ring, power);
  const double larc = std::log(grid_.arc_weight(ring));
  LogSum acc;
  for (int j = 0; j < grid_.n_theta; ++j) {
    for (int m = 0; m + 1 < grid_.n_t; ++m) {
      for (int a = 0; a < 2; ++a) {
        const double l = tab.log_moments[j][m * 2 + a];
        if (l == kNegInf) continue;
        const double f = data[static_cast<std::size_t>(m + a) * grid_.n_theta + j];
        if (f < 0.0) throw Error(ErrorCode::InvalidArgument, "weighted data must be >= 0");
        if (f == 0.0) continue;
        acc.add(l + larc + std::log(f));
      }
    }
  }
  return acc.value();
}

CarlemanReport eval_carleman_sides(const StateField& y, const SpaceTimeField& gbar,
                                   const BoundarySeries& zeta, const WeightedQuadrature& quad,
                                   int component) {
  const PolarGrid& grid = quad.grid();
  const auto& d = y.data;
  if (!d.matches(grid) || !gbar.matches(grid) || zeta.n_t != grid.n_t ||
      zeta.n_theta != grid.n_theta || zeta.ring != grid.gamma1_ring()) {
    throw Error(ErrorCode::WeightGridMismatch, "solution, source or observation off the weight grid");
  }
  if (component < 0 || component >= d.n_comp || component >= gbar.n_comp ||
      component >= zeta.n_comp) {
    throw Error(ErrorCode::ShapeMismatch, "component index out of range");
  }
  const int nt = grid.n_t;
  const int ns = grid.n_space();
  const std::size_t total = static_cast<std::size_t>(nt) * ns;
  std::vector<double> y2(total), grad2(total), g2(total);
  std::vector<double> y2_sigma0(static_cast<std::size_t>(nt) * grid.n_theta);
  std::vector<double> z2(y2_sigma0.size());
  const int ring0 = grid.gamma0_ring();
  for (int m = 0; m < nt; ++m) {
    const auto sl = d.slice(component, m);
    const auto gs = gbar.slice(component, m);
    const PolarGradient pg = polar_gradient(grid, sl);
    for (int p = 0; p < ns; ++p) {
      const std::size_t q = static_cast<std::size_t>(m) * ns + p;
      y2[q] = sl[p] * sl[p];
      grad2[q] = pg.dr[p] * pg.dr[p] + pg.dt[p] * pg.dt[p];
      g2[q] = gs[p] * gs[p];
    }
    for (int j = 0; j < grid.n_theta; ++j) {
      const std::size_t q = static_cast<std::size_t>(m) * grid.n_theta + j;
      const double v = sl[grid.node(ring0, j)];
      y2_sigma0[q] = v * v;
      const double z = zeta.at(component, m, j);
      z2[q] = z * z;
    }
  }
  const double s = quad.params().s;
  const double l = quad.params().lambda;
  CarlemanReport r;
  r.s = s;
  r.lambda = l;
  r.log_scale = quad.log_scale();
  r.log_lhs_interior = log_add(std::log(s * l * l) + quad.log_interior(grad2, 1.0),
                               std::log(s * s * s * l * l * l * l) + quad.log_interior(y2, 3.0));
  r.log_lhs_boundary = std::log(s * s * l * l) + quad.log_boundary(y2_sigma0, ring0, 2.0);
  r.log_rhs_source = quad.log_interior(g2, 0.0);
  r.log_rhs_obs =
      std::log(s * s * s * l * l * l) + quad.log_boundary(z2, grid.gamma1_ring(), 3.0);
  r.lhs_interior = std::exp(r.log_scale + r.log_lhs_interior);
  r.lhs_boundary = std::exp(r.log_scale + r.log_lhs_boundary);
  r.rhs_source = std::exp(r.log_scale + r.log_rhs_source);
  r.rhs_obs = std::exp(r.log_scale + r.log_rhs_obs);
  const double lhs = log_add(r.log_lhs_interior, r.log_lhs_boundary);
  const double rhs = log_add(r.log_rhs_source, r.log_rhs_obs);
  r.defined = rhs > kNegInf;
  if (r.defined) {
    r.log_ratio = lhs - rhs;
    r.ratio = std::exp(r.log_ratio);
  } else {
    r.log_ratio = std::numeric_limits<double>::quiet_NaN();
    r.ratio = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

CarlemanReport eval_carleman_sides(const StateField& y, const SpaceTimeField& gbar,
                                   const BoundarySeries& zeta, const WeightFields& weights,
                                   const PolarGrid& grid, int component) {
  const WeightedQuadrature quad(grid, weights);
  return eval_carleman_sides(y, gbar, zeta, quad, component);
}

void locate_stabilization(ScanResult& scan) {
  const int ns = static_cast<int>(scan.s_grid.size());
  const int nl = static_cast<int>(scan.lambda_grid.size());
  auto cell = [&](int a, int b) -> ScanCell& { return scan.cells[a * nl + b]; };
  auto no_growth = [](const ScanCell& from, const ScanCell& to) {
    if (from.n_defined == 0 || to.n_defined == 0) return false;
    return to.c_hat <= (1.0 + kStabilizationTolerance) * from.c_hat;
  };
  for (int a = 0; a < ns; ++a) {
    for (int b = 0; b < nl; ++b) {
      ScanCell& c = cell(a, b);
      bool ok = c.n_defined > 0;
      if (ok && a + 1 < ns) ok = no_growth(c, cell(a + 1, b));
      if (ok && b + 1 < nl) ok = no_growth(c, cell(a, b + 1));
      c.stable = ok;
    }
  }
  scan.s_star_index = scan.lambda_star_index = -1;
  scan.region_size = 0;
  for (int a = 0; a < ns; ++a) {
    for (int b = 0; b < nl; ++b) {
      bool all = true;
      for (int a2 = a; a2 < ns && all; ++a2) {
        for (int b2 = b; b2 < nl && all; ++b2) all = cell(a2, b2).stable;
      }
      const int size = (ns - a) * (nl - b);
      if (all && size > scan.region_size) {
        scan.region_size = size;
        scan.s_star_index = a;
        scan.lambda_star_index = b;
      }
    }
  }
  scan.c_region = 0.0;
  if (scan.region_size > 0) {
    scan.s_star = scan.s_grid[scan.s_star_index];
    scan.lambda_star = scan.lambda_grid[scan.lambda_star_index];
    for (int a = scan.s_star_index; a < ns; ++a) {
      for (int b = scan.lambda_star_index; b < nl; ++b) {
        scan.c_region = std::max(scan.c_region, cell(a, b).c_hat);
      }
    }
  }
}

ScanResult scan_parameters(const PolarGrid& grid, const Psi0Field& psi0, const WeightParams& base,
                           const std::vector<CarlemanSample>& corpus,
                           const std::vector<double>& s_grid,
                           const std::vector<double>& lambda_grid, int workers,
                           const QuadratureOptions& options) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "Carleman scan needs a corpus");
  if (s_grid.empty() || lambda_grid.empty() || !std::is_sorted(s_grid.begin(), s_grid.end()) ||
      !std::is_sorted(lambda_grid.begin(), lambda_grid.end())) {
    throw Error(ErrorCode::InvalidArgument, "parameter grids must be nonempty and ascending");
  }
  ScanResult out;
  out.s_grid = s_grid;
  out.lambda_grid = lambda_grid;
  const int n = static_cast<int>(corpus.size());
  const int nw = std::clamp(workers, 1, n);
  for (double s : s_grid) {
    for (double lambda : lambda_grid) {
      WeightParams p = base;
      p.s = s;
      p.lambda = lambda;
      const WeightFields w = eval_weights(grid, psi0, p);
      const WeightedQuadrature quad(grid, w, {0.0, 1.0, 3.0}, {2.0, 3.0}, options);
      std::vector<CarlemanReport> reports(n);
      parallel_for(n, nw, [&](int k) {
        reports[k] = eval_carleman_sides(corpus[k].y, corpus[k].gbar, corpus[k].zeta, quad);
      });
      ScanCell cell;
      cell.s = s;
      cell.lambda = lambda;
      cell.log_c_hat = kNegInf;
      for (const auto& r : reports) {
        cell.log_ratios.push_back(r.log_ratio);
        if (!r.defined) continue;
        ++cell.n_defined;
        cell.log_c_hat = std::max(cell.log_c_hat, r.log_ratio);
      }
      cell.c_hat = cell.n_defined > 0 ? std::exp(cell.log_c_hat)
                                      : std::numeric_limits<double>::quiet_NaN();
      out.cells.push_back(std::move(cell));
    }
  }
  locate_stabilization(out);
  return out;
}

}  // namespace clab
