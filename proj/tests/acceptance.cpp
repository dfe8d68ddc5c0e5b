// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "clab/carleman.hpp"
#include "clab/convergence.hpp"
#include "clab/errors.hpp"
#include "clab/experiment.hpp"
#include "clab/io.hpp"
#include "clab/observe.hpp"
#include "clab/pde_core.hpp"
#include "clab/positivity.hpp"
#include "clab/stability_lab.hpp"

using namespace clab;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

// Max difference between a coarse field and a once-refined field at the shared nodes.
double coarse_vs_fine(const SpaceTimeField& c, const PolarGrid& gc, const SpaceTimeField& f,
                      const PolarGrid& gf) {
  double d = 0.0;
  for (int comp = 0; comp < c.n_comp; ++comp) {
    for (int m = 0; m < gc.n_t; ++m) {
      for (int i = 0; i < gc.n_r; ++i) {
        for (int j = 0; j < gc.n_theta; ++j) {
          const double v = c.at(comp, m, gc.node(i, j));
          const double w = f.at(comp, 2 * m, gf.node(2 * i, 2 * j));
          d = std::max(d, std::abs(v - w));
        }
      }
    }
  }
  return d;
}

Verdict convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const ConvergenceOptions opt;
  bool ok = true;
  std::string detail;
  for (TimeScheme sch : {TimeScheme::BackwardEuler, TimeScheme::CrankNicolson}) {
    const ConvergenceTable t = run_convergence_study(opt, sch);
    const bool be = sch == TimeScheme::BackwardEuler;
    const double t_lo = be ? 0.8 : 1.7;
    const double t_hi = be ? 1.2 : 2.3;
    for (std::size_t k = 1; k < t.space.size(); ++k) {
      ok = ok && t.space[k].slope >= 1.7 && t.space[k].slope <= 2.3;
    }
    for (std::size_t k = 1; k < t.time.size(); ++k) {
      ok = ok && t.time[k].slope >= t_lo && t.time[k].slope <= t_hi;
    }
    detail += fmt("%s space %.3f time %.3f; ", be ? "BE" : "CN", t.space.back().slope,
                  t.time.back().slope);
  }
  const double elapsed = seconds_since(t0);
  detail += fmt("%.2f s", elapsed);
  return {ok && elapsed < 60.0, detail};
}

Verdict neumann_exact() {
  double worst = 0.0;
  for (int n_r : {5, 9, 17, 33}) {
    const PolarGrid g = build_polar_grid(1.0, 2.0, n_r, 2 * (n_r - 1), 1.0, n_r);
    const SystemCoefficients s = make_uniform_system(g, 1, 1.0, Eigen::MatrixXd::Zero(1, 1),
                                                     uniform_boundary(g, 1, 0, 1, 0));
    const SpaceTimeField src(1, g, 1.0);
    for (TimeScheme sch : {TimeScheme::BackwardEuler, TimeScheme::CrankNicolson}) {
      const StateField y = solve_forward_linear(s, src, zero_initial(g, 1), g, sch);
      for (int m = 0; m < g.n_t; ++m) {
        for (int p = 0; p < g.n_space(); ++p) {
          worst = std::max(worst, std::abs(y.data.at(0, m, p) - g.time(m)));
        }
      }
    }
  }
  return {worst <= 1e-10, fmt("max |y - t| = %.2e over n_r 5..33, BE and CN", worst)};
}

PositivitySuite& positivity_suite() {
  static PositivitySuite suite =
      run_positivity_suite(build_polar_grid(1.0, 2.0, 17, 32, 1.0, 17), 200, 20, 2024);
  return suite;
}

Verdict positivity() {
  const PositivitySuite& s = positivity_suite();
  int n = 0;
  double worst = 1.0;
  for (const auto& r : s.records) {
    if (r.improving) continue;
    ++n;
    if (r.max_abs > 0.0) worst = std::min(worst, r.min_value / r.max_abs);
  }
  return {n == 200 && s.n_fail == 0,
          fmt("%d instances, %d failures, worst min/max %.2e", n, s.n_fail, worst)};
}

Verdict positivity_improving() {
  const PositivitySuite& s = positivity_suite();
  int n = 0;
  double worst = 1e300;
  for (const auto& r : s.records) {
    if (!r.improving) continue;
    ++n;
    worst = std::min(worst, r.worst_ratio);
  }
  return {n == 20 && s.n_improving_fail == 0 && worst > 1e-12,
          fmt("%d instances, %d failures, smallest min/max at T/2 %.2e", n, s.n_improving_fail,
              worst)};
}

Verdict observation() {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 5, 16, 1.0, 6);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> pos(0.0, 2.0);
  double round_trip = 0.0;
  double bound_excess = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    SystemCoefficients s = make_uniform_system(g, 1, 1.0, Eigen::MatrixXd::Zero(1, 1),
                                               uniform_boundary(g, 1, 1, 1, 1));
    ObservationSpec spec = uniform_observation(g, 1, 1.0, 0.0, 1e-3);
    const int ring = g.gamma1_ring() == 0 ? 0 : 1;
    for (int j = 0; j < g.n_theta; ++j) {
      double beta, eta, gamma, delta;
      do {
        beta = (rng() % 2) ? 1.0 : 0.0;
        eta = pos(rng) + (beta == 0.0 ? 0.1 : 0.0);
        gamma = u(rng);
        delta = u(rng);
      } while (gamma * eta - beta * delta < spec.epsilon);
      s.boundary[0].beta[ring][j] = beta;
      s.boundary[0].eta[ring][j] = eta;
      spec.gamma[0][j] = gamma;
      spec.delta[0][j] = delta;
    }
    BoundarySeries z(1, g, g.gamma1_ring());
    for (double& v : z.values) v = u(rng);
    const TraceRecovery rec = recover_trace_from_observation(z, spec, s, g);
    const BoundarySeries back = apply_observation(spec, rec.values);
    for (std::size_t q = 0; q < z.values.size(); ++q) {
      round_trip = std::max(round_trip,
                            std::abs(back.values[q] - z.values[q]) / std::max(1.0, std::abs(z.values[q])));
    }
    for (int m = 0; m < g.n_t; ++m) {
      for (int j = 0; j < g.n_theta; ++j) {
        const double lhs =
            std::abs(rec.values.trace.at(0, m, j)) + std::abs(rec.values.conormal.at(0, m, j));
        const double rhs = rec.k_node[j] * std::abs(z.at(0, m, j));
        bound_excess = std::max(bound_excess, (lhs - rhs) / std::max(rhs, 1e-300));
      }
    }
  }
  return {round_trip <= 1e-12 && bound_excess <= 1e-12,
          fmt("100 draws, round-trip error %.2e, max relative excess over K|zeta| %.2e", round_trip,
              bound_excess)};
}

ExperimentConfig carleman_config() {
  return parse_config(Json::parse(R"({
    "geometry": {"r0": 1.0, "r1": 2.0, "n_r": 17, "n_theta": 32, "T": 1.0, "n_t": 17},
    "coefficients": {"preset": "heat"},
    "observation": {"gamma": 1.0, "delta": 0.0},
    "experiment": {"kind": "carleman", "corpus_size": 10, "seed": 11}
  })"));
}

Verdict carleman() {
  const ExperimentConfig cfg = carleman_config();
  const PolarGrid grid = make_grid(cfg);
  const CarlemanRun run = run_carleman_scan(cfg, grid);

  ExperimentConfig fine = cfg;
  fine.geometry.n_r = 2 * cfg.geometry.n_r - 1;
  fine.geometry.n_theta = 2 * cfg.geometry.n_theta;
  fine.geometry.n_t = 2 * cfg.geometry.n_t - 1;
  const PolarGrid fg = make_grid(fine);
  const CarlemanRun fr = run_carleman_scan(fine, fg);
  double change = 0.0;
  for (int a = 0; a < static_cast<int>(run.scan.s_grid.size()); ++a) {
    for (int b = 0; b < static_cast<int>(run.scan.lambda_grid.size()); ++b) {
      if (!run.scan.in_region(a, b)) continue;
      const double c0 = run.scan.at(a, b).c_hat;
      change = std::max(change, std::abs(fr.scan.at(a, b).c_hat - c0) / c0);
    }
  }

  // Boundary term on the left at (s*, λ*): finite log and nonnegative value.
  bool sigma0_ok = run.scan.region_size > 0;
  if (sigma0_ok) {
    const SystemCoefficients coeffs = make_coefficients(cfg, grid);
    const auto corpus = make_carleman_corpus(coeffs, make_observation(cfg, grid), grid,
                                             cfg.experiment.corpus_size, cfg.experiment.seed);
    WeightParams p = run.base;
    p.s = run.scan.s_star;
    p.lambda = run.scan.lambda_star;
    const SubharmonicResult sub = exponentiate_for_subharmonicity(
        grid, construct_psi0_radial(grid), coeffs.a[0], cfg.weights.mu_grid);
    const WeightedQuadrature quad(grid, eval_weights(grid, sub.field, p));
    for (const auto& c : corpus) {
      const CarlemanReport r = eval_carleman_sides(c.y, c.gbar, c.zeta, quad);
      sigma0_ok = sigma0_ok && !std::isnan(r.log_lhs_boundary) && r.lhs_boundary >= 0.0;
    }
  }
  const bool ok = run.bound_holds && run.scan.region_size > 0 && fr.bound_holds &&
                  change < 0.15 && sigma0_ok;
  return {ok, fmt("s* = %g, lambda* = %g, region %d cells, C = %.4g, refinement change %.1f%%, "
                  "boundary term %s",
                  run.scan.s_star, run.scan.lambda_star, run.scan.region_size, run.scan.c_region,
                  100.0 * change, sigma0_ok ? "nonnegative" : "INVALID")};
}

Verdict stability() {
  bool ok = true;
  std::string detail;
  for (const char* preset : {"heat", "coupled2"}) {
    std::vector<double> c_hats;
    int bad = 0;
    double scaling = 0.0;
    for (int n_r : {17, 33, 65}) {
      Json tree = {{"geometry", {{"n_r", n_r}}},
                   {"coefficients", {{"preset", preset}}},
                   {"experiment", {{"n_samples", 200}, {"k", 1.0}, {"seed", 7}}}};
      const ExperimentConfig cfg = parse_config(tree);
      const PolarGrid grid = make_grid(cfg);
      const StabilityConfig sc = make_stability_config(cfg, grid);
      const StabilityReport rep = estimate_constant(sc);
      for (const auto& s : rep.samples) {
        if (s.status != RatioStatus::Ok || !std::isfinite(s.ratio)) ++bad;
      }
      c_hats.push_back(rep.c_hat);
      if (n_r == 17) {
        for (int id = 0; id < 5; ++id) {
          const SampledSource src = sample_source_Gk(sc.source, grid, sc.coeffs.n, id);
          const StabilityRatio r1 =
              stability_ratio(grid, src.g, observe_source(sc, src.g.data()).zeta);
          SpaceTimeField scaled = src.g.data();
          for (double& v : scaled.values) v *= 37.5;
          const StabilityRatio r2 =
              stability_ratio(grid, SourceField(grid, scaled), observe_source(sc, scaled).zeta);
          scaling = std::max(scaling, std::abs(r2.value - r1.value) / r1.value);
        }
      }
    }
    const auto [lo, hi] = std::minmax_element(c_hats.begin(), c_hats.end());
    const double spread = (*hi - *lo) / *lo;
    ok = ok && bad == 0 && spread < 0.15 && scaling <= 1e-10;
    detail += fmt("%s: C_hat %.4g/%.4g/%.4g spread %.1f%%, non-finite %d, scaling %.1e; ", preset,
                  c_hats[0], c_hats[1], c_hats[2], 100.0 * spread, bad, scaling);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// Difference between the semilinear solution and the solution of its linearized
// system, against the discretization error estimated by one refinement.
struct Reduction {
  double reduction = 0.0;
  double discretization = 0.0;
};

Reduction semilinear_reduction(const NonlinearityModel& f, int n, std::uint64_t seed) {
  const auto solve_on = [&](int n_r) {
    const PolarGrid g = build_polar_grid(1.0, 2.0, n_r, 2 * (n_r - 1), 1.0, n_r);
    const SystemCoefficients s = make_uniform_system(g, n, 1.0, Eigen::MatrixXd::Zero(n, n),
                                                     uniform_boundary(g, 1, 1, 1, 1));
    SpaceTimeField src = smooth_random_source(g, n, seed, 0);
    for (double& v : src.values) v *= 2.0;
    return std::tuple{g, s, src, solve_forward_semilinear(s, f, src, zero_initial(g, n), g)};
  };
  const auto [g, s, src, y] = solve_on(17);
  const auto [gf, sf, srcf, yf] = solve_on(33);
  const Linearization lin = linearize_semilinear(f, y, g);
  SpaceTimeField rhs = src;
  for (std::size_t k = 0; k < rhs.values.size(); ++k) rhs.values[k] += lin.gbar.values[k];
  const StateField yl = solve_forward_linear(
      with_coupling(s, sum_couplings(s.c, lin.diagonal, g.n_t)), rhs, zero_initial(g, n), g);
  return {max_diff(yl.data.values, y.data.values), coarse_vs_fine(y.data, g, yf.data, gf)};
}

Verdict semilinear() {
  const Reduction a = semilinear_reduction(square_nonlinearity(), 1, 3);
  const Reduction b = semilinear_reduction(cross_decay_nonlinearity(), 2, 4);

  const PolarGrid g = build_polar_grid(1.0, 2.0, 9, 16, 1.0, 9);
  StateField y{SpaceTimeField(1, g)};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (double& v : y.data.values) v = u(rng);
  const Linearization lin = linearize_semilinear(square_nonlinearity(), y, g);
  double quad = 0.0;
  for (int m = 0; m < g.n_t; ++m) {
    for (int p = 0; p < g.n_space(); ++p) {
      quad = std::max(quad, std::abs(lin.diagonal(0, 0, m, p) - y.data.at(0, m, p)));
    }
  }
  const bool ok = a.reduction <= 2.0 * a.discretization && b.reduction <= 2.0 * b.discretization &&
                  quad <= 1e-12;
  return {ok, fmt("y^2: reduction %.2e vs discretization %.2e; cross decay: %.2e vs %.2e; "
                  "c^y = y to %.1e",
                  a.reduction, a.discretization, b.reduction, b.discretization, quad)};
}

Verdict determinism() {
  const auto base = std::filesystem::temp_directory_path() / "clab_acceptance_determinism";
  std::filesystem::remove_all(base);
  const std::vector<Json> configs = {
      Json::parse(R"({"experiment": {"kind": "stability", "n_samples": 50, "seed": 9}})"),
      Json::parse(R"({"coefficients": {"preset": "coupled2"},
                      "experiment": {"kind": "stability", "n_samples": 20, "seed": 9, "workers": 2}})"),
      Json::parse(R"({"experiment": {"kind": "positivity", "n_instances": 30, "n_improving": 5, "seed": 9}})"),
      Json::parse(R"({"geometry": {"n_r": 9}, "experiment": {"kind": "carleman", "corpus_size": 3, "seed": 9}})"),
      Json::parse(R"({"coefficients": {"preset": "coupled2"}, "experiment": {"kind": "forward", "seed": 9}})")};
  bool ok = true;
  int compared = 0;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const ExperimentConfig cfg = parse_config(configs[c]);
    const RunOutcome r1 = run_experiment(cfg, base / fmt("%zu_a", c));
    const RunOutcome r2 = run_experiment(cfg, base / fmt("%zu_b", c));
    ok = ok && r1.artifacts.size() == r2.artifacts.size() && !r1.artifacts.empty();
    for (std::size_t k = 0; ok && k < r1.artifacts.size(); ++k) {
      ok = r1.artifacts[k].path == r2.artifacts[k].path &&
           r1.artifacts[k].sha256 == r2.artifacts[k].sha256;
      ++compared;
    }
  }
  std::filesystem::remove_all(base);
  return {ok, fmt("%zu configurations, %d report digests identical across runs", configs.size(),
                  compared)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"forward-solver convergence", convergence},
      {"exact Neumann instance", neumann_exact},
      {"positivity suite", positivity},
      {"positivity-improving suite", positivity_improving},
      {"observation algebra", observation},
      {"Carleman verification", carleman},
      {"stability estimate", stability},
      {"semilinear reduction", semilinear},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s %zu %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first,
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
