#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "clab/errors.hpp"
#include "clab/geometry.hpp"
#include "clab/polar_ops.hpp"

using namespace clab;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;  // sentinel: nothing thrown
}

bool throws_code(auto&& fn, ErrorCode expected) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == expected;
  }
  return false;
}

}  // namespace

TEST_CASE("grid quadrature integrates the annulus area exactly") {
  for (int nr : {3, 9, 33}) {
    for (int nt : {4, 16, 64}) {
      const PolarGrid g = build_polar_grid(1.0, 2.0, nr, nt, 1.0, 3);
      double sum = 0.0;
      for (double w : g.quad_weights) sum += w;
      CHECK(sum == doctest::Approx(3.0 * std::numbers::pi).epsilon(1e-12));
    }
  }
}

TEST_CASE("minimal grid has disjoint four-node boundary sets") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 3, 4, 1.0, 3);
  CHECK(g.gamma0_nodes.size() == 4);
  CHECK(g.gamma1_nodes.size() == 4);
  std::set<int> a(g.gamma0_nodes.begin(), g.gamma0_nodes.end());
  for (int p : g.gamma1_nodes) CHECK(a.count(p) == 0);
  for (int p : g.gamma0_nodes) CHECK(g.ring_of(p) == 0);
  for (int p : g.gamma1_nodes) CHECK(g.ring_of(p) == 2);
}

TEST_CASE("outer orientation swaps the boundary sets") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 5, 8, 1.0, 3, Orientation::OuterIsGamma0);
  for (int p : g.gamma0_nodes) CHECK(g.ring_of(p) == 4);
  for (int p : g.gamma1_nodes) CHECK(g.ring_of(p) == 0);
}

TEST_CASE("grid construction rejects bad input") {
  CHECK(throws_code([] { build_polar_grid(0.0, 1.0, 5, 8, 1.0, 3); },
                    ErrorCode::NonPositiveRadius));
  CHECK(throws_code([] { build_polar_grid(-1.0, 1.0, 5, 8, 1.0, 3); },
                    ErrorCode::NonPositiveRadius));
  CHECK(throws_code([] { build_polar_grid(1.0, 1.0, 5, 8, 1.0, 3); },
                    ErrorCode::DegenerateResolution));
  CHECK(throws_code([] { build_polar_grid(1.0, 2.0, 2, 8, 1.0, 3); },
                    ErrorCode::DegenerateResolution));
  CHECK(throws_code([] { build_polar_grid(1.0, 2.0, 5, 3, 1.0, 3); },
                    ErrorCode::DegenerateResolution));
  CHECK(throws_code([] { build_polar_grid(1.0, 2.0, 5, 8, 0.0, 3); },
                    ErrorCode::DegenerateResolution));
}

TEST_CASE("time lattice and trapezoid weights") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 3, 4, 2.0, 5);
  CHECK(g.dt() == doctest::Approx(0.5));
  CHECK(g.time(4) == doctest::Approx(2.0));
  double s = 0.0;
  for (double w : g.time_weights()) s += w;
  CHECK(s == doctest::Approx(2.0));
}

TEST_CASE("radial level function") {
  const PolarGrid g = build_polar_grid(0.5, 3.0, 9, 16, 1.0, 3);
  const Psi0Field f = construct_psi0_radial(g);
  CHECK(f.k0 == doctest::Approx(0.5));
  CHECK(f.k1 == doctest::Approx(3.0));
  CHECK(f.k1 - f.k0 == doctest::Approx(2.5));
  for (const auto& v : f.gradient) CHECK(v.norm() == doctest::Approx(1.0));
  for (int p : g.gamma0_nodes) CHECK(f.values[p] == f.k0);
  for (int p : g.gamma1_nodes) CHECK(f.values[p] == f.k1);
}

TEST_CASE("discrete gradient of a linear-in-r field is exact in the radial direction") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 7, 32, 1.0, 3);
  std::vector<double> v(g.n_space());
  for (int p = 0; p < g.n_space(); ++p) v[p] = 3.0 * g.radius(g.ring_of(p)) - 1.0;
  const PolarGradient pg = polar_gradient(g, v);
  for (int p = 0; p < g.n_space(); ++p) {
    CHECK(pg.dr[p] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(std::abs(pg.dt[p]) < 1e-12);
  }
}

TEST_CASE("flow construction reproduces the radial level function") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 65, 32, 1.0, 3);
  const Psi0Field seed = construct_psi0_radial(g);
  const FlowResult fr = construct_psi0_flow(g, seed);
  double err = 0.0;
  for (int p = 0; p < g.n_space(); ++p) {
    err = std::max(err, std::abs(fr.field.values[p] - g.radius(g.ring_of(p))));
  }
  CHECK(err <= 1e-4);
  CHECK(fr.gamma1_trace_spread <= 1e-4);
  for (int p : g.gamma1_nodes) CHECK(fr.field.values[p] == doctest::Approx(fr.field.k1));
  CHECK(fr.field.grad_min > 0.5);
}

TEST_CASE("flow construction from a perturbed seed") {
  // seed = r + 0.05 sin θ (r - 1)(2 - r): constant on both circles, nonradial inside
  auto seed_on = [](const PolarGrid& g) {
    std::vector<double> v(g.n_space());
    for (int p = 0; p < g.n_space(); ++p) {
      const double r = g.radius(g.ring_of(p));
      const double th = g.angle(g.column_of(p));
      v[p] = r + 0.05 * std::sin(th) * (r - 1.0) * (2.0 - r);
    }
    return psi0_from_values(g, v);
  };
  const PolarGrid g = build_polar_grid(1.0, 2.0, 33, 32, 1.0, 3);
  const FlowResult fr = construct_psi0_flow(g, seed_on(g));
  CHECK(fr.field.k0 == doctest::Approx(1.0));
  CHECK(fr.gamma1_trace_spread < 5e-3);
  CHECK(fr.field.grad_min > 0.5);
  // monotone along every ray
  for (int j = 0; j < g.n_theta; ++j) {
    for (int i = 1; i < g.n_r; ++i) {
      CHECK(fr.field.values[g.node(i, j)] > fr.field.values[g.node(i - 1, j)]);
    }
  }
  // resolution study: doubling n_r changes the common-node values by little
  const PolarGrid g2 = build_polar_grid(1.0, 2.0, 65, 32, 1.0, 3);
  const FlowResult fr2 = construct_psi0_flow(g2, seed_on(g2));
  double diff = 0.0;
  for (int i = 0; i < g.n_r; ++i) {
    for (int j = 0; j < g.n_theta; ++j) {
      diff = std::max(diff, std::abs(fr.field.values[g.node(i, j)] -
                                     fr2.field.values[g2.node(2 * i, j)]));
    }
  }
  CHECK(diff < 5e-3);
}

TEST_CASE("flow construction rejects a seed with a critical point") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 17, 16, 1.0, 3);
  std::vector<double> v(g.n_space());
  for (int p = 0; p < g.n_space(); ++p) {
    const double r = g.radius(g.ring_of(p));
    v[p] = (r - 1.5) * (r - 1.5);
  }
  const Psi0Field seed = psi0_from_values(g, v);
  CHECK(throws_code([&] { construct_psi0_flow(g, seed); }, ErrorCode::VanishingGradient));
}

TEST_CASE("subharmonic exponentiation accepts the smallest exponent") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 17, 16, 1.0, 3);
  const Psi0Field psi0 = construct_psi0_radial(g);
  const std::vector<double> grid{0.5, 1.0, 2.0};
  for (double a : {1.0, 4.0}) {
    const DiffusionField A = constant_diffusion(g, a * Matrix2::Identity());
    const SubharmonicResult res = exponentiate_for_subharmonicity(g, psi0, A, grid);
    // (μ² + μ/r) e^{μ r} > 0 for every r > 0, so the first exponent is admissible
    CHECK(res.mu == 0.5);
    CHECK(res.field.k0 == doctest::Approx(psi0.k0));
    CHECK(res.field.k1 == doctest::Approx(psi0.k1));
    // the mapped field is an increasing affine image of e^{μψ₀}: still subharmonic
    const auto lap = div_a_grad_interior(g, res.field.values, A);
    for (int i = 1; i < g.n_r - 1; ++i) {
      for (int j = 0; j < g.n_theta; ++j) CHECK(lap[g.node(i, j)] > 0.0);
    }
  }
}

TEST_CASE("subharmonic exponentiation error paths") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 9, 8, 1.0, 3);
  const Psi0Field psi0 = construct_psi0_radial(g);
  const std::vector<double> mu{0.5};
  Matrix2 ns;
  ns << 1.0, 0.3, 0.0, 1.0;
  CHECK(throws_code(
      [&] { exponentiate_for_subharmonicity(g, psi0, constant_diffusion(g, ns), mu); },
      ErrorCode::NonSymmetricDiffusion));
  CHECK(throws_code(
      [&] {
        exponentiate_for_subharmonicity(g, psi0, constant_diffusion(g, -Matrix2::Identity()), mu);
      },
      ErrorCode::EllipticityViolated));
  // ψ₀ = −r: e^{μ(−r)} has Δ = (μ² − μ/r)e^{−μr} < 0 for μ = 0.5 < 1/r on [1, 2]
  Psi0Field neg = psi0;
  for (auto& v : neg.values) v = 3.0 - v;
  const std::vector<double> small{0.25, 0.5};
  CHECK(throws_code(
      [&] {
        exponentiate_for_subharmonicity(g, neg, constant_diffusion(g, Matrix2::Identity()), small);
      },
      ErrorCode::NoAdmissibleMu));
  CHECK(throws_code(
      [&] {
        exponentiate_for_subharmonicity(g, psi0, DiffusionField(3, Matrix2::Identity()), mu);
      },
      ErrorCode::ShapeMismatch));
}

TEST_CASE("shift K examples") {
  Psi0Field f;
  f.k0 = 1.0;
  f.k1 = 2.0;
  CHECK(choose_shift_K(f, 0.0).K == doctest::Approx(6.0));
  f.k0 = 0.0;
  f.k1 = 1.0;
  CHECK(choose_shift_K(f, 0.0).K == doctest::Approx(7.0));
  f.k0 = 7.0;
  f.k1 = 8.0;
  CHECK(choose_shift_K(f, 0.0).K == doctest::Approx(0.0));
  CHECK(choose_shift_K(f, 0.5).K == doctest::Approx(0.5));
  f.k1 = 7.0;
  CHECK(throws_code([&] { choose_shift_K(f, 0.0); }, ErrorCode::InvalidArgument));
}

TEST_CASE("shift K keeps the level ratio at most 8/7") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_real_distribution<double> w(0.01, 4.0);
  for (int k = 0; k < 500; ++k) {
    Psi0Field f;
    f.k0 = u(rng);
    f.k1 = f.k0 + w(rng);
    const WeightParams p = choose_shift_K(f, 0.0);
    const double lo = f.k0 + p.K;
    const double hi = f.k1 + p.K;
    CHECK(lo > 0.0);
    CHECK(hi / lo <= 8.0 / 7.0 + 1e-12);
    const WeightParams pt = choose_shift_K(f, 0.0, true);
    const double tlo = pt.K + 2.0 * f.k0 - f.k1;
    const double thi = pt.K + f.k0;
    CHECK(tlo > 0.0);
    CHECK(thi / tlo <= 8.0 / 7.0 + 1e-12);
    CHECK((f.k1 + pt.K) / (f.k0 + pt.K) <= 8.0 / 7.0 + 1e-12);
  }
}

TEST_CASE("weight values at a known node") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 3, 4, 1.0, 3);
  const Psi0Field psi0 = construct_psi0_radial(g);
  WeightParams p = choose_shift_K(psi0, 0.0);
  p.lambda = 1.0;
  p.s = 1.0;
  const WeightFields w = eval_weights(g, psi0, p);
  const int node = g.gamma0_nodes.front();
  CHECK(w.psi[node] == doctest::Approx(7.0));
  CHECK(w.alpha[w.index(1, node)] == doctest::Approx(-646632.6330423019).epsilon(1e-12));
  CHECK(std::log(w.phi(1, node)) == doctest::Approx(7.0 + std::log(4.0)));
}

TEST_CASE("weight invariants") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 9, 8, 1.0, 9);
  const Psi0Field psi0 = construct_psi0_radial(g);
  WeightParams p = choose_shift_K(psi0, 0.0);
  p.lambda = 1.5;
  p.s = 2.0;
  const WeightFields w = eval_weights(g, psi0, p);
  for (int q = 0; q < g.n_space(); ++q) {
    CHECK(w.psi_tilde[q] == 2.0 * (p.K + psi0.k0) - w.psi[q]);
  }
  for (int m = 1; m < g.n_t - 1; ++m) {
    for (int q = 0; q < g.n_space(); ++q) {
      const std::size_t i = w.index(m, q);
      CHECK(w.alpha[i] < 0.0);
      CHECK(w.alpha_tilde[i] < 0.0);
      // e^{2sα} ∈ (0, 1]; it underflows in double, so check the exponent
      const double e = 2.0 * p.s * w.alpha[i];
      CHECK(std::isfinite(e));
      CHECK(e <= 0.0);
    }
    for (int q : g.gamma0_nodes) {
      CHECK(w.log_phi[w.index(m, q)] == w.log_phi_tilde[w.index(m, q)]);
      CHECK(w.alpha[w.index(m, q)] == w.alpha_tilde[w.index(m, q)]);
    }
    for (int q : g.gamma1_nodes) {
      CHECK(w.phi(m, q) > w.phi_tilde(m, q));
      CHECK(w.alpha[w.index(m, q)] > w.alpha_tilde[w.index(m, q)]);
    }
  }
  for (int m : {0, g.n_t - 1}) {
    for (int q = 0; q < g.n_space(); ++q) {
      CHECK(std::isinf(w.log_phi[w.index(m, q)]));
      CHECK(w.weighted(m, q, 3.0) == 0.0);
      CHECK(w.weighted(m, q, 1.0, true) == 0.0);
    }
  }
  // ∂_ν ψ < 0 on Γ₀ and > 0 on Γ₁; reversed for ψ̃
  for (int q : g.gamma0_nodes) {
    const Vector2 nu = -radial_unit(g.angle(g.column_of(q)));
    CHECK(psi0.gradient[q].dot(nu) < 0.0);
    CHECK((-psi0.gradient[q]).dot(nu) > 0.0);
  }
  for (int q : g.gamma1_nodes) {
    const Vector2 nu = radial_unit(g.angle(g.column_of(q)));
    CHECK(psi0.gradient[q].dot(nu) > 0.0);
    CHECK((-psi0.gradient[q]).dot(nu) < 0.0);
  }
}

TEST_CASE("reflection reduces to 2K - psi when psi0 vanishes on the inner circle") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 5, 8, 1.0, 5);
  const Psi0Field r = construct_psi0_radial(g);
  std::vector<double> v = r.values;
  for (auto& x : v) x -= 1.0;
  const Psi0Field psi0 = psi0_from_values(g, v);
  WeightParams p = choose_shift_K(psi0, 0.0);
  CHECK(p.K == doctest::Approx(7.0));
  const WeightFields w = eval_weights(g, psi0, p);
  for (int q = 0; q < g.n_space(); ++q) CHECK(w.psi_tilde[q] == 2.0 * p.K - w.psi[q]);
}

TEST_CASE("overflow guard") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 3, 4, 1.0, 3);
  const Psi0Field psi0 = construct_psi0_radial(g);
  WeightParams p = choose_shift_K(psi0, 0.0);
  p.lambda = 60.0;  // 1.5 · 60 · 8 = 720
  CHECK(code_of([&] { eval_weights(g, psi0, p); }) == ErrorCode::OverflowGuard);
  p.lambda = 59.0;  // 708
  CHECK_NOTHROW(eval_weights(g, psi0, p));
}

TEST_CASE("time derivative bounds of the weights") {
  const PolarGrid g = build_polar_grid(1.0, 2.0, 5, 8, 1.0, 41);
  const Psi0Field psi0 = construct_psi0_radial(g);
  WeightParams p = choose_shift_K(psi0, 0.0);
  TimeBoundRatios prev;
  for (double lambda : {1.0, 2.0}) {
    p.lambda = lambda;
    const WeightFields w = eval_weights(g, psi0, p);
    const TimeBoundReport rep = check_weight_time_bounds(w);
    CHECK(rep.finite);
    CHECK(rep.stable);
    // closed form: |φ_t|/φ² = |T − 2t| e^{−λψ}, |α_t|/φ² ≤ |T − 2t| e^{1.5λ‖ψ‖ − λψ}
    const double min_psi = psi0.k0 + p.K;
    const double phi_t_sup = std::exp(-lambda * min_psi);
    CHECK(rep.ratios.phi_t <= phi_t_sup * 1.25);
    CHECK(rep.ratios.phi_t >= phi_t_sup * 0.8);
    const double alpha_t_sup = std::exp(1.5 * lambda * p.psi_sup_norm - lambda * min_psi);
    CHECK(rep.ratios.alpha_t <= alpha_t_sup * 1.25);
    CHECK(std::abs(rep.refined.phi_t - rep.ratios.phi_t) <= 0.1 * rep.ratios.phi_t);
    if (lambda > 1.0) CHECK(rep.ratios.phi_t < prev.phi_t);
    prev = rep.ratios;
  }
  const PolarGrid small = build_polar_grid(1.0, 2.0, 3, 4, 1.0, 4);
  const WeightFields ws = eval_weights(small, psi0_from_values(small, construct_psi0_radial(small).values), p);
  CHECK(code_of([&] { check_weight_time_bounds(ws); }) == ErrorCode::DegenerateResolution);
}
