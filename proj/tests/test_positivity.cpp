#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "clab/errors.hpp"
#include "clab/positivity.hpp"

using namespace clab;

namespace {

SystemCoefficients heat(const PolarGrid& g, int n, const Eigen::MatrixXd& c, double beta = 1,
                        double eta = 0) {
  return make_uniform_system(g, n, 1.0, c, uniform_boundary(g, beta, eta, beta, eta));
}

}  // namespace

TEST_CASE("linear sign hypotheses") {
  const PolarGrid g = build_polar_grid(1, 2, 5, 8, 1.0, 3);
  Eigen::MatrixXd c(2, 2);
  c << -1.0, -0.5, 0.0, -2.0;
  CHECK(check_sign_hypotheses(heat(g, 2, c), g).pass);

  SystemCoefficients bad = heat(g, 2, c);
  bad.c.at(0, 1, 0, 13) = 0.1;
  const SignCheck r = check_sign_hypotheses(bad, g);
  CHECK_FALSE(r.pass);
  REQUIRE(r.witness.has_value());
  CHECK(r.witness->component == 0);
  CHECK(r.witness->other == 1);
  CHECK(r.witness->node == 13);
  CHECK(r.witness->value == doctest::Approx(0.1));
}

TEST_CASE("semilinear sign hypotheses") {
  const PolarGrid g = build_polar_grid(1, 2, 5, 8, 1.0, 5);
  CHECK(check_sign_hypotheses(cross_decay_nonlinearity(), g).pass);
  CHECK(check_sign_hypotheses(square_nonlinearity(), g).pass);

  Eigen::MatrixXd m(2, 2);
  m << 0.0, 0.3, -1.0, 0.0;  // f₁ = 0.3 y₂ > 0 at y₁ = 0
  const SignCheck r = check_sign_hypotheses(linear_nonlinearity(m), g);
  CHECK_FALSE(r.pass);
  REQUIRE(r.witness.has_value());
  CHECK(r.witness->component == 0);

  NonlinearityModel a = linear_nonlinearity(m, HypothesisCase::CaseA);
  CHECK_FALSE(check_sign_hypotheses(a, g).pass);
}

TEST_CASE("heat with unit source stays nonnegative") {
  const PolarGrid g = build_polar_grid(1, 2, 9, 16, 1.0, 9);
  const SpaceTimeField src(1, g, 1.0);
  const StateField y = solve_forward_linear(heat(g, 1, Eigen::MatrixXd::Zero(1, 1)), src,
                                            zero_initial(g, 1), g);
  const PositivityReport r = run_positivity_check(y, g);
  CHECK(r.pass);
  CHECK(r.min_value == 0.0);
  CHECK(r.max_abs == doctest::Approx(1.0).epsilon(1e-10));
  CHECK_FALSE(r.first_violation.has_value());
}

TEST_CASE("zero data") {
  const PolarGrid g = build_polar_grid(1, 2, 5, 8, 1.0, 5);
  const SpaceTimeField src(1, g);
  const StateField y = solve_forward_linear(heat(g, 1, Eigen::MatrixXd::Zero(1, 1)), src,
                                            zero_initial(g, 1), g);
  const PositivityReport r = run_positivity_check(y, g);
  CHECK(r.pass);
  CHECK(r.min_value == 0.0);
  const double times[] = {0.25, 0.5, 1.0};
  const PositivityReport imp = run_positivity_improving_check(y, g, times, kDefaultImprovingFloor, &src);
  for (const auto& c : imp.checks) {
    CHECK(c.zero_set_fraction == doctest::Approx(1.0));
    CHECK_FALSE(c.improving_pass);
    CHECK(c.source_l1_before == 0.0);
    CHECK(c.consistent);
  }
  CHECK(imp.improving_pass);
}

TEST_CASE("violation witness names the most negative node") {
  const PolarGrid g = build_polar_grid(1, 2, 5, 8, 1.0, 5);
  StateField y{SpaceTimeField(2, g, 1.0)};
  y.data.at(1, 3, 17) = -0.5;
  y.data.at(0, 2, 4) = -0.1;
  const PositivityReport r = run_positivity_check(y, g);
  CHECK_FALSE(r.pass);
  CHECK(r.min_value == -0.5);
  REQUIRE(r.first_violation.has_value());
  CHECK(r.first_violation->component == 1);
  CHECK(r.first_violation->time_index == 3);
  CHECK(r.first_violation->node == 17);
  CHECK(r.first_violation->t == doctest::Approx(0.75));
}

TEST_CASE("coupling carries positivity into the unforced component") {
  const PolarGrid g = build_polar_grid(1, 2, 9, 16, 1.0, 9);
  Eigen::MatrixXd c(2, 2);
  c << 0.0, -1.0, -1.0, 0.0;
  SpaceTimeField src(2, g);
  for (int m = 0; m < g.n_t; ++m) {
    for (int p = 0; p < g.n_space(); ++p) src.at(0, m, p) = 1.0;
  }
  const auto s = heat(g, 2, c);
  const StateField y = solve_forward_linear(s, src, zero_initial(g, 2), g);
  CHECK(run_positivity_check(y, g).pass);
  CHECK(relevant_components(s, src, zero_initial(g, 2)) == std::vector<int>{0, 1});
  const double t[] = {0.5};
  const auto imp = run_positivity_improving_check(y, g, t);
  CHECK(imp.checks[0].improving_pass);
  CHECK(imp.checks[0].min_per_component[1] > 0.0);

  const auto decoupled = heat(g, 2, Eigen::MatrixXd::Zero(2, 2));
  CHECK(relevant_components(decoupled, src, zero_initial(g, 2)) == std::vector<int>{0});
}

TEST_CASE("localized bump reaches the far side of the annulus") {
  const PolarGrid g = build_polar_grid(1, 2, 17, 32, 1.0, 17);
  const SpaceTimeField src = box_source(g, 1, 0, 1.5, 0.1, std::numbers::pi / 16, std::numbers::pi / 16);
  const StateField y = solve_forward_linear(heat(g, 1, Eigen::MatrixXd::Zero(1, 1), 1, 1), src,
                                            zero_initial(g, 1), g);
  const double t[] = {0.5};
  const auto r = run_positivity_improving_check(y, g, t, kDefaultImprovingFloor, &src);
  CHECK(r.checks[0].improving_pass);
  CHECK(r.checks[0].zero_set_fraction == 0.0);
  const int far = g.node(g.n_r - 1, g.n_theta / 2 + 1);
  CHECK(y.data.at(0, g.n_t / 2, far) > 0.0);
}

TEST_CASE("initial bump without source becomes strictly positive") {
  const PolarGrid g = build_polar_grid(1, 2, 17, 32, 1.0, 17);
  std::vector<double> y0(g.n_space(), 0.0);
  y0[g.node(8, 0)] = 1.0;
  const StateField y = solve_forward_linear(heat(g, 1, Eigen::MatrixXd::Zero(1, 1)),
                                            SpaceTimeField(1, g), y0, g);
  const double t[] = {0.25, 0.5, 1.0};
  const auto r = run_positivity_improving_check(y, g, t);
  for (const auto& c : r.checks) CHECK(c.improving_pass);
}

TEST_CASE("check times must be on the lattice") {
  const PolarGrid g = build_polar_grid(1, 2, 5, 8, 1.0, 5);
  const StateField y{SpaceTimeField(1, g, 1.0)};
  const double bad[] = {0.3};
  const double zero[] = {0.0};
  CHECK_THROWS_AS(run_positivity_improving_check(y, g, bad), Error);
  CHECK_THROWS_AS(run_positivity_improving_check(y, g, zero), Error);
}

TEST_CASE("near violations are recorded separately") {
  const PolarGrid g = build_polar_grid(1, 2, 5, 8, 1.0, 5);
  StateField y{SpaceTimeField(1, g, 1.0)};
  y.data.at(0, 2, 6) = 0.5e-12;  // between floor/10 and floor
  const double t[] = {0.5};
  const auto r = run_positivity_improving_check(y, g, t);
  CHECK_FALSE(r.checks[0].improving_pass);
  CHECK(r.checks[0].near_violation);
  CHECK(r.near_violations == 1);
  CHECK(r.improving_pass);
  y.data.at(0, 2, 6) = 0.0;
  const auto r2 = run_positivity_improving_check(y, g, t);
  CHECK_FALSE(r2.checks[0].near_violation);
  CHECK_FALSE(r2.improving_pass);
}

TEST_CASE("rescaling reproduces the direct solve") {
  const PolarGrid g = build_polar_grid(1, 2, 9, 16, 1.0, 33);
  Eigen::MatrixXd c(2, 2);
  c << -1.0, -0.5, -0.2, 0.5;
  const auto s = heat(g, 2, c, 1, 1);
  const SpaceTimeField src(2, g, 1.0);
  const RescaledSolve rs = solve_with_rescaling(s, src, zero_initial(g, 2), g);
  CHECK(rs.gamma == doctest::Approx(3.0));
  const StateField direct = solve_forward_linear(s, src, zero_initial(g, 2), g);
  // Both are first-order accurate in time; they agree to O(Δt) relative.
  double diff = 0.0;
  for (std::size_t q = 0; q < direct.data.values.size(); ++q) {
    diff = std::max(diff, std::abs(direct.data.values[q] - rs.y.data.values[q]));
  }
  CHECK(diff < 0.1 * direct.data.max_abs());
  CHECK(run_positivity_check(rs.y, g).pass);

  const auto damped = heat(g, 2, Eigen::MatrixXd::Identity(2, 2));
  CHECK(solve_with_rescaling(damped, src, zero_initial(g, 2), g).gamma == 0.0);
}

TEST_CASE("scalar and system paths agree bit for bit") {
  const PolarGrid g = build_polar_grid(1, 2, 9, 16, 1.0, 9);
  std::mt19937_64 rng(5);
  InstanceOptions o;
  o.n = 1;
  const PositivityInstance inst = random_positivity_instance(g, o, rng);
  const StateField y = solve_forward_linear(inst.coeffs, inst.g, inst.y0, g);
  StateField twice{SpaceTimeField(2, g)};
  std::copy(y.data.values.begin(), y.data.values.end(), twice.data.values.begin());
  std::copy(y.data.values.begin(), y.data.values.end(),
            twice.data.values.begin() + static_cast<long>(y.data.values.size()));
  CHECK(run_positivity_check(y, g).min_value == run_positivity_check(twice, g).min_value);
}

TEST_CASE("random instances satisfy the hypotheses and stay nonnegative") {
  const PolarGrid g = build_polar_grid(1, 2, 9, 16, 1.0, 9);
  std::mt19937_64 rng(77);
  for (int k = 0; k < 30; ++k) {
    InstanceOptions o;
    o.n = 1 + k % 3;
    const PositivityInstance inst = random_positivity_instance(g, o, rng);
    REQUIRE(check_sign_hypotheses(inst.coeffs, g).pass);
    validate_coefficients(inst.coeffs, g);
    for (double v : inst.g.values) REQUIRE(v >= 0.0);
    for (double v : inst.y0) REQUIRE(v >= 0.0);
    CHECK(run_positivity_check(solve_with_rescaling(inst.coeffs, inst.g, inst.y0, g).y, g).pass);
  }
}
