#include <doctest.h>

#include <cmath>

#include "clab/convergence.hpp"
#include "clab/errors.hpp"

using namespace clab;

TEST_CASE("manufactured source matches finite differences of the solution") {
  const double r0 = 1.0, r1 = 2.0, h = 1e-4;
  for (double r : {1.1, 1.5, 1.93}) {
    for (double t : {0.0, 0.4, 1.0}) {
      auto y = [&](double tt, double rr) { return manufactured_value(r0, r1, tt, rr); };
      const double yt = (y(t + h, r) - y(t - h, r)) / (2 * h);
      const double yrr = (y(t, r + h) - 2 * y(t, r) + y(t, r - h)) / (h * h);
      const double yr = (y(t, r + h) - y(t, r - h)) / (2 * h);
      CHECK(manufactured_source(r0, r1, t, r) == doctest::Approx(yt - yrr - yr / r).epsilon(1e-6));
    }
  }
  CHECK(manufactured_value(r0, r1, 0.7, 1.0) == 0.0);
  CHECK(manufactured_value(r0, r1, 0.7, 2.0) == 0.0);
}

TEST_CASE("Richardson slopes of the manufactured solution") {
  const ConvergenceOptions opt;
  const ConvergenceTable be = run_convergence_study(opt, TimeScheme::BackwardEuler);
  const ConvergenceTable cn = run_convergence_study(opt, TimeScheme::CrankNicolson);
  REQUIRE(be.space.size() == 4);
  REQUIRE(be.time.size() == 4);
  CHECK(std::isnan(be.space[0].slope));
  for (std::size_t k = 1; k < 4; ++k) {
    CHECK(be.space[k].slope == doctest::Approx(2.0).epsilon(0.15));
    CHECK(cn.space[k].slope == doctest::Approx(2.0).epsilon(0.15));
    CHECK(be.time[k].slope == doctest::Approx(1.0).epsilon(0.2));
    CHECK(cn.time[k].slope == doctest::Approx(2.0).epsilon(0.15));
  }
  CHECK(cn.time.back().error < be.time.back().error);
}

TEST_CASE("convergence study validates its options") {
  ConvergenceOptions opt;
  opt.levels = 1;
  CHECK_THROWS_AS(run_convergence_study(opt, TimeScheme::BackwardEuler), Error);
}
