#pragma once

#include <vector>

#include "clab/pde_core.hpp"

namespace clab {

/// Manufactured solution y = t·(r−r0)²(r1−r)² of y_t − Δy = g on the annulus.
/// Both y and ∂_r y vanish on the two circles, so every Robin or Dirichlet
/// condition with zero data is satisfied.
double manufactured_value(double r0, double r1, double t, double r);
double manufactured_source(double r0, double r1, double t, double r);
SpaceTimeField manufactured_field(const PolarGrid& grid, bool source);

struct ConvergenceOptions {
  double r0 = 1.0;
  double r1 = 2.0;
  double T = 1.0;
  int n_theta = 8;
  /// Spatial study: n_r doubles from this value, n_t held at space_n_t.
  int space_n_r = 9;
  int space_n_t = 65;
  /// Temporal study: n_t doubles from this value on a fixed n_r.
  int time_n_t = 9;
  int time_n_r = 17;
  int levels = 4;
};

struct ConvergenceRow {
  int n_r = 0;
  int n_t = 0;
  double error = 0.0;
  /// log2 of the error ratio to the previous row; NaN for the first row.
  double slope = 0.0;
};

struct ConvergenceTable {
  TimeScheme scheme = TimeScheme::BackwardEuler;
  std::vector<ConvergenceRow> space;
  std::vector<ConvergenceRow> time;
};

/// Space rows carry the L²(Q) error against the exact solution. Time rows
/// carry ‖y_Δt − y_{Δt/2}‖ on the coarse lattice, since the manufactured
/// solution is linear in t and leaves only a small semi-discrete time error.
ConvergenceTable run_convergence_study(const ConvergenceOptions& opt, TimeScheme scheme);

}  // namespace clab
