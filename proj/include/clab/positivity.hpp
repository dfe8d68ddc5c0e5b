#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "clab/field.hpp"
#include "clab/geometry.hpp"
#include "clab/pde_core.hpp"

namespace clab {

/// Location of a node where a hypothesis or a sign fails.
struct Witness {
  int component = 0;  // i
  int other = -1;     // l for coupling/Jacobian entries
  int time_index = 0;
  int node = 0;
  double t = 0.0;
  double r = 0.0;
  double theta = 0.0;
  double value = 0.0;
};

struct SignCheck {
  bool pass = true;
  std::optional<Witness> witness;  // first counterexample
  std::string message;
};

/// c_il ≤ 0 for i ≠ l at every stored node.
SignCheck check_sign_hypotheses(const SystemCoefficients& coeffs, const PolarGrid& grid);

struct ProbeOptions {
  std::vector<double> levels{0.0, 0.25, 1.0, 4.0};  // nonnegative probe values of each y_l
  int node_stride = 7;
  int time_stride = 3;
};

/// Semilinear hypotheses on a probe lattice of nodes × times × y ≥ 0.
/// CaseA: f_i = 0 whenever y_i = 0. CaseB: f_i ≤ 0 whenever y_i = 0 and
/// ∂f_i/∂y_l ≤ 0 for i ≠ l.
SignCheck check_sign_hypotheses(const NonlinearityModel& f, const PolarGrid& grid,
                                const ProbeOptions& options = {});

struct TimeCheck {
  double t = 0.0;
  int time_index = 0;
  std::vector<double> min_per_component;
  bool improving_pass = false;   // every relevant component > floor everywhere
  bool near_violation = false;   // min within a factor 10 below the floor
  double zero_set_fraction = 0.0;  // quadrature-weight share of nodes with |y| ≤ floor
  /// ∫₀^t |g| when the zero set has positive measure (else NaN).
  double source_l1_before = 0.0;
  /// The improving property holds, or the zero set is explained by vanishing data.
  bool consistent = false;
};

struct PositivityReport {
  double min_value = 0.0;
  double max_abs = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  std::optional<Witness> first_violation;  // most negative node when below −tolerance
  double floor = 0.0;
  std::vector<int> relevant_components;
  std::vector<TimeCheck> checks;
  int near_violations = 0;
  bool improving_pass = true;  // all checks consistent (near-violations excepted)
};

inline constexpr double kDefaultPositivityTolerance = 1e-8;
inline constexpr double kDefaultImprovingFloor = 1e-12;
inline constexpr double kZeroSetMeasure = 1e-3;

/// min y ≥ −rel_tolerance·max|y| over the whole trajectory.
PositivityReport run_positivity_check(const StateField& y, const PolarGrid& grid,
                                      double rel_tolerance = kDefaultPositivityTolerance);

/// Strict positivity of the `components` (all when empty) at each time of
/// `t_check`, which must lie on the time lattice in (0, T]. `g` (optional)
/// supplies ∫₀^t |g| for times whose zero set has positive measure.
PositivityReport run_positivity_improving_check(const StateField& y, const PolarGrid& grid,
                                                std::span<const double> t_check,
                                                double rel_floor = kDefaultImprovingFloor,
                                                const SpaceTimeField* g = nullptr,
                                                std::vector<int> components = {});

/// Components reachable from those with nonzero data through negative
/// off-diagonal couplings (edge l → i when c_il < 0).
std::vector<int> relevant_components(const SystemCoefficients& coeffs, const SpaceTimeField& g,
                                     std::span<const double> y0);

/// Solves through z = e^{−γt} y with γ = 2‖c‖∞ + 1 when some c_ii < 0, so the
/// rescaled system has nonnegative diagonal coupling; returns y and γ (0 if
/// no rescaling was needed).
struct RescaledSolve {
  StateField y;
  double gamma = 0.0;
};
RescaledSolve solve_with_rescaling(const SystemCoefficients& coeffs, const SpaceTimeField& g,
                                   std::span<const double> y0, const PolarGrid& grid);

struct PositivityInstance {
  SystemCoefficients coeffs;
  SpaceTimeField g;
  std::vector<double> y0;
};

struct InstanceOptions {
  int n = 2;
  bool allow_dirichlet = true;
  bool allow_zero_data = true;
  double max_drift = 1.0;
};

/// Random instance satisfying the ellipticity, boundary and sign hypotheses:
/// isotropic diffusion a(x)I with a ∈ [0.5, 2], constant drift, c_il ≤ 0 off
/// the diagonal, nonnegative bump data.
PositivityInstance random_positivity_instance(const PolarGrid& grid, const InstanceOptions& opt,
                                              std::mt19937_64& rng);

/// Nonnegative space-time source supported near (r_c, θ_c) with the
/// indicator profile of the box |r − r_c| < dr, |θ − θ_c| < dθ.
SpaceTimeField box_source(const PolarGrid& grid, int n, int component, double r_c, double dr,
                          double theta_c, double dtheta, double height = 1.0);

}  // namespace clab
