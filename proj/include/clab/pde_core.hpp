#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "clab/field.hpp"
#include "clab/geometry.hpp"

namespace clab {

/// Zero-order coupling coefficients c_il, either constant in time
/// (one n×n matrix per spatial node) or sampled on every space-time node.
class CouplingField {
 public:
  CouplingField() = default;
  /// Constant-in-time field filled with `matrix` at every node.
  CouplingField(int n, int n_space, const Eigen::MatrixXd& matrix);
  /// Time-dependent zero field.
  CouplingField(int n, int n_t, int n_space);

  int n() const { return n_; }
  int n_t() const { return n_t_; }
  int n_space() const { return n_space_; }
  bool time_dependent() const { return n_t_ > 0; }

  double operator()(int i, int l, int m, int p) const { return values_[index(i, l, m, p)]; }
  double& at(int i, int l, int m, int p) { return values_[index(i, l, m, p)]; }
  bool all_zero() const;

 private:
  std::size_t index(int i, int l, int m, int p) const {
    const std::size_t tm = time_dependent() ? static_cast<std::size_t>(m) : 0;
    return ((tm * n_space_ + p) * n_ + i) * n_ + l;
  }
  int n_ = 0;
  int n_t_ = 0;
  int n_space_ = 0;
  std::vector<double> values_;
};

/// Per-component boundary data β ∂_ν_A y + η y = 0. Index 0 holds the
/// inner circle, index 1 the outer circle; each vector has n_theta entries.
struct BoundaryCondition {
  std::array<std::vector<double>, 2> beta;
  std::array<std::vector<double>, 2> eta;
};

BoundaryCondition uniform_boundary(const PolarGrid& grid, double beta_inner, double eta_inner,
                                   double beta_outer, double eta_outer);

struct SystemCoefficients {
  int n = 1;
  std::vector<DiffusionField> a;               // per component
  std::vector<std::vector<Vector2>> b;         // per component, Cartesian drift
  CouplingField c;
  std::vector<BoundaryCondition> boundary;     // per component
};

/// Heat-type system: A = a·I, b = 0, constant coupling matrix, one boundary
/// condition shared by all components.
SystemCoefficients make_uniform_system(const PolarGrid& grid, int n, double diffusion,
                                       const Eigen::MatrixXd& coupling,
                                       const BoundaryCondition& bc);

/// Checks symmetry, ellipticity, β ∈ {0,1}, η ≥ 0, β + η > 0 and shapes.
/// Returns the ellipticity constant (smallest eigenvalue over all A_i).
double validate_coefficients(const SystemCoefficients& coeffs, const PolarGrid& grid);

/// Pointwise sum of two coupling fields as a time-dependent field on n_t levels.
CouplingField sum_couplings(const CouplingField& a, const CouplingField& b, int n_t);

/// Replaces the coupling field of `coeffs`.
SystemCoefficients with_coupling(SystemCoefficients coeffs, CouplingField c);

/// Discretization of −div(A∇·) + b·∇ for one component with its boundary
/// closure folded in. Dirichlet nodes (β = 0) carry identity rows.
struct DiscreteOperator {
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
  std::vector<char> dirichlet;
};

DiscreteOperator assemble_operator(const SystemCoefficients& coeffs, const PolarGrid& grid,
                                   int component);

enum class TimeScheme { BackwardEuler, CrankNicolson };

/// Implicit stepper for the coupled linear system. Factorizations are
/// reused across calls when the coupling is constant in time, so one solver
/// instance serves many sources on the same coefficients. Not thread-safe;
/// give each worker its own instance.
class ForwardSolver {
 public:
  ForwardSolver(SystemCoefficients coeffs, const PolarGrid& grid,
                TimeScheme scheme = TimeScheme::BackwardEuler);
  ~ForwardSolver();
  ForwardSolver(ForwardSolver&&) noexcept;
  ForwardSolver& operator=(ForwardSolver&&) noexcept;

  /// `y0` holds n_comp·n_space values, component-major.
  StateField solve(const SpaceTimeField& g, std::span<const double> y0) const;
  StateField solve(const SourceField& g, std::span<const double> y0) const {
    return solve(g.data(), y0);
  }

  const SystemCoefficients& coefficients() const;
  const PolarGrid& grid() const;
  const DiscreteOperator& op(int component) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

StateField solve_forward_linear(const SystemCoefficients& coeffs, const SpaceTimeField& g,
                                std::span<const double> y0, const PolarGrid& grid,
                                TimeScheme scheme = TimeScheme::BackwardEuler);

enum class HypothesisCase {
  CaseA,  // f_i = 0 whenever y_i = 0
  CaseB,  // f_i ≤ 0 whenever y_i = 0, and ∂f_i/∂y_l ≤ 0 for i ≠ l
};

/// Reaction terms f(t, x, y) and their Jacobian ∂f_i/∂y_l (row-major n×n).
struct NonlinearityModel {
  int n = 1;
  std::function<void(double t, const Vector2& x, std::span<const double> y, std::span<double> f)>
      f;
  std::function<void(double t, const Vector2& x, std::span<const double> y,
                     std::span<double> jac)>
      df;
  HypothesisCase hypothesis_case = HypothesisCase::CaseA;
};

NonlinearityModel zero_nonlinearity(int n);
/// n = 1, f(y) = y².
NonlinearityModel square_nonlinearity();
/// n = 2, f = (−y₂, −y₁).
NonlinearityModel cross_decay_nonlinearity();
/// f(y) = M y.
NonlinearityModel linear_nonlinearity(const Eigen::MatrixXd& m,
                                      HypothesisCase hc = HypothesisCase::CaseB);

/// Verifies f(t, x, 0) = 0 on a probe lattice of the grid; throws InvalidArgument otherwise.
void check_nonlinearity_probe(const NonlinearityModel& f, const PolarGrid& grid);

struct NewtonOptions {
  double tolerance = 1e-9;
  int max_iterations = 25;
  int max_halvings = 30;
};

/// Backward Euler with Newton iteration on the full coupled system.
StateField solve_forward_semilinear(const SystemCoefficients& coeffs, const NonlinearityModel& f,
                                    const SpaceTimeField& g, std::span<const double> y0,
                                    const PolarGrid& grid, const NewtonOptions& options = {});

/// Coefficients of the linear systems satisfied by a semilinear solution.
struct Linearization {
  /// c_i^y = ∫₀¹ ∂_{y_i} f_i(y₁, …, τy_i, …, y_n) dτ as a diagonal coupling.
  CouplingField diagonal;
  /// ḡ_i = −f_i(y with y_i = 0).
  SpaceTimeField gbar;
  /// c_il^y = ∫₀¹ ∂_{y_l} f_i(τy) dτ.
  CouplingField full;
};

Linearization linearize_semilinear(const NonlinearityModel& f, const StateField& y,
                                   const PolarGrid& grid);

/// Initial slice of zeros for `n` components.
std::vector<double> zero_initial(const PolarGrid& grid, int n);

/// Cartesian position of spatial node p.
Vector2 node_position(const PolarGrid& grid, int p);

}  // namespace clab
