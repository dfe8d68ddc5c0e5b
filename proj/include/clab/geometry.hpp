#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace clab {

using Matrix2 = Eigen::Matrix2d;
using Vector2 = Eigen::Vector2d;

/// Which boundary circle plays the role of the unobserved component Γ₀.
enum class Orientation { InnerIsGamma0, OuterIsGamma0 };

/// Tensor-product polar grid of the annulus r0 ≤ r ≤ r1 together with a
/// uniform time lattice on [0, T].
///
/// Spatial nodes are numbered `i * n_theta + j` with radial index i and
/// angular index j; the angular direction is periodic. Quadrature weights
/// are the trapezoidal rule in r times r·Δθ, which integrates the area
/// element exactly for fields that are linear in r.
struct PolarGrid {
  double r0 = 1.0;
  double r1 = 2.0;
  int n_r = 0;
  int n_theta = 0;
  double T = 1.0;
  int n_t = 0;
  Orientation orientation = Orientation::InnerIsGamma0;
  std::vector<int> gamma0_nodes;
  std::vector<int> gamma1_nodes;
  std::vector<double> quad_weights;

  int n_space() const { return n_r * n_theta; }
  double h_r() const { return (r1 - r0) / (n_r - 1); }
  double h_theta() const;
  double dt() const { return T / (n_t - 1); }
  double radius(int i) const { return r0 + i * h_r(); }
  double angle(int j) const { return j * h_theta(); }
  double time(int m) const { return m * dt(); }
  int node(int i, int j) const {
    const int jj = ((j % n_theta) + n_theta) % n_theta;
    return i * n_theta + jj;
  }
  int ring_of(int p) const { return p / n_theta; }
  int column_of(int p) const { return p % n_theta; }
  /// Radial index of the Γ₀ / Γ₁ circle.
  int gamma0_ring() const { return orientation == Orientation::InnerIsGamma0 ? 0 : n_r - 1; }
  int gamma1_ring() const { return orientation == Orientation::InnerIsGamma0 ? n_r - 1 : 0; }
  double gamma0_radius() const { return radius(gamma0_ring()); }
  double gamma1_radius() const { return radius(gamma1_ring()); }
  /// Trapezoidal weights of the time lattice.
  std::vector<double> time_weights() const;
  /// Arc-length weights r·Δθ of the nodes on circle `ring`.
  double arc_weight(int ring) const { return radius(ring) * h_theta(); }
  double area() const;
};

PolarGrid build_polar_grid(double r0, double r1, int n_r, int n_theta, double T, int n_t,
                           Orientation orientation = Orientation::InnerIsGamma0);

/// Level function of the annulus: constant k0 on Γ₀, k1 on Γ₁, nonvanishing gradient.
struct Psi0Field {
  std::vector<double> values;
  std::vector<Vector2> gradient;  // Cartesian components
  double k0 = 0.0;
  double k1 = 0.0;
  double grad_min = 0.0;
};

/// Builds a Psi0Field from nodal values: discrete gradient, boundary levels
/// (min over Γ₀ and max over Γ₁) and the gradient floor.
Psi0Field psi0_from_values(const PolarGrid& grid, std::vector<double> values);

/// ψ₀(r, θ) = r (or −r when Γ₀ is the outer circle).
Psi0Field construct_psi0_radial(const PolarGrid& grid);

struct FlowOptions {
  double gradient_tolerance = 1e-6;
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
};

struct FlowResult {
  Psi0Field field;
  /// max − min of the arc parameter on Γ₁ before the trace was levelled.
  double gamma1_trace_spread = 0.0;
};

/// Level function obtained from the normalized gradient flow of `seed`:
/// every node is traced backwards along F = ∇ψ/|∇ψ|² until it hits Γ₀, and
/// ψ₀ is the arc parameter of the hit (offset by the mean seed level on Γ₀).
/// The Γ₁ trace is levelled to its mean; the spread before levelling is
/// returned for diagnostics.
FlowResult construct_psi0_flow(const PolarGrid& grid, const Psi0Field& seed,
                               const FlowOptions& options = {});

/// Per-node symmetric diffusion matrix in Cartesian components.
using DiffusionField = std::vector<Matrix2>;

DiffusionField constant_diffusion(const PolarGrid& grid, const Matrix2& a);

struct SubharmonicResult {
  Psi0Field field;
  double mu = 0.0;
};

std::vector<double> default_mu_grid();

/// Replaces ψ₀ by e^{μψ₀}, mapped affinely back onto [k0, k1], for the
/// smallest μ of `mu_grid` whose discrete Δ_A is positive at all interior nodes.
SubharmonicResult exponentiate_for_subharmonicity(const PolarGrid& grid, const Psi0Field& psi0,
                                                  const DiffusionField& a,
                                                  std::span<const double> mu_grid);

struct WeightParams {
  double lambda = 1.0;
  double s = 1.0;
  double K = 0.0;
  double mu = 0.0;
  double psi_sup_norm = 0.0;
};

/// Minimal shift with (k1 + K)/(k0 + K) ≤ 8/7, plus `margin`. With
/// `tilde_ratio` the shift also enforces the same ratio for the reflection ψ̃.
WeightParams choose_shift_K(const Psi0Field& psi0, double margin, bool tilde_ratio = false);

/// ψ = ψ₀ + K, its reflection ψ̃ = 2(K + k0) − ψ about the Γ₀ level, and the
/// space-time Carleman weights φ, α, φ̃, α̃ built from them. For ψ₀ vanishing
/// on Γ₀ the reflection is ψ̃ = 2K − ψ.
///
/// Space-time arrays are indexed `m * n_space + p`. At t = 0 and t = T the
/// weights are singular; φ is stored as +∞, α as −∞ and every weighted
/// product φ^p e^{2sα} as exactly 0 (its limit).
struct WeightFields {
  WeightParams params;
  double T = 1.0;
  int n_t = 0;
  int n_space = 0;
  double reflection_level = 0.0;
  std::vector<double> times;
  std::vector<double> psi;
  std::vector<double> psi_tilde;
  std::vector<double> log_phi;
  std::vector<double> alpha;
  std::vector<double> log_phi_tilde;
  std::vector<double> alpha_tilde;

  std::size_t index(int m, int p) const { return static_cast<std::size_t>(m) * n_space + p; }
  double phi(int m, int p) const;
  double phi_tilde(int m, int p) const;
  /// log(φ^power e^{2sα}); −∞ at the time endpoints.
  double log_weighted(int m, int p, double power, bool tilde = false) const;
  /// φ^power e^{2sα} with the endpoint convention.
  double weighted(int m, int p, double power, bool tilde = false) const;
  bool endpoint(int m) const { return m == 0 || m == n_t - 1; }
};

WeightFields eval_weights(const PolarGrid& grid, const Psi0Field& psi0, const WeightParams& params);

struct TimeBoundRatios {
  double phi_t = 0.0;     // max |φ_t| / φ²
  double alpha_t = 0.0;   // max |α_t| / φ²
  double alpha_tt = 0.0;  // max |α_tt| / φ³
};

struct TimeBoundReport {
  TimeBoundRatios ratios;          // at the grid's time resolution
  TimeBoundRatios refined;         // at doubled time resolution
  TimeBoundRatios tilde;           // φ̃, α̃ analogues (informational)
  bool finite = false;
  bool stable = false;             // every ratio changes by less than 2×
};

/// Discrete estimate of the constants in |φ_t| ≤ Cφ², |α_t| ≤ Cφ², |α_tt| ≤ Cφ³
/// using central differences over the interior time nodes.
TimeBoundReport check_weight_time_bounds(const WeightFields& weights);

}  // namespace clab
