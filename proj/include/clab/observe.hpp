#pragma once

#include <filesystem>
#include <vector>

#include "clab/field.hpp"
#include "clab/geometry.hpp"
#include "clab/pde_core.hpp"

namespace clab {

/// Values of an n-component field on one boundary circle at every time level.
/// Layout: component-major, then time, then angular index.
struct BoundarySeries {
  int n_comp = 0;
  int n_t = 0;
  int n_theta = 0;
  int ring = 0;  // radial index of the circle
  std::vector<double> values;

  BoundarySeries() = default;
  BoundarySeries(int comps, const PolarGrid& grid, int ring_index, double fill = 0.0);

  std::size_t index(int c, int m, int j) const {
    return (static_cast<std::size_t>(c) * n_t + m) * n_theta + j;
  }
  double& at(int c, int m, int j) { return values[index(c, m, j)]; }
  double at(int c, int m, int j) const { return values[index(c, m, j)]; }
  bool same_shape(const BoundarySeries& o) const {
    return n_comp == o.n_comp && n_t == o.n_t && n_theta == o.n_theta && ring == o.ring;
  }
};

/// ζ_i = γ_i ∂_ν_{A_i} y_i + δ_i y_i measured on Γ₁.
struct ObservationSpec {
  std::vector<std::vector<double>> gamma;  // [component][j]
  std::vector<std::vector<double>> delta;
  double epsilon = 1e-8;
};

ObservationSpec uniform_observation(const PolarGrid& grid, int n, double gamma, double delta,
                                    double epsilon = 1e-8);

/// Trace and conormal derivative of y on one boundary circle.
struct BoundaryTrace {
  BoundarySeries trace;
  BoundarySeries conormal;
};

enum class Boundary { Gamma0, Gamma1 };

/// min over Γ₁ nodes and components of γη − βδ; throws CompatibilityViolated
/// naming the offending node when it falls below spec.epsilon.
double check_compatibility(const ObservationSpec& spec, const SystemCoefficients& coeffs,
                           const PolarGrid& grid);

/// Restriction of y and of (A∇y)·ν to Γ₁ (or Γ₀); ∂_r y uses the one-sided
/// three-node stencil, ∂_θ y the periodic central difference.
BoundaryTrace extract_trace_and_conormal(const StateField& y, const SystemCoefficients& coeffs,
                                         const PolarGrid& grid,
                                         Boundary side = Boundary::Gamma1);

/// max |β ∂_ν y + η y| over the circle of `bt`.
double boundary_residual(const BoundaryTrace& bt, const SystemCoefficients& coeffs,
                         const PolarGrid& grid);

BoundarySeries apply_observation(const ObservationSpec& spec, const BoundaryTrace& bt);

struct TraceRecovery {
  BoundaryTrace values;
  std::vector<double> k_node;  // [component * n_theta + j]
  double k_max = 0.0;
};

/// Solves β ∂_ν y + η y = 0, γ ∂_ν y + δ y = ζ nodewise on Γ₁.
TraceRecovery recover_trace_from_observation(const BoundarySeries& zeta,
                                             const ObservationSpec& spec,
                                             const SystemCoefficients& coeffs,
                                             const PolarGrid& grid);

/// (∫∫ |v|² r dθ dt)^{1/2}, summed over components.
double norm_L2_Sigma(const PolarGrid& grid, const BoundarySeries& series);
inline double norm_L2_Sigma1(const PolarGrid& grid, const BoundarySeries& series) {
  return norm_L2_Sigma(grid, series);
}

/// log ∫∫ (sλφ)^p |v|² e^{2sα} r dθ dt by nodal quadrature on the series' circle.
/// Coarse relative to the Carleman quadrature; meant for diagnostics.
double log_weighted_Sigma(const PolarGrid& grid, const BoundarySeries& series,
                          const WeightFields& weights, double power);
/// (exp of the above)^{1/2}; underflows to 0 for steep weights.
double norm_weighted_Sigma(const PolarGrid& grid, const BoundarySeries& series,
                           const WeightFields& weights, double power);

/// CSV with header `t,theta,component,zeta`.
void write_observation_csv(const std::filesystem::path& path, const PolarGrid& grid,
                           const BoundarySeries& series);
BoundarySeries read_observation_csv(const std::filesystem::path& path, const PolarGrid& grid);

}  // namespace clab
