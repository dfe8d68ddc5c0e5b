#pragma once

#include <span>
#include <vector>

#include "clab/field.hpp"
#include "clab/geometry.hpp"
#include "clab/observe.hpp"

namespace clab {

struct QuadratureOptions {
  /// Extra geometric refinement levels beyond log2 of the weight's decay.
  int grading_extra = 4;
  /// Evaluate with α − alpha_offset in place of α.
  double alpha_offset = 0.0;
};

/// Product-integration rule for ∫ F φ^p e^{2sα} over Q, Σ₀ and Σ₁ with F
/// interpolated bilinearly in (t, r) and by the trapezoid rule in θ.
///
/// The weight moments are integrated per cell from the closed form with ψ
/// linear in r, using Gauss–Legendre on pieces graded geometrically towards
/// the weight's peak, so the rule stays accurate when e^{2sα} is concentrated
/// far below the grid spacing. Everything is kept in
/// log space. Cells whose rigorous upper bound lies more than ~800 below
/// the largest bound are dropped: their contribution is below double
/// resolution. Columns with identical ψ profiles share their tables.
class WeightedQuadrature {
 public:
  WeightedQuadrature(const PolarGrid& grid, const WeightFields& weights,
                     std::vector<double> interior_powers = {0.0, 1.0, 3.0},
                     std::vector<double> boundary_powers = {2.0, 3.0},
                     const QuadratureOptions& options = {});

  /// log ∫_Q F φ^p e^{2sα} − log_scale(); `data` holds n_t·n_space nonnegative values.
  double log_interior(std::span<const double> data, double power) const;
  /// log ∫ F φ^p e^{2sα} r dθ dt − log_scale() over the circle `ring`; `data` is n_t·n_theta.
  double log_boundary(std::span<const double> data, int ring, double power) const;
  /// 2s(α_ref − alpha_offset) with α_ref the peak of α over Q. Integrals are
  /// returned relative to this level because |2sα| can exceed 10¹⁵, where a
  /// double no longer resolves O(1) differences.
  double log_scale() const { return log_scale_; }

  const WeightParams& params() const { return params_; }
  const PolarGrid& grid() const { return grid_; }
  /// Number of cell moment sets actually integrated (diagnostic).
  long evaluated_cells() const { return evaluated_; }

 private:
  struct Table {
    double power = 0.0;
    // [class][(m * (n_r − 1) + i) * 4 + 2a + b], a: time corner, b: radial corner
    std::vector<std::vector<double>> log_moments;
  };
  struct BoundaryTable {
    double power = 0.0;
    int ring = 0;
    // [j][m * 2 + a]
    std::vector<std::vector<double>> log_moments;
  };
  const Table& table(double power) const;
  const BoundaryTable& boundary_table(int ring, double power) const;

  PolarGrid grid_;
  WeightParams params_;
  QuadratureOptions options_;
  std::vector<std::vector<double>> psi_columns_;  // distinct radial ψ profiles
  std::vector<int> column_class_;                 // j → profile index
  std::vector<Table> tables_;
  std::vector<BoundaryTable> boundary_tables_;
  long evaluated_ = 0;
  double log_scale_ = 0.0;
};

/// Both sides of the weighted inequality for one scalar solution. Integrals
/// are kept as logarithms; the linear values may underflow to 0.
struct CarlemanReport {
  double s = 0.0;
  double lambda = 0.0;
  // log_* fields are relative to log_scale; the plain fields are absolute
  // and may underflow to 0 for large s or λ.
  double log_scale = 0.0;
  double log_lhs_interior = 0.0;  // ∫_Q [sλ²φ|∇y|² + s³λ⁴φ³y²] e^{2sα}
  double log_lhs_boundary = 0.0;  // ∫_Σ₀ s²λ²φ²y² e^{2sα}
  double log_rhs_source = 0.0;    // ∫_Q ḡ² e^{2sα}
  double log_rhs_obs = 0.0;       // ∫_Σ₁ s³λ³φ³ζ² e^{2sα}
  double lhs_interior = 0.0;
  double lhs_boundary = 0.0;
  double rhs_source = 0.0;
  double rhs_obs = 0.0;
  double log_ratio = 0.0;
  double ratio = 0.0;
  bool defined = false;  // rhs > 0
};

/// Evaluates the report for component `component` of y, with ḡ the matching
/// component of `gbar` and ζ that of `zeta` (on Γ₁).
CarlemanReport eval_carleman_sides(const StateField& y, const SpaceTimeField& gbar,
                                   const BoundarySeries& zeta, const WeightedQuadrature& quad,
                                   int component = 0);
CarlemanReport eval_carleman_sides(const StateField& y, const SpaceTimeField& gbar,
                                   const BoundarySeries& zeta, const WeightFields& weights,
                                   const PolarGrid& grid, int component = 0);

struct CarlemanSample {
  StateField y;
  SpaceTimeField gbar;
  BoundarySeries zeta;
};

struct ScanCell {
  double s = 0.0;
  double lambda = 0.0;
  double c_hat = 0.0;       // max ratio over the corpus
  double log_c_hat = 0.0;
  int n_defined = 0;        // corpus members with rhs > 0
  bool stable = false;      // next s and next λ raise Ĉ by at most 10%
  std::vector<double> log_ratios;  // per corpus member (NaN when undefined)
};

struct ScanResult {
  std::vector<double> s_grid;
  std::vector<double> lambda_grid;
  std::vector<ScanCell> cells;  // index a * lambda_grid.size() + b
  int s_star_index = -1;
  int lambda_star_index = -1;
  double s_star = 0.0;
  double lambda_star = 0.0;
  double c_region = 0.0;  // max Ĉ over the stabilization region
  int region_size = 0;

  const ScanCell& at(int a, int b) const { return cells[a * lambda_grid.size() + b]; }
  bool in_region(int a, int b) const { return a >= s_star_index && b >= lambda_star_index; }
};

/// Relative growth allowed between neighbouring grid points in the stabilization region.
inline constexpr double kStabilizationTolerance = 0.10;

/// Ĉ(s, λ) over the corpus for every grid pair, with weights built from ψ₀
/// and the shift in `base`. The stabilization region is the largest
/// upper-right block {s ≥ s*, λ ≥ λ*} of stable points.
ScanResult scan_parameters(const PolarGrid& grid, const Psi0Field& psi0, const WeightParams& base,
                           const std::vector<CarlemanSample>& corpus,
                           const std::vector<double>& s_grid,
                           const std::vector<double>& lambda_grid, int workers = 1,
                           const QuadratureOptions& options = {});

/// Recomputes the stable flags and the region of `scan` from its cells.
void locate_stabilization(ScanResult& scan);

}  // namespace clab
