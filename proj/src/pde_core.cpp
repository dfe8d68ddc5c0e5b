#include "clab/pde_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <boost/math/quadrature/gauss.hpp>

#include "clab/errors.hpp"
#include "clab/polar_ops.hpp"

namespace clab {

// ---------------------------------------------------------------- fields

double SpaceTimeField::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

bool SpaceTimeField::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void require_grid(const PolarGrid& grid, const SpaceTimeField& f) {
  if (!f.matches(grid)) throw Error(ErrorCode::ShapeMismatch, "field does not match grid");
}

}  // namespace

double norm_L2_Q(const PolarGrid& grid, const SpaceTimeField& f) {
  require_grid(grid, f);
  const auto wt = grid.time_weights();
  double sum = 0.0;
  for (int c = 0; c < f.n_comp; ++c) {
    for (int m = 0; m < f.n_t; ++m) {
      double inner = 0.0;
      const auto s = f.slice(c, m);
      for (int p = 0; p < f.n_space; ++p) inner += grid.quad_weights[p] * s[p] * s[p];
      sum += wt[m] * inner;
    }
  }
  return std::sqrt(sum);
}

double norm_L1_Q(const PolarGrid& grid, const SpaceTimeField& f) {
  require_grid(grid, f);
  const auto wt = grid.time_weights();
  double sum = 0.0;
  for (int c = 0; c < f.n_comp; ++c) {
    for (int m = 0; m < f.n_t; ++m) {
      double inner = 0.0;
      const auto s = f.slice(c, m);
      for (int p = 0; p < f.n_space; ++p) inner += grid.quad_weights[p] * std::abs(s[p]);
      sum += wt[m] * inner;
    }
  }
  return sum;
}

SourceField::SourceField(const PolarGrid& grid, SpaceTimeField data)
    : data_(std::move(data)), l2_(norm_L2_Q(grid, data_)), l1_(norm_L1_Q(grid, data_)) {}

// ---------------------------------------------------------- coefficients

CouplingField::CouplingField(int n, int n_space, const Eigen::MatrixXd& matrix)
    : n_(n), n_t_(0), n_space_(n_space),
      values_(static_cast<std::size_t>(n) * n * n_space) {
  if (matrix.rows() != n || matrix.cols() != n) {
    throw Error(ErrorCode::ShapeMismatch, "coupling matrix must be n x n");
  }
  for (int p = 0; p < n_space; ++p) {
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < n; ++l) at(i, l, 0, p) = matrix(i, l);
    }
  }
}

CouplingField::CouplingField(int n, int n_t, int n_space)
    : n_(n), n_t_(n_t), n_space_(n_space),
      values_(static_cast<std::size_t>(n) * n * n_space * n_t, 0.0) {}

bool CouplingField::all_zero() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

BoundaryCondition uniform_boundary(const PolarGrid& grid, double beta_inner, double eta_inner,
                                   double beta_outer, double eta_outer) {
  BoundaryCondition bc;
  bc.beta[0].assign(grid.n_theta, beta_inner);
  bc.eta[0].assign(grid.n_theta, eta_inner);
  bc.beta[1].assign(grid.n_theta, beta_outer);
  bc.eta[1].assign(grid.n_theta, eta_outer);
  return bc;
}

SystemCoefficients make_uniform_system(const PolarGrid& grid, int n, double diffusion,
                                       const Eigen::MatrixXd& coupling,
                                       const BoundaryCondition& bc) {
  SystemCoefficients s;
  s.n = n;
  s.a.assign(n, constant_diffusion(grid, diffusion * Matrix2::Identity()));
  s.b.assign(n, std::vector<Vector2>(grid.n_space(), Vector2::Zero()));
  s.c = CouplingField(n, grid.n_space(), coupling);
  s.boundary.assign(n, bc);
  return s;
}

double validate_coefficients(const SystemCoefficients& coeffs, const PolarGrid& grid) {
  const int n = coeffs.n;
  if (n < 1 || static_cast<int>(coeffs.a.size()) != n || static_cast<int>(coeffs.b.size()) != n ||
      static_cast<int>(coeffs.boundary.size()) != n || coeffs.c.n() != n ||
      coeffs.c.n_space() != grid.n_space() ||
      (coeffs.c.time_dependent() && coeffs.c.n_t() != grid.n_t)) {
    throw Error(ErrorCode::ShapeMismatch, "coefficient blocks do not match component count/grid");
  }
  double ellipticity = std::numeric_limits<double>::infinity();
  for (int c = 0; c < n; ++c) {
    if (static_cast<int>(coeffs.a[c].size()) != grid.n_space() ||
        static_cast<int>(coeffs.b[c].size()) != grid.n_space()) {
      throw Error(ErrorCode::ShapeMismatch, "diffusion/drift field size differs from grid");
    }
    for (const auto& m : coeffs.a[c]) {
      const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
      if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 * scale) {
        throw Error(ErrorCode::NonSymmetricDiffusion, "component " + std::to_string(c));
      }
      const Eigen::SelfAdjointEigenSolver<Matrix2> es(m);
      const double lo = es.eigenvalues()(0);
      if (!(lo > 0.0)) {
        throw Error(ErrorCode::EllipticityViolated,
                    "component " + std::to_string(c) + " has eigenvalue " + std::to_string(lo));
      }
      ellipticity = std::min(ellipticity, lo);
    }
    const auto& bc = coeffs.boundary[c];
    for (int side = 0; side < 2; ++side) {
      if (static_cast<int>(bc.beta[side].size()) != grid.n_theta ||
          static_cast<int>(bc.eta[side].size()) != grid.n_theta) {
        throw Error(ErrorCode::ShapeMismatch, "boundary data must have n_theta entries");
      }
      for (int j = 0; j < grid.n_theta; ++j) {
        const double beta = bc.beta[side][j];
        const double eta = bc.eta[side][j];
        if (beta != 0.0 && beta != 1.0) {
          throw Error(ErrorCode::BoundaryFlagInvalid,
                      "beta = " + std::to_string(beta) + " at component " + std::to_string(c));
        }
        if (!(eta >= 0.0) || !(beta + eta > 0.0)) {
          throw Error(ErrorCode::InvalidArgument,
                      "need eta >= 0 and beta + eta > 0 on the boundary");
        }
      }
    }
  }
  return ellipticity;
}

CouplingField sum_couplings(const CouplingField& a, const CouplingField& b, int n_t) {
  if (a.n() != b.n() || a.n_space() != b.n_space()) {
    throw Error(ErrorCode::ShapeMismatch, "coupling fields differ in shape");
  }
  CouplingField out(a.n(), n_t, a.n_space());
  for (int m = 0; m < n_t; ++m) {
    for (int p = 0; p < a.n_space(); ++p) {
      for (int i = 0; i < a.n(); ++i) {
        for (int l = 0; l < a.n(); ++l) out.at(i, l, m, p) = a(i, l, m, p) + b(i, l, m, p);
      }
    }
  }
  return out;
}

SystemCoefficients with_coupling(SystemCoefficients coeffs, CouplingField c) {
  coeffs.c = std::move(c);
  return coeffs;
}

Vector2 node_position(const PolarGrid& grid, int p) {
  return grid.radius(grid.ring_of(p)) * radial_unit(grid.angle(grid.column_of(p)));
}

std::vector<double> zero_initial(const PolarGrid& grid, int n) {
  return std::vector<double>(static_cast<std::size_t>(n) * grid.n_space(), 0.0);
}

// -------------------------------------------------------------- assembly

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Emits the stencil of one operator row, eliminating ghost rings through the
// boundary condition (Robin/Neumann) or quadratic extrapolation (Dirichlet).
class RowBuilder {
 public:
  RowBuilder(const PolarGrid& grid, const std::vector<PolarTensor>& pa, const BoundaryCondition& bc,
             Triplets& out, int row, int col_offset)
      : g_(grid), pa_(pa), bc_(bc), out_(out), row_(row), off_(col_offset) {}

  void node(int i, int j, double c) {
    if (c == 0.0) return;
    const int last = g_.n_r - 1;
    const double h = g_.h_r();
    if (i >= 0 && i <= last) {
      out_.emplace_back(row_, off_ + g_.node(i, j), c);
    } else if (i == -1) {
      if (robin(0, j)) {
        node(1, j, c);
        dr(0, j, -2.0 * h * c);
      } else {
        node(0, j, 3.0 * c);
        node(1, j, -3.0 * c);
        node(2, j, c);
      }
    } else if (i == last + 1) {
      if (robin(1, j)) {
        node(last - 1, j, c);
        dr(last, j, 2.0 * h * c);
      } else {
        node(last, j, 3.0 * c);
        node(last - 1, j, -3.0 * c);
        node(last - 2, j, c);
      }
    }
  }

  // c · ∂_θ y at (i, j), central in θ.
  void dtheta(int i, int j, double c) {
    const double k = g_.h_theta();
    node(i, j + 1, c / (2.0 * k));
    node(i, j - 1, -c / (2.0 * k));
  }

  // c · ∂_r y at (i, j). On a Robin boundary node the derivative comes from
  // the boundary condition itself; on a Dirichlet node from a one-sided stencil.
  void dr(int i, int j, double c) {
    const int last = g_.n_r - 1;
    const double h = g_.h_r();
    if (i > 0 && i < last) {
      node(i + 1, j, c / (2.0 * h));
      node(i - 1, j, -c / (2.0 * h));
      return;
    }
    const int side = i == 0 ? 0 : 1;
    if (!robin(side, j)) {
      const double sgn = side == 0 ? 1.0 : -1.0;
      const int step = side == 0 ? 1 : -1;
      node(i, j, -3.0 * sgn * c / (2.0 * h));
      node(i + step, j, 4.0 * sgn * c / (2.0 * h));
      node(i + 2 * step, j, -1.0 * sgn * c / (2.0 * h));
      return;
    }
    // inner (ν = −e_r):  y_r = ( η y − a_rθ ∂_θy / r) / a_rr
    // outer (ν = +e_r):  y_r = (−η y − a_rθ ∂_θy / r) / a_rr
    const auto& t = pa_[g_.node(i, j)];
    const double r = g_.radius(i);
    const double eta = bc_.eta[side][norm_j(j)];
    const double sgn = side == 0 ? 1.0 : -1.0;
    node(i, j, c * sgn * eta / t.rr);
    const double k = g_.h_theta();
    const double w = -c * t.rt / (r * t.rr * 2.0 * k);
    node(i, j + 1, w);
    node(i, j - 1, -w);
  }

 private:
  int norm_j(int j) const { return ((j % g_.n_theta) + g_.n_theta) % g_.n_theta; }
  bool robin(int side, int j) const { return bc_.beta[side][norm_j(j)] != 0.0; }

  const PolarGrid& g_;
  const std::vector<PolarTensor>& pa_;
  const BoundaryCondition& bc_;
  Triplets& out_;
  int row_;
  int off_;
};

// Appends the operator rows of `component` to `trips`, shifted by
// row/column offsets, scaled by `scale`. Dirichlet rows are skipped.
void append_operator(const SystemCoefficients& coeffs, const PolarGrid& grid, int component,
                     double scale, int offset, Triplets& trips, std::vector<char>& dirichlet) {
  const int n_space = grid.n_space();
  std::vector<PolarTensor> pa(n_space);
  for (int p = 0; p < n_space; ++p) {
    pa[p] = to_polar_frame(coeffs.a[component][p], grid.angle(grid.column_of(p)));
  }
  const auto& bc = coeffs.boundary[component];
  const auto& drift = coeffs.b[component];
  const double h = grid.h_r();
  const double k = grid.h_theta();
  const int last = grid.n_r - 1;
  dirichlet.assign(n_space, 0);

  auto coef_rr = [&](int i, int j) { return pa[grid.node(std::clamp(i, 0, last), j)].rr; };
  auto coef_rt = [&](int i, int j) { return pa[grid.node(std::clamp(i, 0, last), j)].rt; };
  auto coef_tt = [&](int i, int j) { return pa[grid.node(i, j)].tt; };

  Triplets local;
  for (int i = 0; i <= last; ++i) {
    const double r = grid.radius(i);
    for (int j = 0; j < grid.n_theta; ++j) {
      const int p = grid.node(i, j);
      const int row = offset + p;
      if ((i == 0 && bc.beta[0][j] == 0.0) || (i == last && bc.beta[1][j] == 0.0)) {
        dirichlet[p] = 1;
        continue;
      }
      local.clear();
      RowBuilder rb(grid, pa, bc, local, row, offset);
      // −div(A∇y)
      const double rp = r + 0.5 * h;
      const double rm = r - 0.5 * h;
      const double arr_p = 0.5 * (coef_rr(i, j) + coef_rr(i + 1, j));
      const double arr_m = 0.5 * (coef_rr(i, j) + coef_rr(i - 1, j));
      const double c1 = 1.0 / (r * h * h);
      rb.node(i + 1, j, -c1 * rp * arr_p);
      rb.node(i, j, c1 * (rp * arr_p + rm * arr_m));
      rb.node(i - 1, j, -c1 * rm * arr_m);

      const double c2 = 1.0 / (2.0 * h * r);
      rb.dtheta(i + 1, j, -c2 * coef_rt(i + 1, j));
      rb.dtheta(i - 1, j, c2 * coef_rt(i - 1, j));

      const double c3 = 1.0 / (2.0 * k * r);
      rb.dr(i, j + 1, -c3 * coef_rt(i, j + 1));
      rb.dr(i, j - 1, c3 * coef_rt(i, j - 1));

      const double att_p = 0.5 * (coef_tt(i, j) + coef_tt(i, j + 1));
      const double att_m = 0.5 * (coef_tt(i, j) + coef_tt(i, j - 1));
      const double c4 = 1.0 / (r * r * k * k);
      rb.node(i, j + 1, -c4 * att_p);
      rb.node(i, j, c4 * (att_p + att_m));
      rb.node(i, j - 1, -c4 * att_m);

      // b·∇y
      const double theta = grid.angle(j);
      const double br = drift[p].dot(radial_unit(theta));
      const double bt = drift[p].dot(angular_unit(theta));
      rb.dr(i, j, br);
      rb.dtheta(i, j, bt / r);

      for (auto& t : local) trips.emplace_back(t.row(), t.col(), scale * t.value());
    }
  }
}

}  // namespace

DiscreteOperator assemble_operator(const SystemCoefficients& coeffs, const PolarGrid& grid,
                                   int component) {
  validate_coefficients(coeffs, grid);
  if (component < 0 || component >= coeffs.n) {
    throw Error(ErrorCode::InvalidArgument, "component index out of range");
  }
  Triplets trips;
  DiscreteOperator op;
  append_operator(coeffs, grid, component, 1.0, 0, trips, op.dirichlet);
  for (int p = 0; p < grid.n_space(); ++p) {
    if (op.dirichlet[p]) trips.emplace_back(p, p, 1.0);
  }
  op.matrix.resize(grid.n_space(), grid.n_space());
  op.matrix.setFromTriplets(trips.begin(), trips.end());
  op.matrix.prune(0.0);
  return op;
}

// ----------------------------------------------------------- time stepping

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

struct ForwardSolver::Impl {
  SystemCoefficients coeffs;
  PolarGrid grid;
  TimeScheme scheme;
  std::vector<DiscreteOperator> ops;
  std::vector<char> dirichlet;  // over the whole block vector
  SpMat laplace;                // block-diagonal spatial operator, Dirichlet rows empty
  int n = 0;
  int n_space = 0;
  int size = 0;
  // Factorization for constant coupling.
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu;
  SpMat system;
  SpMat coupling_const;

  double theta() const { return scheme == TimeScheme::BackwardEuler ? 1.0 : 0.5; }

  // Coupling matrix sampled at time level m (or averaged between m and m+1
  // when `mid` is set).
  SpMat coupling(int m, bool mid) const {
    Triplets trips;
    for (int i = 0; i < n; ++i) {
      for (int p = 0; p < n_space; ++p) {
        if (dirichlet[i * n_space + p]) continue;
        for (int l = 0; l < n; ++l) {
          double v = coeffs.c(i, l, m, p);
          if (mid && coeffs.c.time_dependent()) v = 0.5 * (v + coeffs.c(i, l, m + 1, p));
          if (v != 0.0) trips.emplace_back(i * n_space + p, l * n_space + p, v);
        }
      }
    }
    SpMat c(size, size);
    c.setFromTriplets(trips.begin(), trips.end());
    return c;
  }

  SpMat build_system(const SpMat& cpl) const {
    const double dt = grid.dt();
    SpMat m = theta() * (laplace + cpl);
    Triplets diag;
    for (int q = 0; q < size; ++q) diag.emplace_back(q, q, dirichlet[q] ? 1.0 : 1.0 / dt);
    SpMat d(size, size);
    d.setFromTriplets(diag.begin(), diag.end());
    m += d;
    m.makeCompressed();
    return m;
  }

  static std::unique_ptr<Eigen::SparseLU<SpMat>> factor(const SpMat& m) {
    auto lu = std::make_unique<Eigen::SparseLU<SpMat>>();
    lu->compute(m);
    if (lu->info() != Eigen::Success) {
      throw Error(ErrorCode::SolverDivergence, "sparse LU factorization failed");
    }
    return lu;
  }
};

ForwardSolver::ForwardSolver(SystemCoefficients coeffs, const PolarGrid& grid, TimeScheme scheme)
    : impl_(std::make_unique<Impl>()) {
  validate_coefficients(coeffs, grid);
  auto& s = *impl_;
  s.coeffs = std::move(coeffs);
  s.grid = grid;
  s.scheme = scheme;
  s.n = s.coeffs.n;
  s.n_space = grid.n_space();
  s.size = s.n * s.n_space;
  s.dirichlet.assign(s.size, 0);
  Triplets trips;
  for (int c = 0; c < s.n; ++c) {
    std::vector<char> dir;
    append_operator(s.coeffs, grid, c, 1.0, c * s.n_space, trips, dir);
    std::copy(dir.begin(), dir.end(), s.dirichlet.begin() + c * s.n_space);
    s.ops.push_back(assemble_operator(s.coeffs, grid, c));
  }
  s.laplace.resize(s.size, s.size);
  s.laplace.setFromTriplets(trips.begin(), trips.end());
  if (!s.coeffs.c.time_dependent()) {
    s.coupling_const = s.coupling(0, false);
    s.system = s.build_system(s.coupling_const);
    s.lu = Impl::factor(s.system);
  }
}

ForwardSolver::~ForwardSolver() = default;
ForwardSolver::ForwardSolver(ForwardSolver&&) noexcept = default;
ForwardSolver& ForwardSolver::operator=(ForwardSolver&&) noexcept = default;

const SystemCoefficients& ForwardSolver::coefficients() const { return impl_->coeffs; }
const PolarGrid& ForwardSolver::grid() const { return impl_->grid; }
const DiscreteOperator& ForwardSolver::op(int component) const { return impl_->ops.at(component); }

StateField ForwardSolver::solve(const SpaceTimeField& g, std::span<const double> y0) const {
  const auto& s = *impl_;
  if (g.n_comp != s.n || !g.matches(s.grid) ||
      static_cast<int>(y0.size()) != s.size) {
    throw Error(ErrorCode::ShapeMismatch, "source or initial data shape differs from system");
  }
  const double dt = s.grid.dt();
  const double th = s.theta();
  StateField out{SpaceTimeField(s.n, s.grid)};
  Vec y(s.size);
  for (int q = 0; q < s.size; ++q) y[q] = y0[q];
  auto store = [&](int m) {
    for (int c = 0; c < s.n; ++c) {
      auto sl = out.data.slice(c, m);
      for (int p = 0; p < s.n_space; ++p) sl[p] = y[c * s.n_space + p];
    }
  };
  store(0);

  Vec rhs(s.size);
  for (int m = 0; m + 1 < s.grid.n_t; ++m) {
    const bool mid = s.scheme == TimeScheme::CrankNicolson;
    const int level = mid ? m : m + 1;
    SpMat cpl;
    const SpMat* system = &s.system;
    std::unique_ptr<Eigen::SparseLU<SpMat>> step_lu;
    SpMat step_system;
    if (s.coeffs.c.time_dependent()) {
      cpl = s.coupling(level, mid);
      step_system = s.build_system(cpl);
      step_lu = Impl::factor(step_system);
      system = &step_system;
    }
    const Eigen::SparseLU<SpMat>& lu = step_lu ? *step_lu : *s.lu;

    rhs = y / dt;
    if (th < 1.0) {
      const SpMat& c = s.coeffs.c.time_dependent() ? cpl : s.coupling_const;
      rhs -= (1.0 - th) * (s.laplace * y + c * y);
    }
    for (int c = 0; c < s.n; ++c) {
      for (int p = 0; p < s.n_space; ++p) {
        const int q = c * s.n_space + p;
        if (s.dirichlet[q]) {
          rhs[q] = 0.0;
          continue;
        }
        rhs[q] += th * g.at(c, m + 1, p) + (1.0 - th) * g.at(c, m, p);
      }
    }
    y = lu.solve(rhs);
    const double res = inf_norm(*system * y - rhs);
    if (!(res <= 1e-10 * std::max(1.0, inf_norm(rhs)))) {
      throw Error(ErrorCode::SolverDivergence,
                  "linear residual " + std::to_string(res) + " at step " + std::to_string(m));
    }
    store(m + 1);
  }
  return out;
}

StateField solve_forward_linear(const SystemCoefficients& coeffs, const SpaceTimeField& g,
                                std::span<const double> y0, const PolarGrid& grid,
                                TimeScheme scheme) {
  return ForwardSolver(coeffs, grid, scheme).solve(g, y0);
}

// ------------------------------------------------------------ semilinear

NonlinearityModel zero_nonlinearity(int n) {
  NonlinearityModel f;
  f.n = n;
  f.f = [](double, const Vector2&, std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  f.df = [](double, const Vector2&, std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  f.hypothesis_case = HypothesisCase::CaseA;
  return f;
}

NonlinearityModel square_nonlinearity() {
  NonlinearityModel f;
  f.n = 1;
  f.f = [](double, const Vector2&, std::span<const double> y, std::span<double> out) {
    out[0] = y[0] * y[0];
  };
  f.df = [](double, const Vector2&, std::span<const double> y, std::span<double> out) {
    out[0] = 2.0 * y[0];
  };
  f.hypothesis_case = HypothesisCase::CaseA;
  return f;
}

NonlinearityModel cross_decay_nonlinearity() {
  NonlinearityModel f;
  f.n = 2;
  f.f = [](double, const Vector2&, std::span<const double> y, std::span<double> out) {
    out[0] = -y[1];
    out[1] = -y[0];
  };
  f.df = [](double, const Vector2&, std::span<const double>, std::span<double> out) {
    out[0] = 0.0;
    out[1] = -1.0;
    out[2] = -1.0;
    out[3] = 0.0;
  };
  f.hypothesis_case = HypothesisCase::CaseB;
  return f;
}

NonlinearityModel linear_nonlinearity(const Eigen::MatrixXd& m, HypothesisCase hc) {
  NonlinearityModel f;
  f.n = static_cast<int>(m.rows());
  f.f = [m](double, const Vector2&, std::span<const double> y, std::span<double> out) {
    const int n = static_cast<int>(m.rows());
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int l = 0; l < n; ++l) acc += m(i, l) * y[l];
      out[i] = acc;
    }
  };
  f.df = [m](double, const Vector2&, std::span<const double>, std::span<double> out) {
    const int n = static_cast<int>(m.rows());
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < n; ++l) out[i * n + l] = m(i, l);
    }
  };
  f.hypothesis_case = hc;
  return f;
}

void check_nonlinearity_probe(const NonlinearityModel& f, const PolarGrid& grid) {
  std::vector<double> zero(f.n, 0.0);
  std::vector<double> out(f.n);
  const int ring_step = std::max(1, grid.n_r / 4);
  const int col_step = std::max(1, grid.n_theta / 8);
  const int time_step = std::max(1, grid.n_t / 4);
  for (int m = 0; m < grid.n_t; m += time_step) {
    for (int i = 0; i < grid.n_r; i += ring_step) {
      for (int j = 0; j < grid.n_theta; j += col_step) {
        f.f(grid.time(m), node_position(grid, grid.node(i, j)), zero, out);
        for (double v : out) {
          if (!(std::abs(v) <= 1e-14)) {
            throw Error(ErrorCode::InvalidArgument, "nonlinearity does not vanish at y = 0");
          }
        }
      }
    }
  }
}

StateField solve_forward_semilinear(const SystemCoefficients& coeffs, const NonlinearityModel& f,
                                    const SpaceTimeField& g, std::span<const double> y0,
                                    const PolarGrid& grid, const NewtonOptions& options) {
  if (f.n != coeffs.n) throw Error(ErrorCode::ShapeMismatch, "nonlinearity size differs");
  check_nonlinearity_probe(f, grid);
  ForwardSolver linear(coeffs, grid, TimeScheme::BackwardEuler);
  if (g.n_comp != coeffs.n || !g.matches(grid) ||
      static_cast<int>(y0.size()) != coeffs.n * grid.n_space()) {
    throw Error(ErrorCode::ShapeMismatch, "source or initial data shape differs from system");
  }
  const int n = coeffs.n;
  const int ns = grid.n_space();
  const int size = n * ns;
  const double dt = grid.dt();

  std::vector<char> dirichlet(size, 0);
  Triplets base;
  for (int c = 0; c < n; ++c) {
    std::vector<char> dir;
    append_operator(coeffs, grid, c, 1.0, c * ns, base, dir);
    std::copy(dir.begin(), dir.end(), dirichlet.begin() + c * ns);
  }
  SpMat lap(size, size);
  lap.setFromTriplets(base.begin(), base.end());

  std::vector<Vector2> pos(ns);
  for (int p = 0; p < ns; ++p) pos[p] = node_position(grid, p);

  StateField out{SpaceTimeField(n, grid)};
  Vec y(size);
  for (int q = 0; q < size; ++q) y[q] = y0[q];
  auto store = [&](int m) {
    for (int c = 0; c < n; ++c) {
      auto sl = out.data.slice(c, m);
      for (int p = 0; p < ns; ++p) sl[p] = y[c * ns + p];
    }
  };
  store(0);

  std::vector<double> yl(n), fl(n), jl(n * n);
  for (int m = 0; m + 1 < grid.n_t; ++m) {
    const double t = grid.time(m + 1);
    SpMat cpl(size, size);
    {
      Triplets trips;
      for (int i = 0; i < n; ++i) {
        for (int p = 0; p < ns; ++p) {
          if (dirichlet[i * ns + p]) continue;
          for (int l = 0; l < n; ++l) {
            const double v = coeffs.c(i, l, m + 1, p);
            if (v != 0.0) trips.emplace_back(i * ns + p, l * ns + p, v);
          }
        }
      }
      cpl.setFromTriplets(trips.begin(), trips.end());
    }
    const SpMat linear_part = lap + cpl;
    const Vec y_old = y;
    double scale = 1.0;
    for (int c = 0; c < n; ++c) {
      for (int p = 0; p < ns; ++p) {
        scale = std::max({scale, std::abs(y_old[c * ns + p]) / dt, std::abs(g.at(c, m + 1, p))});
      }
    }
    auto residual = [&](const Vec& v) {
      Vec r = (v - y_old) / dt + linear_part * v;
      for (int p = 0; p < ns; ++p) {
        for (int c = 0; c < n; ++c) yl[c] = v[c * ns + p];
        f.f(t, pos[p], yl, fl);
        for (int c = 0; c < n; ++c) {
          const int q = c * ns + p;
          r[q] = dirichlet[q] ? v[q] : r[q] + fl[c] - g.at(c, m + 1, p);
        }
      }
      return r;
    };

    Vec r = residual(y);
    double rn = inf_norm(r);
    int it = 0;
    while (rn > options.tolerance * scale) {
      if (++it > options.max_iterations) {
        throw Error(ErrorCode::NewtonDivergence,
                    "no convergence at step " + std::to_string(m) + ", residual " +
                        std::to_string(rn));
      }
      Triplets trips;
      for (int k = 0; k < linear_part.outerSize(); ++k) {
        for (SpMat::InnerIterator itr(linear_part, k); itr; ++itr) {
          trips.emplace_back(itr.row(), itr.col(), itr.value());
        }
      }
      for (int p = 0; p < ns; ++p) {
        for (int c = 0; c < n; ++c) yl[c] = y[c * ns + p];
        f.df(t, pos[p], yl, jl);
        for (int i = 0; i < n; ++i) {
          const int q = i * ns + p;
          if (dirichlet[q]) continue;
          trips.emplace_back(q, q, 1.0 / dt);
          for (int l = 0; l < n; ++l) {
            if (jl[i * n + l] != 0.0) trips.emplace_back(q, l * ns + p, jl[i * n + l]);
          }
        }
      }
      for (int q = 0; q < size; ++q) {
        if (dirichlet[q]) trips.emplace_back(q, q, 1.0);
      }
      SpMat jac(size, size);
      jac.setFromTriplets(trips.begin(), trips.end());
      jac.makeCompressed();
      Eigen::SparseLU<SpMat> lu;
      lu.compute(jac);
      if (lu.info() != Eigen::Success) {
        throw Error(ErrorCode::NewtonDivergence, "singular Newton Jacobian");
      }
      const Vec delta = lu.solve(r);
      double step = 1.0;
      Vec trial = y - delta;
      Vec rt = residual(trial);
      double rtn = inf_norm(rt);
      int halvings = 0;
      while (!(rtn < rn) && halvings < options.max_halvings) {
        step *= 0.5;
        trial = y - step * delta;
        rt = residual(trial);
        rtn = inf_norm(rt);
        ++halvings;
      }
      if (!std::isfinite(rtn)) throw Error(ErrorCode::NewtonDivergence, "non-finite residual");
      y = std::move(trial);
      r = std::move(rt);
      rn = rtn;
    }
    store(m + 1);
  }
  return out;
}

// ---------------------------------------------------------- linearization

namespace {

struct GaussTable {
  std::array<double, 16> x{};
  std::array<double, 16> w{};
};

// 16-point Gauss–Legendre rule mapped to [0, 1].
const GaussTable& gauss16() {
  static const GaussTable table = [] {
    using Rule = boost::math::quadrature::gauss<double, 16>;
    const auto& a = Rule::abscissa();
    const auto& wt = Rule::weights();
    GaussTable t;
    int k = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      t.x[k] = 0.5 * (1.0 + a[i]);
      t.w[k++] = 0.5 * wt[i];
      t.x[k] = 0.5 * (1.0 - a[i]);
      t.w[k++] = 0.5 * wt[i];
    }
    return t;
  }();
  return table;
}

}  // namespace

Linearization linearize_semilinear(const NonlinearityModel& f, const StateField& y,
                                   const PolarGrid& grid) {
  const int n = f.n;
  const auto& d = y.data;
  if (d.n_comp != n || !d.matches(grid)) {
    throw Error(ErrorCode::ShapeMismatch, "state does not match nonlinearity/grid");
  }
  if (!d.all_finite()) throw Error(ErrorCode::QuadratureFailure, "state has non-finite values");
  const auto& gl = gauss16();
  Linearization lin;
  lin.diagonal = CouplingField(n, grid.n_t, grid.n_space());
  lin.full = CouplingField(n, grid.n_t, grid.n_space());
  lin.gbar = SpaceTimeField(n, grid);

  std::vector<double> yv(n), work(n), jac(n * n), fv(n);
  for (int m = 0; m < grid.n_t; ++m) {
    const double t = grid.time(m);
    for (int p = 0; p < grid.n_space(); ++p) {
      const Vector2 x = node_position(grid, p);
      for (int c = 0; c < n; ++c) yv[c] = d.at(c, m, p);
      for (int i = 0; i < n; ++i) {
        work = yv;
        work[i] = 0.0;
        f.f(t, x, work, fv);
        lin.gbar.at(i, m, p) = -fv[i];
        double acc = 0.0;
        for (int q = 0; q < 16; ++q) {
          work[i] = gl.x[q] * yv[i];
          f.df(t, x, work, jac);
          acc += gl.w[q] * jac[i * n + i];
        }
        lin.diagonal.at(i, i, m, p) = acc;
      }
      std::vector<double> acc(n * n, 0.0);
      for (int q = 0; q < 16; ++q) {
        for (int c = 0; c < n; ++c) work[c] = gl.x[q] * yv[c];
        f.df(t, x, work, jac);
        for (int k = 0; k < n * n; ++k) acc[k] += gl.w[q] * jac[k];
      }
      for (int i = 0; i < n; ++i) {
        for (int l = 0; l < n; ++l) lin.full.at(i, l, m, p) = acc[i * n + l];
      }
      for (double v : acc) {
        if (!std::isfinite(v)) throw Error(ErrorCode::QuadratureFailure, "non-finite partials");
      }
    }
  }
  return lin;
}

}  // namespace clab
