#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "clab/geometry.hpp"

namespace clab {

/// n-component field sampled on every (time, space) node of a PolarGrid.
/// Layout: component-major, then time, then space.
struct SpaceTimeField {
  int n_comp = 0;
  int n_t = 0;
  int n_space = 0;
  std::vector<double> values;

  SpaceTimeField() = default;
  SpaceTimeField(int comps, int times, int space, double fill = 0.0)
      : n_comp(comps), n_t(times), n_space(space),
        values(static_cast<std::size_t>(comps) * times * space, fill) {}
  SpaceTimeField(int comps, const PolarGrid& grid, double fill = 0.0)
      : SpaceTimeField(comps, grid.n_t, grid.n_space(), fill) {}

  std::size_t index(int c, int m, int p) const {
    return (static_cast<std::size_t>(c) * n_t + m) * n_space + p;
  }
  double& at(int c, int m, int p) { return values[index(c, m, p)]; }
  double at(int c, int m, int p) const { return values[index(c, m, p)]; }
  std::span<double> slice(int c, int m) { return {values.data() + index(c, m, 0), static_cast<std::size_t>(n_space)}; }
  std::span<const double> slice(int c, int m) const {
    return {values.data() + index(c, m, 0), static_cast<std::size_t>(n_space)};
  }
  bool same_shape(const SpaceTimeField& o) const {
    return n_comp == o.n_comp && n_t == o.n_t && n_space == o.n_space;
  }
  bool matches(const PolarGrid& grid) const {
    return n_t == grid.n_t && n_space == grid.n_space();
  }
  double max_abs() const;
  bool all_finite() const;
};

/// ‖f‖_{L²(Q)}: trapezoid in time, polar area weights in space, summed over components.
double norm_L2_Q(const PolarGrid& grid, const SpaceTimeField& f);
/// ‖f‖_{L¹(Q)} with absolute values summed over components.
double norm_L1_Q(const PolarGrid& grid, const SpaceTimeField& f);

/// Solution trajectory y of a forward problem.
struct StateField {
  SpaceTimeField data;
};

/// Source g together with its cached norms.
class SourceField {
 public:
  SourceField() = default;
  SourceField(const PolarGrid& grid, SpaceTimeField data);

  const SpaceTimeField& data() const { return data_; }
  double l2() const { return l2_; }
  double l1() const { return l1_; }
  int n_comp() const { return data_.n_comp; }

 private:
  SpaceTimeField data_;
  double l2_ = 0.0;
  double l1_ = 0.0;
};

}  // namespace clab
