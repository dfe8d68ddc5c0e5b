#pragma once

#include <string>
#include <vector>

namespace clab {

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct SvgAxes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

/// Polyline plot with markers, one colour per series, legend in the corner.
/// Non-finite points (and nonpositive ones on log axes) are skipped.
std::string svg_line_plot(const SvgAxes& axes, const std::vector<SvgSeries>& series);

/// Histogram of the finite entries of `values` with `bins` equal-width bins.
std::string svg_histogram(const SvgAxes& axes, const std::vector<double>& values, int bins = 20);

/// Cell map of z over the (x, y) grid; z is row-major in y, i.e.
/// z[ix * y.size() + iy]. Non-finite cells are drawn grey; `marked` cells
/// get an outline.
std::string svg_heatmap(const SvgAxes& axes, const std::vector<double>& x,
                        const std::vector<double>& y, const std::vector<double>& z,
                        const std::vector<bool>& marked = {});

}  // namespace clab
