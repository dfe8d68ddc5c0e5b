#include "clab/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace clab {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 20.0;
constexpr double kLegendGutter = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

constexpr std::array<const char*, 6> kColours{"#1f77b4", "#d62728", "#2ca02c",
                                              "#9467bd", "#ff7f0e", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi == lo) {
      const double pad = lo == 0.0 ? 1.0 : 0.05 * std::abs(lo);
      lo -= pad;
      hi += pad;
    }
  }
};

struct Frame {
  SvgAxes axes;
  Range xr, yr;
  double right = kRight;

  double tx(double v) const { return axes.log_x ? std::log10(v) : v; }
  double ty(double v) const { return axes.log_y ? std::log10(v) : v; }
  double px(double v) const {
    return kLeft + (tx(v) - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - right);
  }
  double py(double v) const {
    return kHeight - kBottom - (ty(v) - yr.lo) / (yr.hi - yr.lo) * (kHeight - kTop - kBottom);
  }
  bool usable(double x, double y) const {
    return std::isfinite(x) && std::isfinite(y) && (!axes.log_x || x > 0.0) &&
           (!axes.log_y || y > 0.0);
  }
};

void header(std::ostringstream& os, const SvgAxes& axes) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\""
     << num(kHeight) << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(axes.title) << "</text>\n";
}

// Frame, ticks and labels; tick values are in transformed coordinates.
void axes_box(std::ostringstream& os, const Frame& f) {
  const double x0 = kLeft, x1 = kWidth - f.right, y0 = kTop, y1 = kHeight - kBottom;
  os << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(x1 - x0)
     << "\" height=\"" << num(y1 - y0) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double u = k / 4.0;
    const double xv = f.xr.lo + u * (f.xr.hi - f.xr.lo);
    const double yv = f.yr.lo + u * (f.yr.hi - f.yr.lo);
    const double xp = x0 + u * (x1 - x0);
    const double yp = y1 - u * (y1 - y0);
    os << "<line x1=\"" << num(xp) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(xp)
       << "\" y2=\"" << num(y1 + 5) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(xp) << "\" y=\"" << num(y1 + 18) << "\" text-anchor=\"middle\">"
       << tick(f.axes.log_x ? std::pow(10.0, xv) : xv) << "</text>\n";
    os << "<line x1=\"" << num(x0 - 5) << "\" y1=\"" << num(yp) << "\" x2=\"" << num(x0)
       << "\" y2=\"" << num(yp) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(x0 - 8) << "\" y=\"" << num(yp + 4) << "\" text-anchor=\"end\">"
       << tick(f.axes.log_y ? std::pow(10.0, yv) : yv) << "</text>\n";
  }
  os << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 18)
     << "\" text-anchor=\"middle\">" << escape(f.axes.x_label) << "</text>\n";
  os << "<text x=\"14\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << num((y0 + y1) / 2) << ")\">" << escape(f.axes.y_label) << "</text>\n";
}

}  // namespace

std::string svg_line_plot(const SvgAxes& axes, const std::vector<SvgSeries>& series) {
  Frame f{axes, {}, {}, kLegendGutter};
  for (const auto& s : series) {
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!f.usable(s.x[k], s.y[k])) continue;
      f.xr.add(f.tx(s.x[k]));
      f.yr.add(f.ty(s.y[k]));
    }
  }
  f.xr.finish();
  f.yr.finish();
  std::ostringstream os;
  header(os, axes);
  axes_box(os, f);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kColours[i % kColours.size()];
    std::string pts;
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!f.usable(s.x[k], s.y[k])) continue;
      pts += num(f.px(s.x[k])) + ',' + num(f.py(s.y[k])) + ' ';
      os << "<circle cx=\"" << num(f.px(s.x[k])) << "\" cy=\"" << num(f.py(s.y[k]))
         << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
    }
    if (!pts.empty()) {
      pts.pop_back();
      os << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << colour
         << "\" stroke-width=\"1.5\"/>\n";
    }
    const double ly = kTop + 10 + 18 * static_cast<double>(i);
    const double lx = kWidth - kLegendGutter + 12;
    os << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly - 5)
       << "\" width=\"14\" height=\"3\" fill=\"" << colour << "\"/>\n";
    os << "<text x=\"" << num(lx + 20) << "\" y=\"" << num(ly) << "\" font-size=\"11\">"
       << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_histogram(const SvgAxes& axes, const std::vector<double>& values, int bins) {
  bins = std::max(bins, 1);
  Range vr;
  for (double v : values) {
    if (std::isfinite(v)) vr.add(v);
  }
  vr.finish();
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    int b = static_cast<int>((v - vr.lo) / (vr.hi - vr.lo) * bins);
    counts[std::clamp(b, 0, bins - 1)] += 1;
  }
  SvgAxes plain = axes;
  plain.log_x = plain.log_y = false;
  Frame f{plain, vr, {}};
  f.yr.lo = 0.0;
  f.yr.hi = std::max(1, *std::max_element(counts.begin(), counts.end()));
  std::ostringstream os;
  header(os, plain);
  axes_box(os, f);
  const double w = (vr.hi - vr.lo) / bins;
  for (int b = 0; b < bins; ++b) {
    if (counts[b] == 0) continue;
    const double xa = f.px(vr.lo + b * w);
    const double xb = f.px(vr.lo + (b + 1) * w);
    const double yt = f.py(counts[b]);
    os << "<rect x=\"" << num(xa) << "\" y=\"" << num(yt) << "\" width=\"" << num(xb - xa)
       << "\" height=\"" << num(f.py(0.0) - yt) << "\" fill=\"#1f77b4\" stroke=\"white\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_heatmap(const SvgAxes& axes, const std::vector<double>& x,
                        const std::vector<double>& y, const std::vector<double>& z,
                        const std::vector<bool>& marked) {
  SvgAxes plain = axes;
  plain.log_x = plain.log_y = false;
  Frame f{plain, {0.0, static_cast<double>(x.size())}, {0.0, static_cast<double>(y.size())}};
  if (x.empty() || y.empty()) {
    f.xr = {0.0, 1.0};
    f.yr = {0.0, 1.0};
  }
  Range zr;
  for (double v : z) {
    if (std::isfinite(v)) zr.add(v);
  }
  zr.finish();
  std::ostringstream os;
  header(os, plain);
  const double cw = (kWidth - kLeft - kRight) / std::max<std::size_t>(x.size(), 1);
  const double ch = (kHeight - kTop - kBottom) / std::max<std::size_t>(y.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      const std::size_t q = i * y.size() + j;
      const double v = q < z.size() ? z[q] : std::numeric_limits<double>::quiet_NaN();
      std::string fill = "#bbbbbb";
      if (std::isfinite(v)) {
        const double u = (v - zr.lo) / (zr.hi - zr.lo);
        const int red = static_cast<int>(std::lround(255 * u));
        const int blue = 255 - red;
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x40%02x", red, blue);
        fill = buf;
      }
      const double xp = kLeft + cw * static_cast<double>(i);
      const double yp = kHeight - kBottom - ch * static_cast<double>(j + 1);
      const bool mark = q < marked.size() && marked[q];
      os << "<rect x=\"" << num(xp) << "\" y=\"" << num(yp) << "\" width=\"" << num(cw)
         << "\" height=\"" << num(ch) << "\" fill=\"" << fill << "\" stroke=\""
         << (mark ? "black" : "white") << "\" stroke-width=\"" << (mark ? "2" : "0.5")
         << "\"/>\n";
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    os << "<text x=\"" << num(kLeft + cw * (i + 0.5)) << "\" y=\"" << num(kHeight - kBottom + 16)
       << "\" text-anchor=\"middle\" font-size=\"10\">" << tick(x[i]) << "</text>\n";
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    os << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(kHeight - kBottom - ch * (j + 0.5) + 4)
       << "\" text-anchor=\"end\" font-size=\"10\">" << tick(y[j]) << "</text>\n";
  }
  os << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"" << num(kHeight - 18)
     << "\" text-anchor=\"middle\">" << escape(plain.x_label) << "</text>\n";
  os << "<text x=\"14\" y=\"" << num((kTop + kHeight - kBottom) / 2)
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << num((kTop + kHeight - kBottom) / 2)
     << ")\">" << escape(plain.y_label) << "</text>\n";
  os << "<text x=\"" << num(kWidth - kRight) << "\" y=\"" << num(kHeight - 6)
     << "\" text-anchor=\"end\" font-size=\"10\">"
     << "blue to red: " << num(zr.lo) << " .. " << num(zr.hi) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace clab
