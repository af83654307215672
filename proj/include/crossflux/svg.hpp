#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace crossflux {

// Minimal deterministic SVG emitter for bifurcation diagrams: fixed layout,
// fixed number formatting, no external plotting dependency, so identical
// data always produces identical bytes.

struct SvgSeries {
  std::vector<std::array<double, 2>> points;
  std::string color = "#1f4e9c";
  bool dashed = false;  // dashed stroke marks branches with unstable points
  std::string label;
};

struct SvgPanel {
  std::string title;
  std::string x_label = "d2";
  std::string y_label;
  std::vector<SvgSeries> series;
};

namespace svg_detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

inline std::string fmt_tick(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

// largest "nice" step (1, 2, 5) x 10^k not exceeding the raw step
inline double nice_step(double raw) {
  if (!(raw > 0.0)) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  if (r >= 5.0) return 5.0 * mag;
  if (r >= 2.0) return 2.0 * mag;
  return mag;
}

struct Range {
  double lo = 0, hi = 1;
  double span() const { return hi - lo; }
};

inline Range data_range(const std::vector<SvgSeries>& series, int axis) {
  Range r{1e300, -1e300};
  for (const auto& s : series)
    for (const auto& p : s.points) {
      r.lo = std::min(r.lo, p[axis]);
      r.hi = std::max(r.hi, p[axis]);
    }
  if (r.lo > r.hi) return Range{0, 1};
  if (r.hi - r.lo < 1e-12) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  const double pad = 0.05 * (r.hi - r.lo);
  return Range{r.lo - pad, r.hi + pad};
}

}  // namespace svg_detail

inline std::string render_svg(const std::vector<SvgPanel>& panels, int columns,
                              int panel_w = 480, int panel_h = 360) {
  using namespace svg_detail;
  const int cols = std::max(1, columns);
  const int rows = (static_cast<int>(panels.size()) + cols - 1) / cols;
  const int width = cols * panel_w;
  const int height = rows * panel_h;
  const double ml = 66, mr = 16, mt = 34, mb = 44;  // margins inside a panel

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const SvgPanel& panel = panels[pi];
    const double ox = static_cast<double>(pi % cols) * panel_w;
    const double oy = static_cast<double>(pi / cols) * panel_h;
    const double x0 = ox + ml, x1 = ox + panel_w - mr;
    const double y0 = oy + panel_h - mb, y1 = oy + mt;  // y grows downward in svg
    const Range rx = data_range(panel.series, 0);
    const Range ry = data_range(panel.series, 1);
    auto px = [&](double x) { return x0 + (x - rx.lo) / rx.span() * (x1 - x0); };
    auto py = [&](double y) { return y0 + (y - ry.lo) / ry.span() * (y1 - y0); };

    os << "<g>\n";
    os << "<text x=\"" << fmt(ox + panel_w / 2.0) << "\" y=\"" << fmt(oy + 20)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << panel.title
       << "</text>\n";
    // axes
    os << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(x1) << "\" y2=\""
       << fmt(y0) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(x0) << "\" y2=\""
       << fmt(y1) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    const double sx = nice_step(rx.span() / 5.0);
    for (double t = std::ceil(rx.lo / sx) * sx; t <= rx.hi + 1e-12 * rx.span(); t += sx) {
      os << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(px(t))
         << "\" y2=\"" << fmt(y0 + 4) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
      os << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(y0 + 16)
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt_tick(t)
         << "</text>\n";
    }
    const double sy = nice_step(ry.span() / 5.0);
    for (double t = std::ceil(ry.lo / sy) * sy; t <= ry.hi + 1e-12 * ry.span(); t += sy) {
      os << "<line x1=\"" << fmt(x0 - 4) << "\" y1=\"" << fmt(py(t)) << "\" x2=\"" << fmt(x0)
         << "\" y2=\"" << fmt(py(t)) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
      os << "<text x=\"" << fmt(x0 - 7) << "\" y=\"" << fmt(py(t) + 3)
         << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt_tick(t)
         << "</text>\n";
    }
    os << "<text x=\"" << fmt((x0 + x1) / 2.0) << "\" y=\"" << fmt(y0 + 32)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << panel.x_label
       << "</text>\n";
    os << "<text x=\"" << fmt(ox + 14) << "\" y=\"" << fmt((y0 + y1) / 2.0)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 "
       << fmt(ox + 14) << " " << fmt((y0 + y1) / 2.0) << ")\">" << panel.y_label << "</text>\n";

    for (const SvgSeries& s : panel.series) {
      if (s.points.empty()) continue;
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
      if (s.dashed) os << " stroke-dasharray=\"5,4\"";
      if (!s.label.empty()) os << " data-label=\"" << s.label << "\"";
      os << " points=\"";
      for (std::size_t i = 0; i < s.points.size(); ++i) {
        if (i) os << " ";
        os << fmt(px(s.points[i][0])) << "," << fmt(py(s.points[i][1]));
      }
      os << "\"/>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace crossflux
