#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace str::app {

/// One stacked panel: a line with an optional shaded band.
struct PlotPanel {
  std::string name;
  std::vector<std::optional<double>> values;
  std::vector<double> lower;
  std::vector<double> upper;
};

namespace detail {

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

/// Panels stacked top to bottom sharing the time axis; `marks` are time
/// indices drawn as grey vertical rules through every panel.
inline void write_svg(std::ostream& os, const std::vector<PlotPanel>& panels, const std::vector<std::size_t>& marks) {
  const double width = 960.0, left = 70.0, right = 20.0, top = 20.0;
  const double panel_h = 130.0, gap = 18.0;
  const double plot_w = width - left - right;
  const double height = top + static_cast<double>(panels.size()) * (panel_h + gap) + 10.0;
  std::size_t n = 0;
  for (const auto& p : panels) n = std::max(n, p.values.size());
  const double span = n > 1 ? static_cast<double>(n - 1) : 1.0;
  auto x_of = [&](std::size_t t) { return left + plot_w * static_cast<double>(t) / span; };

  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt2(width) << "\" height=\""
     << detail::fmt2(height) << "\" viewBox=\"0 0 " << detail::fmt2(width) << ' ' << detail::fmt2(height) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double y0 = top + static_cast<double>(p) * (panel_h + gap);
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& v : panel.values)
      if (v) lo = std::min(lo, *v), hi = std::max(hi, *v);
    for (double v : panel.lower) lo = std::min(lo, v);
    for (double v : panel.upper) hi = std::max(hi, v);
    if (!std::isfinite(lo)) lo = -1.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto y_of = [&](double v) { return y0 + panel_h * (hi - v) / (hi - lo); };

    os << "<g class=\"panel\" id=\"panel-" << detail::xml_escape(panel.name) << "\">\n";
    os << "<rect x=\"" << detail::fmt2(left) << "\" y=\"" << detail::fmt2(y0) << "\" width=\"" << detail::fmt2(plot_w)
       << "\" height=\"" << detail::fmt2(panel_h) << "\" fill=\"none\" stroke=\"#999999\"/>\n";
    os << "<text x=\"" << detail::fmt2(left - 6) << "\" y=\"" << detail::fmt2(y0 + panel_h / 2)
       << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" << detail::xml_escape(panel.name)
       << "</text>\n";
    os << "<text x=\"" << detail::fmt2(left + 4) << "\" y=\"" << detail::fmt2(y0 + 11)
       << "\" font-family=\"sans-serif\" font-size=\"9\" fill=\"#666666\">" << detail::fmt2(hi) << "</text>\n";
    os << "<text x=\"" << detail::fmt2(left + 4) << "\" y=\"" << detail::fmt2(y0 + panel_h - 3)
       << "\" font-family=\"sans-serif\" font-size=\"9\" fill=\"#666666\">" << detail::fmt2(lo) << "</text>\n";

    for (std::size_t t : marks) {
      if (t >= n) continue;
      os << "<line class=\"mark\" x1=\"" << detail::fmt2(x_of(t)) << "\" y1=\"" << detail::fmt2(y0) << "\" x2=\""
         << detail::fmt2(x_of(t)) << "\" y2=\"" << detail::fmt2(y0 + panel_h) << "\" stroke=\"#bbbbbb\"/>\n";
    }

    if (!panel.lower.empty() && panel.lower.size() == panel.upper.size()) {
      os << "<polygon class=\"band\" fill=\"#3366cc\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
      for (std::size_t t = 0; t < panel.upper.size(); ++t) {
        os << detail::fmt2(x_of(t)) << ',' << detail::fmt2(y_of(panel.upper[t])) << ' ';
      }
      for (std::size_t t = panel.lower.size(); t-- > 0;) {
        os << detail::fmt2(x_of(t)) << ',' << detail::fmt2(y_of(panel.lower[t])) << (t ? " " : "");
      }
      os << "\"/>\n";
    }

    os << "<path class=\"line\" fill=\"none\" stroke=\"#000000\" stroke-width=\"0.8\" d=\"";
    bool pen = false;
    for (std::size_t t = 0; t < panel.values.size(); ++t) {
      if (!panel.values[t]) {
        pen = false;
        continue;
      }
      os << (pen ? 'L' : 'M') << detail::fmt2(x_of(t)) << ',' << detail::fmt2(y_of(*panel.values[t])) << ' ';
      pen = true;
    }
    os << "\"/>\n</g>\n";
  }
  os << "</svg>\n";
}

}  // namespace str::app
