#include "svg_plot.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace egoid::cli {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 64, kRight = 150, kTop = 36, kBottom = 52;
constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string line_plot_svg(const PlotSpec& spec, const std::vector<Series>& series) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double xr = spec.x_max > spec.x_min ? spec.x_max - spec.x_min : 1.0;
  const double yr = spec.y_max > spec.y_min ? spec.y_max - spec.y_min : 1.0;
  auto sx = [&](double x) { return kLeft + (x - spec.x_min) / xr * pw; };
  auto sy = [&](double y) { return kTop + ph - (y - spec.y_min) / yr * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << escape(spec.title) << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = spec.x_min + xr * i / 5, yv = spec.y_min + yr * i / 5;
    o << "<line x1=\"" << num(sx(xv)) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(sx(xv)) << "\" y2=\""
      << num(kTop + ph) << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(sy(yv)) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
      << num(sy(yv)) << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">" << tick(xv)
      << "</text>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(sy(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
      << "</text>\n";
  }
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
    << escape(spec.x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << num(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(spec.y_label) << "</text>\n";
  if (spec.diagonal) {
    const double lo = std::max(spec.x_min, spec.y_min), hi = std::min(spec.x_max, spec.y_max);
    o << "<line x1=\"" << num(sx(lo)) << "\" y1=\"" << num(sy(lo)) << "\" x2=\"" << num(sx(hi)) << "\" y2=\""
      << num(sy(hi)) << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* colour = kColours[i % (sizeof kColours / sizeof *kColours)];
    const auto& s = series[i];
    o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t k = 0; k < s.points.size(); ++k) {
      o << (k ? " " : "") << num(sx(s.points[k].first)) << "," << num(sy(s.points[k].second));
    }
    o << "\"/>\n";
    if (s.markers) {
      for (const auto& [x, y] : s.points) {
        o << "<circle cx=\"" << num(sx(x)) << "\" cy=\"" << num(sy(y)) << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
      }
    }
    const double ly = kTop + 12 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << num(kLeft + pw + 10) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(kLeft + pw + 28)
      << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(kLeft + pw + 32) << "\" y=\"" << num(ly) << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace egoid::cli
