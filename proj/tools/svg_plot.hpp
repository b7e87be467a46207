#pragma once

#include <string>
#include <utility>
#include <vector>

namespace egoid::cli {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
  bool markers = true;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool diagonal = false;  // dashed y = x reference
};

/// Minimal self-contained SVG line chart.
std::string line_plot_svg(const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace egoid::cli
