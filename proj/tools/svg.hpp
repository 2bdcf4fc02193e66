#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sage::cli {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // drawn in the given order
};

// Axes, ticks, one polyline plus markers per series, legend.
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::size_t color = 0;
};

struct PlotPath {
  std::vector<std::pair<double, double>> points;
  std::size_t color = 0;
  bool emphasised = false;  // drawn thick and dark, e.g. a shared prefix
};

std::string scatter_plot(const std::string& title, const std::vector<ScatterPoint>& points,
                         const std::vector<PlotPath>& paths);

std::string xml_escape(const std::string& s);

}  // namespace sage::cli
