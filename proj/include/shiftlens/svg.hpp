#pragma once

#include <string>
#include <vector>

namespace shiftlens::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> y_err;  // optional error-bar half-widths
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  double y_min = 0.0;
  double y_max = 1.0;
  std::vector<Series> series;
};

struct BarGroup {
  std::string label;  // category tick
  std::vector<double> values;
  std::vector<double> errors;  // optional, same length as values
};

struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> series_labels;  // one per value in each group
  std::vector<BarGroup> groups;
  double y_max = 1.0;
};

std::string render_line_chart(const LineChart& chart);
std::string render_bar_chart(const BarChart& chart);

}  // namespace shiftlens::svg
