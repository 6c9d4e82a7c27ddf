#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace unmask {

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series, in [0,1]
};

struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> series;
  std::vector<BarGroup> groups;
};

struct LineSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y) in [0,1]^2
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<LineSeries> series;
  bool diagonal = false;  // draw y = x as a dashed reference
};

/// Self-contained SVG documents; output depends only on the input values.
std::string render_bar_chart(const BarChart& chart);
std::string render_line_chart(const LineChart& chart);

std::string xml_escape(const std::string& text);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace unmask
