#pragma once

#include <string>
#include <vector>

namespace rcs {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  int width = 640;
  int height = 420;
  bool log_y = false;
};

/// Self-contained SVG line chart with markers and a legend. Non-finite points
/// are skipped; log_y drops non-positive values.
std::string line_chart_svg(const PlotSpec& spec, const std::vector<Series>& series);

/// Long-format summary rows (series, x, y) grouped into series in first-seen
/// order. Reads the header to locate the three columns.
std::vector<Series> series_from_csv(const std::string& csv_text);

}  // namespace rcs
