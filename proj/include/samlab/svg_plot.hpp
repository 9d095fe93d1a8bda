#pragma once

#include <string>
#include <utility>
#include <vector>

namespace samlab {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Minimal static SVG renderer for result tables: axes with ticks, one
/// polyline (and markers) per series, a small legend.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::vector<PlotSeries>& series,
                    bool draw_lines);

}  // namespace samlab
