#include "samlab/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace samlab {

namespace {

constexpr double kWidth = 680.0;
constexpr double kHeight = 460.0;
constexpr double kMarginLeft = 72.0;
constexpr double kMarginRight = 24.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 56.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void include(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo < hi)) {
      lo -= 1.0;
      hi += 1.0;
      return;
    }
    const double margin = 0.05 * (hi - lo);
    lo -= margin;
    hi += margin;
  }
};

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::vector<PlotSeries>& series,
                    bool draw_lines) {
  if (series.empty()) throw std::invalid_argument("svg plot: no series to draw");
  Range xr, yr;
  std::size_t total_points = 0;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xr.include(x);
      yr.include(y);
      ++total_points;
    }
  }
  if (total_points == 0) throw std::invalid_argument("svg plot: series hold no points");
  xr.pad();
  yr.pad();

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const auto sx = [&](double x) { return kMarginLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  const auto sy = [&](double y) {
    return kMarginTop + plot_h - (y - yr.lo) / (yr.hi - yr.lo) * plot_h;
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("svg plot: cannot open " + path + " for writing");

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
         "font-family=\"sans-serif\">"
      << title << "</text>\n";

  // Frame and ticks.
  out << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / kTicks;
    const double px = sx(fx);
    out << "<line x1=\"" << px << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\"" << px
        << "\" y2=\"" << kMarginTop + plot_h + 5 << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << px << "\" y=\"" << kMarginTop + plot_h + 20
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << num(fx)
        << "</text>\n";
    const double fy = yr.lo + (yr.hi - yr.lo) * i / kTicks;
    const double py = sy(fy);
    out << "<line x1=\"" << kMarginLeft - 5 << "\" y1=\"" << py << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << py << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << kMarginLeft - 9 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << num(fy)
        << "</text>\n";
  }
  out << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << kHeight - 14
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << x_label
      << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (draw_lines && series[s].points.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : series[s].points) out << sx(x) << ',' << sy(y) << ' ';
      out << "\"/>\n";
    }
    for (const auto& [x, y] : series[s].points) {
      out << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    // Legend entry.
    const double ly = kMarginTop + 14 + 16 * static_cast<double>(s);
    out << "<circle cx=\"" << kMarginLeft + 12 << "\" cy=\"" << ly << "\" r=\"4\" fill=\""
        << color << "\"/>\n";
    out << "<text x=\"" << kMarginLeft + 22 << "\" y=\"" << ly + 4
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << series[s].name << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("svg plot: write to " + path + " failed");
}

}  // namespace samlab
