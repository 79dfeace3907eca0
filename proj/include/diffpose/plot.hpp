#pragma once

#include <string>
#include <vector>

namespace diffpose {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal dependency-free SVG line chart: axes, tick labels, one polyline per
// series, legend.  Output is deterministic for identical inputs.
std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<PlotSeries>& series,
                              int width = 720, int height = 440);

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series, int width = 720, int height = 440);

}  // namespace diffpose
