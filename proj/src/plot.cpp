#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "diffpose/errors.hpp"
#include "diffpose/plot.hpp"

namespace diffpose {

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
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

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf"};
constexpr int kPaletteSize = 7;

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<PlotSeries>& series,
                              int width, int height) {
    if (series.empty()) throw ConfigError("render_line_chart: no series to plot");
    for (const PlotSeries& s : series) {
        if (s.x.size() != s.y.size())
            throw ShapeError("render_line_chart: series '" + s.label + "' has mismatched x/y sizes");
        if (s.x.empty())
            throw ConfigError("render_line_chart: series '" + s.label + "' is empty");
    }

    double xmin = series[0].x[0], xmax = xmin, ymin = series[0].y[0], ymax = ymin;
    for (const PlotSeries& s : series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (xmax == xmin) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }

    const double ml = 64, mr = 24, mt = 40, mb = 48;  // margins
    const double pw = width - ml - mr;                // plot area
    const double ph = height - mt - mb;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "  <text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << escape_xml(title) << "</text>\n";

    // axes
    svg << "  <line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml)
        << "\" y2=\"" << fmt(mt + ph) << "\" stroke=\"black\"/>\n";
    svg << "  <line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\"" << fmt(ml + pw)
        << "\" y2=\"" << fmt(mt + ph) << "\" stroke=\"black\"/>\n";

    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / ticks;
        const double fy = ymin + (ymax - ymin) * i / ticks;
        svg << "  <line x1=\"" << fmt(px(fx)) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\""
            << fmt(px(fx)) << "\" y2=\"" << fmt(mt + ph + 4) << "\" stroke=\"black\"/>\n";
        svg << "  <text x=\"" << fmt(px(fx)) << "\" y=\"" << fmt(mt + ph + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fx)
            << "</text>\n";
        svg << "  <line x1=\"" << fmt(ml - 4) << "\" y1=\"" << fmt(py(fy)) << "\" x2=\"" << fmt(ml)
            << "\" y2=\"" << fmt(py(fy)) << "\" stroke=\"black\"/>\n";
        svg << "  <text x=\"" << fmt(ml - 8) << "\" y=\"" << fmt(py(fy) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fy)
            << "</text>\n";
    }
    svg << "  <text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(mt + ph + 36)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << escape_xml(x_label) << "</text>\n";
    svg << "  <text x=\"16\" y=\"" << fmt(mt + ph / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
        << fmt(mt + ph / 2) << ")\">" << escape_xml(y_label) << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        const char* color = kPalette[si % kPaletteSize];
        svg << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) svg << " ";
            svg << fmt(px(s.x[i])) << "," << fmt(py(s.y[i]));
        }
        svg << "\"/>\n";
        // legend row
        const double ly = mt + 6 + 16 * static_cast<double>(si);
        svg << "  <line x1=\"" << fmt(ml + pw - 110) << "\" y1=\"" << fmt(ly) << "\" x2=\""
            << fmt(ml + pw - 90) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        svg << "  <text x=\"" << fmt(ml + pw - 84) << "\" y=\"" << fmt(ly + 4)
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape_xml(s.label)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series, int width, int height) {
    std::ofstream out(path);
    if (!out) throw IoError("write_line_chart: cannot write '" + path + "'");
    out << render_line_chart(title, x_label, y_label, series, width, height);
}

}  // namespace diffpose
