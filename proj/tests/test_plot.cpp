#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "diffpose/errors.hpp"
#include "diffpose/plot.hpp"

using namespace diffpose;

namespace {

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

}  // namespace

TEST_CASE("plot: SVG carries axes, one polyline per series and the legend") {
    std::vector<PlotSeries> series = {
        {"train", {0, 1, 2, 3}, {1.0, 0.5, 0.3, 0.25}},
        {"val", {0, 1, 2, 3}, {1.1, 0.7, 0.5, 0.45}},
    };
    const std::string svg = render_line_chart("loss", "step", "mse", series);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(count_occurrences(svg, "<polyline") >= 2);
    CHECK(svg.find("loss") != std::string::npos);
    CHECK(svg.find("step") != std::string::npos);
    CHECK(svg.find("mse") != std::string::npos);
    CHECK(svg.find("train") != std::string::npos);
    CHECK(svg.find("val") != std::string::npos);

    // Deterministic output for identical inputs.
    CHECK(svg == render_line_chart("loss", "step", "mse", series));
}

TEST_CASE("plot: labels are XML-escaped and degenerate ranges render") {
    std::vector<PlotSeries> series = {{"a<b&c", {1, 2}, {5.0, 5.0}}};
    const std::string svg = render_line_chart("t<&>", "x", "y", series);
    CHECK(svg.find("a&lt;b&amp;c") != std::string::npos);
    CHECK(svg.find("a<b&c") == std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);  // constant y still renders
}

TEST_CASE("plot: invalid inputs are rejected") {
    CHECK_THROWS_AS(render_line_chart("t", "x", "y", {}), ConfigError);
    std::vector<PlotSeries> empty_series = {{"a", {}, {}}};
    CHECK_THROWS_AS(render_line_chart("t", "x", "y", empty_series), ConfigError);
    std::vector<PlotSeries> mismatched = {{"a", {1, 2, 3}, {1, 2}}};
    CHECK_THROWS_AS(render_line_chart("t", "x", "y", mismatched), ShapeError);
}

TEST_CASE("plot: write_line_chart produces the same bytes as the renderer") {
    std::vector<PlotSeries> series = {{"s", {0, 1}, {2.0, 4.0}}};
    const char* path = "plot_test.svg";
    write_line_chart(path, "t", "x", "y", series);
    std::ifstream in(path);
    const std::string on_disk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::remove(path);
    CHECK(on_disk == render_line_chart("t", "x", "y", series));
}