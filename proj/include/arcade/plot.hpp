#pragma once

// Minimal static SVG line plots for the emitted CSV curves. Presentation
// only; no interactivity.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "arcade/errors.hpp"
#include "arcade/metrics.hpp"

namespace arcade {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> band;  // optional +- band, same length as y
    std::string color = "#1f77b4";
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    double y_min = 0.0;
    double y_max = 1.0;
};

namespace detail {

inline std::string svg_num(double v) {
    std::ostringstream os;
    os.precision(2);
    os << std::fixed << v;
    return os.str();
}

}  // namespace detail

inline void write_svg_plot(const std::string& path, const PlotSpec& spec) {
    constexpr double W = 640, H = 420, ML = 64, MR = 24, MT = 40, MB = 48;
    const double plot_w = W - ML - MR, plot_h = H - MT - MB;

    double x_min = 0.0, x_max = 1.0;
    bool first = true;
    for (const auto& s : spec.series)
        for (double v : s.x) {
            x_min = first ? v : std::min(x_min, v);
            x_max = first ? v : std::max(x_max, v);
            first = false;
        }
    if (first || x_max == x_min) x_max = x_min + 1.0;

    const auto px = [&](double x) { return ML + plot_w * (x - x_min) / (x_max - x_min); };
    const auto py = [&](double y) {
        return MT + plot_h * (1.0 - (y - spec.y_min) / (spec.y_max - spec.y_min));
    };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_svg_plot: cannot open " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
        << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
        << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << spec.title << "</text>\n";

    // axes box and ticks
    out << "<rect x=\"" << ML << "\" y=\"" << MT << "\" width=\"" << plot_w << "\" height=\""
        << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fy = spec.y_min + (spec.y_max - spec.y_min) * t / 4.0;
        out << "<line x1=\"" << ML << "\" y1=\"" << py(fy) << "\" x2=\"" << W - MR << "\" y2=\""
            << py(fy) << "\" stroke=\"#ddd\"/>\n"
            << "<text x=\"" << ML - 8 << "\" y=\"" << py(fy) + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << detail::svg_num(fy) << "</text>\n";
        const double fx = x_min + (x_max - x_min) * t / 4.0;
        out << "<text x=\"" << px(fx) << "\" y=\"" << H - MB + 18
            << "\" text-anchor=\"middle\" font-size=\"11\">" << detail::svg_num(fx)
            << "</text>\n";
    }
    out << "<text x=\"" << ML + plot_w / 2 << "\" y=\"" << H - 10
        << "\" text-anchor=\"middle\" font-size=\"13\">" << spec.x_label << "</text>\n"
        << "<text x=\"16\" y=\"" << MT + plot_h / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
        << MT + plot_h / 2 << ")\">" << spec.y_label << "</text>\n";

    int legend_row = 0;
    for (const auto& s : spec.series) {
        if (s.x.empty()) continue;
        if (!s.band.empty()) {
            std::ostringstream area;
            for (std::size_t i = 0; i < s.x.size(); ++i)
                area << px(s.x[i]) << ',' << py(s.y[i] + s.band[i]) << ' ';
            for (std::size_t i = s.x.size(); i-- > 0;)
                area << px(s.x[i]) << ',' << py(s.y[i] - s.band[i]) << ' ';
            out << "<polygon points=\"" << area.str() << "\" fill=\"" << s.color
                << "\" opacity=\"0.15\"/>\n";
        }
        std::ostringstream line;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            line << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        out << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << s.color
            << "\" stroke-width=\"2\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
                << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
        out << "<rect x=\"" << ML + 10 << "\" y=\"" << MT + 8 + 18 * legend_row
            << "\" width=\"14\" height=\"4\" fill=\"" << s.color << "\"/>\n"
            << "<text x=\"" << ML + 30 << "\" y=\"" << MT + 14 + 18 * legend_row
            << "\" font-size=\"12\">" << s.label << "</text>\n";
        ++legend_row;
    }
    out << "</svg>\n";
}

}  // namespace arcade
