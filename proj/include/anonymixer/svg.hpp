#pragma once

// Small SVG emitters for cluster scatter plots and loss curves.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "anonymixer/assignment.hpp"
#include "anonymixer/matrix.hpp"

namespace anonymixer::svg {

inline constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                           "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
inline constexpr const char* kNoiseColor = "#bbbbbb";

inline std::string color_for(int label) {
    if (label < 0) return kNoiseColor;
    return kPalette[static_cast<std::size_t>(label) % std::size(kPalette)];
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!(lo <= hi)) lo = 0.0, hi = 1.0;
        const double span = hi - lo > 0.0 ? hi - lo : 1.0;
        lo -= 0.05 * span;
        hi += 0.05 * span;
    }
};

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline void header(std::ostream& out, int w, int h, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
        << w << ' ' << h << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
        << title << "</text>\n";
}

inline void axes(std::ostream& out, int left, int top, int right, int bottom, const Range& x, const Range& y) {
    out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left << "\" height=\"" << bottom - top
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    auto label = [&](double px, double py, const std::string& text, const char* anchor) {
        out << "<text x=\"" << num(px) << "\" y=\"" << num(py) << "\" text-anchor=\"" << anchor
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << text << "</text>\n";
    };
    label(left, bottom + 14, num(x.lo), "start");
    label(right, bottom + 14, num(x.hi), "end");
    label(left - 4, bottom, num(y.lo), "end");
    label(left - 4, top + 10, num(y.hi), "end");
}

/// Scatter of the first two columns of `points`, coloured by label.
inline void scatter(std::ostream& out, const Matrix& points, const std::vector<int>& labels, const std::string& title) {
    constexpr int W = 640, H = 480, L = 60, T = 30, R = 620, B = 440;
    Range xr, yr;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        xr.add(points(i, 0));
        yr.add(points.cols() > 1 ? points(i, 1) : 0.0);
    }
    xr.pad();
    yr.pad();
    header(out, W, H, title);
    axes(out, L, T, R, B, xr, yr);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const double y = points.cols() > 1 ? points(i, 1) : 0.0;
        const double px = L + (points(i, 0) - xr.lo) / (xr.hi - xr.lo) * (R - L);
        const double py = B - (y - yr.lo) / (yr.hi - yr.lo) * (B - T);
        out << "<circle cx=\"" << num(px) << "\" cy=\"" << num(py) << "\" r=\"2.5\" fill=\"" << color_for(labels[i])
            << "\" fill-opacity=\"0.8\"/>\n";
    }
    out << "</svg>\n";
}

struct Series {
    std::string name;
    std::vector<double> values;
};

/// Line chart of several series against their index.
inline void line_chart(std::ostream& out, const std::vector<Series>& series, const std::string& title) {
    constexpr int W = 720, H = 420, L = 60, T = 30, R = 700, B = 380;
    Range xr, yr;
    std::size_t len = 0;
    for (const auto& s : series) {
        len = std::max(len, s.values.size());
        for (double v : s.values) yr.add(v);
    }
    xr.lo = 0.0;
    xr.hi = len > 1 ? static_cast<double>(len - 1) : 1.0;
    yr.pad();
    header(out, W, H, title);
    axes(out, L, T, R, B, xr, yr);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        out << "<polyline fill=\"none\" stroke=\"" << kPalette[k % std::size(kPalette)]
            << "\" stroke-width=\"1\" points=\"";
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            const double px = L + static_cast<double>(i) / (xr.hi - xr.lo) * (R - L);
            const double py = B - (s.values[i] - yr.lo) / (yr.hi - yr.lo) * (B - T);
            out << num(px) << ',' << num(py) << ' ';
        }
        out << "\"/>\n";
        out << "<text x=\"" << R - 10 << "\" y=\"" << T + 16 + 14 * static_cast<int>(k)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
            << kPalette[k % std::size(kPalette)] << "\">" << s.name << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace anonymixer::svg
