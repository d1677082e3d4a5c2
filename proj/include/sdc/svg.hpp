#pragma once

// Minimal deterministic SVG 1.1 writer for the experiment figures: line plots
// with optional secondary axis and deviation bands, and an annotated heatmap
// with marching-squares contour lines. No timestamps, fixed number formatting,
// so re-rendering identical inputs yields identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace sdc::svg {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> p = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                               "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    return p;
}

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool secondary_axis = false;
    bool dashed = false;
};

struct Band {
    std::vector<double> x;
    std::vector<double> lo;
    std::vector<double> hi;
    int series_index = 0;  // color pairing
};

struct Limits {
    double lo = 0.0, hi = 1.0;

    static Limits of(const std::vector<double>& v, Limits init = {1e300, -1e300}) {
        Limits l = init;
        for (double t : v) {
            if (!std::isfinite(t)) continue;
            l.lo = std::min(l.lo, t);
            l.hi = std::max(l.hi, t);
        }
        return l;
    }
    void pad() {
        if (lo > hi) { lo = 0.0; hi = 1.0; }
        double span = hi - lo;
        if (span <= 0.0) span = std::max(1.0, std::abs(hi));
        lo -= 0.05 * span;
        hi += 0.05 * span;
    }
};

class LinePlot {
  public:
    std::string title, x_label, y_label, y2_label;
    std::vector<Series> series;
    std::vector<Band> bands;

    void render(std::ostream& os, int width = 640, int height = 440) const {
        const double ml = 62, mr = y2_label.empty() ? 20 : 62, mt = 34, mb = 48;
        const double pw = width - ml - mr, ph = height - mt - mb;

        Limits xl{1e300, -1e300}, yl{1e300, -1e300}, y2l{1e300, -1e300};
        for (const auto& s : series) {
            xl = Limits::of(s.x, xl);
            (s.secondary_axis ? y2l : yl) = Limits::of(s.y, s.secondary_axis ? y2l : yl);
        }
        for (const auto& b : bands) {
            xl = Limits::of(b.x, xl);
            yl = Limits::of(b.lo, yl);
            yl = Limits::of(b.hi, yl);
        }
        xl.pad();
        yl.pad();
        y2l.pad();

        auto px = [&](double x) { return ml + (x - xl.lo) / (xl.hi - xl.lo) * pw; };
        auto py = [&](double y) { return mt + ph - (y - yl.lo) / (yl.hi - yl.lo) * ph; };
        auto py2 = [&](double y) { return mt + ph - (y - y2l.lo) / (y2l.hi - y2l.lo) * ph; };

        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
           << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
        os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
        os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
              "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

        // frame and ticks
        os << "<rect x=\"" << fmt(ml) << "\" y=\"" << fmt(mt) << "\" width=\"" << fmt(pw)
           << "\" height=\"" << fmt(ph) << "\" fill=\"none\" stroke=\"#333333\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            double fx = xl.lo + (xl.hi - xl.lo) * i / 4.0;
            double fy = yl.lo + (yl.hi - yl.lo) * i / 4.0;
            os << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << fmt(mt + ph + 16)
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
               << fmt(fx) << "</text>\n";
            os << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(py(fy) + 4)
               << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fy)
               << "</text>\n";
            if (!y2_label.empty()) {
                double fy2 = y2l.lo + (y2l.hi - y2l.lo) * i / 4.0;
                os << "<text x=\"" << fmt(ml + pw + 6) << "\" y=\"" << fmt(py2(fy2) + 4)
                   << "\" text-anchor=\"start\" font-family=\"sans-serif\" font-size=\"11\">"
                   << fmt(fy2) << "</text>\n";
            }
        }
        os << "<text x=\"" << width / 2 << "\" y=\"" << height - 10
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
           << "</text>\n";
        os << "<text x=\"16\" y=\"" << mt + ph / 2
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
              "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << y_label << "</text>\n";
        if (!y2_label.empty())
            os << "<text x=\"" << width - 14 << "\" y=\"" << mt + ph / 2
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
                  "transform=\"rotate(90 " << width - 14 << " " << mt + ph / 2 << ")\">"
               << y2_label << "</text>\n";

        for (const auto& b : bands) {
            const std::string& color = palette()[b.series_index % palette().size()];
            os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
            for (std::size_t i = 0; i < b.x.size(); ++i)
                os << fmt(px(b.x[i])) << "," << fmt(py(b.hi[i])) << " ";
            for (std::size_t i = b.x.size(); i-- > 0;)
                os << fmt(px(b.x[i])) << "," << fmt(py(b.lo[i])) << " ";
            os << "\"/>\n";
        }

        int color_index = 0;
        for (const auto& s : series) {
            const std::string& color = palette()[color_index % palette().size()];
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\"";
            if (s.dashed) os << " stroke-dasharray=\"6 3\"";
            os << " points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                double yy = s.secondary_axis ? py2(s.y[i]) : py(s.y[i]);
                os << fmt(px(s.x[i])) << "," << fmt(yy) << " ";
            }
            os << "\"/>\n";
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                double yy = s.secondary_axis ? py2(s.y[i]) : py(s.y[i]);
                os << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(yy)
                   << "\" r=\"2.6\" fill=\"" << color << "\"/>\n";
            }
            ++color_index;
        }

        // legend
        double ly = mt + 10;
        color_index = 0;
        for (const auto& s : series) {
            const std::string& color = palette()[color_index % palette().size()];
            os << "<rect x=\"" << fmt(ml + 10) << "\" y=\"" << fmt(ly - 8)
               << "\" width=\"14\" height=\"4\" fill=\"" << color << "\"/>\n";
            os << "<text x=\"" << fmt(ml + 30) << "\" y=\"" << fmt(ly - 2)
               << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
            ly += 16;
            ++color_index;
        }
        os << "</svg>\n";
    }
};

// ---------------------------------------------------------------------------
// Heatmap with contour annotations
// ---------------------------------------------------------------------------

struct Heatmap {
    std::string title, x_label, y_label;
    std::vector<double> x;  // column coordinates
    std::vector<double> y;  // row coordinates
    std::vector<std::vector<double>> values;  // values[row][col], NaN = missing
    std::vector<double> contour_levels;

    void render(std::ostream& os, int width = 640, int height = 460) const {
        const double ml = 66, mr = 24, mt = 34, mb = 50;
        const double pw = width - ml - mr, ph = height - mt - mb;
        const std::size_t nx = x.size(), ny = y.size();

        double vmin = 1e300, vmax = -1e300;
        for (const auto& row : values)
            for (double v : row)
                if (std::isfinite(v)) {
                    vmin = std::min(vmin, v);
                    vmax = std::max(vmax, v);
                }
        if (vmin > vmax) { vmin = 0.0; vmax = 1.0; }
        if (vmax == vmin) vmax = vmin + 1.0;

        auto cell_x = [&](std::size_t j) { return ml + pw * j / nx; };
        auto cell_y = [&](std::size_t i) { return mt + ph - ph * (i + 1) / ny; };
        auto shade = [&](double v) {
            double t = (v - vmin) / (vmax - vmin);
            int r = static_cast<int>(255 * (1.0 - 0.75 * t));
            int g = static_cast<int>(255 * (1.0 - 0.45 * t));
            int b = 255;
            char buf[10];
            std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
            return std::string(buf);
        };

        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
           << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
        os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
        os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
              "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

        for (std::size_t i = 0; i < ny; ++i)
            for (std::size_t j = 0; j < nx; ++j) {
                double v = values[i][j];
                std::string fill = std::isfinite(v) ? shade(v) : "#ffffff";
                os << "<rect x=\"" << fmt(cell_x(j)) << "\" y=\"" << fmt(cell_y(i))
                   << "\" width=\"" << fmt(pw / nx) << "\" height=\"" << fmt(ph / ny)
                   << "\" fill=\"" << fill << "\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n";
                if (std::isfinite(v))
                    os << "<text x=\"" << fmt(cell_x(j) + pw / nx / 2) << "\" y=\""
                       << fmt(cell_y(i) + ph / ny / 2 + 4)
                       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                          "font-size=\"10\">" << fmt(v) << "</text>\n";
            }

        // marching squares on cell centers
        auto cx = [&](std::size_t j) { return ml + pw * (j + 0.5) / nx; };
        auto cy = [&](std::size_t i) { return mt + ph - ph * (i + 0.5) / ny; };
        for (double level : contour_levels) {
            os << "<g stroke=\"#444444\" stroke-width=\"1.1\" fill=\"none\">\n";
            for (std::size_t i = 0; i + 1 < ny; ++i)
                for (std::size_t j = 0; j + 1 < nx; ++j) {
                    double v00 = values[i][j], v10 = values[i][j + 1];
                    double v01 = values[i + 1][j], v11 = values[i + 1][j + 1];
                    if (!std::isfinite(v00) || !std::isfinite(v10) || !std::isfinite(v01) ||
                        !std::isfinite(v11))
                        continue;
                    auto interp = [&](double a, double b) { return (level - a) / (b - a); };
                    std::vector<std::pair<double, double>> pts;
                    if ((v00 < level) != (v10 < level))
                        pts.push_back({cx(j) + interp(v00, v10) * (cx(j + 1) - cx(j)), cy(i)});
                    if ((v01 < level) != (v11 < level))
                        pts.push_back({cx(j) + interp(v01, v11) * (cx(j + 1) - cx(j)), cy(i + 1)});
                    if ((v00 < level) != (v01 < level))
                        pts.push_back({cx(j), cy(i) + interp(v00, v01) * (cy(i + 1) - cy(i))});
                    if ((v10 < level) != (v11 < level))
                        pts.push_back({cx(j + 1), cy(i) + interp(v10, v11) * (cy(i + 1) - cy(i))});
                    if (pts.size() == 2)
                        os << "<line x1=\"" << fmt(pts[0].first) << "\" y1=\""
                           << fmt(pts[0].second) << "\" x2=\"" << fmt(pts[1].first) << "\" y2=\""
                           << fmt(pts[1].second) << "\"/>\n";
                }
            os << "</g>\n";
        }

        for (std::size_t j = 0; j < nx; ++j)
            os << "<text x=\"" << fmt(cx(j)) << "\" y=\"" << fmt(mt + ph + 16)
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
               << fmt(x[j]) << "</text>\n";
        for (std::size_t i = 0; i < ny; ++i)
            os << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(cy(i) + 4)
               << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
               << fmt(y[i]) << "</text>\n";
        os << "<text x=\"" << width / 2 << "\" y=\"" << height - 10
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
           << "</text>\n";
        os << "<text x=\"16\" y=\"" << mt + ph / 2
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
              "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << y_label << "</text>\n";
        os << "</svg>\n";
    }
};

} // namespace sdc::svg
