#pragma once

/// @file svg.hpp
/// @brief Small SVG canvas for heatmaps, quivers, paths and line charts.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace consflow::cli {

struct Rect {
    double x0, y0, x1, y1;
};

/// One plotting panel mapping data coordinates into a pixel box.
class Panel {
public:
    Panel(double px, double py, double pw, double ph, Rect data) : px_(px), py_(py), pw_(pw), ph_(ph), d_(data) {}

    [[nodiscard]] double sx(double x) const { return px_ + (x - d_.x0) / (d_.x1 - d_.x0) * pw_; }
    [[nodiscard]] double sy(double y) const { return py_ + ph_ - (y - d_.y0) / (d_.y1 - d_.y0) * ph_; }
    [[nodiscard]] const Rect& data() const { return d_; }
    [[nodiscard]] double width() const { return pw_; }
    [[nodiscard]] double height() const { return ph_; }
    [[nodiscard]] double left() const { return px_; }
    [[nodiscard]] double top() const { return py_; }

private:
    double px_, py_, pw_, ph_;
    Rect d_;
};

inline std::string viridis(double v) {
    v = std::clamp(v, 0.0, 1.0);
    static const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    const double p = v * 4.0;
    const int i = std::min(3, static_cast<int>(p));
    const double f = p - i;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[i][0] + f * (stops[i + 1][0] - stops[i][0])),
                  static_cast<int>(stops[i][1] + f * (stops[i + 1][1] - stops[i][1])),
                  static_cast<int>(stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
    return buf;
}

class Svg {
public:
    Svg(double w, double h) : w_(w), h_(h) {
        body_ << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    }

    void text(double x, double y, const std::string& s, double size = 12, const char* anchor = "middle") {
        body_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
              << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
    }

    void frame(const Panel& p, const std::string& title) {
        body_ << "<rect x=\"" << p.left() << "\" y=\"" << p.top() << "\" width=\"" << p.width() << "\" height=\""
              << p.height() << "\" fill=\"none\" stroke=\"black\"/>\n";
        text(p.left() + p.width() / 2, p.top() - 6, title, 13);
    }

    /// Cells of a regular grid coloured by value / vmax.
    void heatmap(const Panel& p, std::size_t nx, std::size_t ny, const std::vector<double>& v) {
        const double vmax = std::max(*std::max_element(v.begin(), v.end()), 1e-300);
        const Rect& d = p.data();
        const double cw = p.width() / static_cast<double>(nx), ch = p.height() / static_cast<double>(ny);
        for (std::size_t j = 0; j < ny; ++j) {
            for (std::size_t i = 0; i < nx; ++i) {
                const double x = d.x0 + (static_cast<double>(i) + 0.5) / static_cast<double>(nx) * (d.x1 - d.x0);
                const double y = d.y0 + (static_cast<double>(j) + 0.5) / static_cast<double>(ny) * (d.y1 - d.y0);
                body_ << "<rect x=\"" << p.sx(x) - cw / 2 << "\" y=\"" << p.sy(y) - ch / 2 << "\" width=\"" << cw + 0.5
                      << "\" height=\"" << ch + 0.5 << "\" fill=\"" << viridis(v[j * nx + i] / vmax) << "\"/>\n";
            }
        }
    }

    void arrow(const Panel& p, double x, double y, double dx, double dy, const char* colour) {
        const double x0 = p.sx(x), y0 = p.sy(y), x1 = p.sx(x + dx), y1 = p.sy(y + dy);
        body_ << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y1 << "\" stroke=\""
              << colour << "\" stroke-width=\"1\"/>\n";
        body_ << "<circle cx=\"" << x1 << "\" cy=\"" << y1 << "\" r=\"1.2\" fill=\"" << colour << "\"/>\n";
    }

    void circle(const Panel& p, double x, double y, double r, const char* fill, const char* stroke) {
        body_ << "<ellipse cx=\"" << p.sx(x) << "\" cy=\"" << p.sy(y) << "\" rx=\""
              << std::abs(p.sx(x + r) - p.sx(x)) << "\" ry=\"" << std::abs(p.sy(y + r) - p.sy(y)) << "\" fill=\""
              << fill << "\" stroke=\"" << stroke << "\"/>\n";
    }

    void dot(const Panel& p, double x, double y, const char* colour, double r = 1.5) {
        body_ << "<circle cx=\"" << p.sx(x) << "\" cy=\"" << p.sy(y) << "\" r=\"" << r << "\" fill=\"" << colour
              << "\"/>\n";
    }

    void polyline(const Panel& p, const std::vector<double>& xs, const std::vector<double>& ys, const char* colour,
                  double width = 1.0, double opacity = 1.0) {
        body_ << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width
              << "\" stroke-opacity=\"" << opacity << "\" points=\"";
        for (std::size_t k = 0; k < xs.size(); ++k) body_ << p.sx(xs[k]) << "," << p.sy(ys[k]) << " ";
        body_ << "\"/>\n";
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\">\n"
            << body_.str() << "</svg>\n";
    }

private:
    double w_, h_;
    std::ostringstream body_;
};

}  // namespace consflow::cli
