#include "steerlab/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

namespace steerlab {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_fit_svg(std::span<const FitPoint> points, const ScalingFitParams& fit,
                           const std::string& title, const std::string& y_label) {
    std::vector<FitPoint> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](const FitPoint& l, const FitPoint& r) { return l.x < r.x; });

    double x_lo = pts.empty() ? 0.0 : pts.front().x;
    double x_hi = pts.empty() ? 1.0 : pts.back().x;
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;

    constexpr int kSamples = 200;
    std::vector<FitPoint> curve;
    for (int i = 0; i <= kSamples; ++i) {
        const double x = x_lo + (x_hi - x_lo) * i / kSamples;
        curve.push_back({x, fit.evaluate(x)});
    }
    double y_lo = curve.front().y, y_hi = curve.front().y;
    for (const auto* series : {&pts, &curve}) {
        for (const auto& p : *series) {
            y_lo = std::min(y_lo, p.y);
            y_hi = std::max(y_hi, p.y);
        }
    }
    if (y_hi <= y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    const double pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto sy = [&](double y) { return kTop + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h; };

    auto path_data = [&](const std::vector<FitPoint>& series) {
        std::string d;
        for (std::size_t i = 0; i < series.size(); ++i) {
            d += (i == 0 ? "M" : " L") + num(sx(series[i].x)) + " " + num(sy(series[i].y));
        }
        return d;
    };

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
           num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    svg += "  <rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
           "\" fill=\"white\"/>\n";
    svg += "  <text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
           escape(title) + "</text>\n";
    svg += "  <line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + plot_h) + "\" x2=\"" +
           num(kLeft + plot_w) + "\" y2=\"" + num(kTop + plot_h) + "\" stroke=\"black\"/>\n";
    svg += "  <line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) +
           "\" y2=\"" + num(kTop + plot_h) + "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = x_lo + (x_hi - x_lo) * t / 4.0;
        const double yv = y_lo + (y_hi - y_lo) * t / 4.0;
        svg += "  <text x=\"" + num(sx(xv)) + "\" y=\"" + num(kTop + plot_h + 18) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + label(xv) + "</text>\n";
        svg += "  <text x=\"" + num(kLeft - 6) + "\" y=\"" + num(sy(yv) + 4) +
               "\" text-anchor=\"end\" font-size=\"11\">" + label(yv) + "</text>\n";
    }
    svg += "  <text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 14) +
           "\" text-anchor=\"middle\" font-size=\"12\">x (" + escape(fit.x_unit) + ")</text>\n";
    svg += "  <text x=\"16\" y=\"" + num(kTop + plot_h / 2) + "\" font-size=\"12\" transform=\"rotate(-90 16 " +
           num(kTop + plot_h / 2) + ")\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
    svg += "  <path id=\"data\" d=\"" + path_data(pts) +
           "\" fill=\"none\" stroke=\"#1f77b4\" stroke-dasharray=\"4 3\"/>\n";
    for (const auto& p : pts) {
        svg += "  <circle cx=\"" + num(sx(p.x)) + "\" cy=\"" + num(sy(p.y)) +
               "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    }
    svg += "  <path id=\"fit\" d=\"" + path_data(curve) + "\" fill=\"none\" stroke=\"#d62728\"/>\n";
    svg += "  <text x=\"" + num(kLeft + plot_w - 4) + "\" y=\"" + num(kTop + 14) +
           "\" text-anchor=\"end\" font-size=\"11\">y = " + label(fit.a) + " + " + label(fit.b) +
           " e^(-" + label(fit.c) + " x)</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace steerlab
