#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "valtrack/engine.hpp"
#include "valtrack/error.hpp"
#include "valtrack/experiments.hpp"

namespace valtrack::svg {

namespace detail {

inline std::string f(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

inline std::string header(int w, int h)
{
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(w) + "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
           std::to_string(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

// Blue (0) to red (1).
inline std::string colour(double v)
{
    v = std::clamp(v, 0.0, 1.0);
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(40 + 200 * v), static_cast<int>(60 + 60 * (1.0 - std::abs(2 * v - 1))),
                  static_cast<int>(40 + 200 * (1.0 - v)));
    return buf;
}

} // namespace detail

// Price on a log scale, one polyline vertex per recorded price, with the
// valuation as a dashed line and the 5-deciblack level below p0 dotted red.
inline std::string render_series_svg(const RunResult& r, double valuation = 1.0)
{
    if (r.prices.empty())
        throw InvalidInput("cannot render an empty series");
    const int W = 800, H = 400, L = 60, R = 20, T = 20, B = 40;
    const double p0 = r.prices.front();
    const double marker = p0 * std::exp2(-0.5);

    double lo = std::min(valuation, marker), hi = std::max(valuation, p0);
    for (double p : r.prices) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    double ylo = std::log10(lo), yhi = std::log10(hi);
    if (yhi - ylo < 1e-9) {
        ylo -= 0.5;
        yhi += 0.5;
    }
    const double n = static_cast<double>(std::max<std::size_t>(r.prices.size() - 1, 1));
    auto X = [&](std::size_t t) { return L + (W - L - R) * (static_cast<double>(t) / n); };
    auto Y = [&](double p) { return T + (H - T - B) * (yhi - std::log10(p)) / (yhi - ylo); };

    std::string s = detail::header(W, H);
    s += "<line x1=\"" + detail::f(L) + "\" y1=\"" + detail::f(Y(valuation)) + "\" x2=\"" + detail::f(W - R) +
         "\" y2=\"" + detail::f(Y(valuation)) + "\" stroke=\"grey\" stroke-dasharray=\"6,4\" class=\"valuation\"/>\n";
    s += "<line x1=\"" + detail::f(L) + "\" y1=\"" + detail::f(Y(marker)) + "\" x2=\"" + detail::f(W - R) +
         "\" y2=\"" + detail::f(Y(marker)) + "\" stroke=\"red\" stroke-dasharray=\"2,3\" class=\"deciblack5\"/>\n";
    if (r.prices.size() == 1) {
        s += "<circle cx=\"" + detail::f(X(0)) + "\" cy=\"" + detail::f(Y(r.prices[0])) +
             "\" r=\"3\" fill=\"black\" class=\"price\"/>\n";
    } else {
        s += "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.2\" class=\"price\" points=\"";
        for (std::size_t t = 0; t < r.prices.size(); ++t) {
            if (t)
                s += ' ';
            s += detail::f(X(t)) + "," + detail::f(Y(r.prices[t]));
        }
        s += "\"/>\n";
    }
    s += "<text x=\"" + detail::f(L) + "\" y=\"" + detail::f(H - 10.0) + "\" font-size=\"12\">steps: " +
         std::to_string(r.prices.size() - 1) + ", log10 price range [" + detail::f(ylo) + ", " + detail::f(yhi) +
         "]</text>\n";
    s += "</svg>\n";
    return s;
}

enum class TernaryMetric { MeanDrop, CrashFreq, BoomFreq };

// One hexagonal cell per simplex point: Val at the top, Mo bottom right,
// Rand bottom left.
inline std::string render_ternary_svg(const TernaryGrid& g, TernaryMetric metric = TernaryMetric::CrashFreq)
{
    if (g.points.empty())
        throw InvalidInput("cannot render an empty ternary grid");
    const int W = 640, H = 600;
    const double side = 520.0, x0 = 60.0, y0 = 560.0;
    const double h = side * std::sqrt(3.0) / 2.0;
    const double radius = side / std::max(1, g.resolution) / 2.0 * 0.95;

    std::string s = detail::header(W, H);
    s += "<polygon points=\"" + detail::f(x0) + "," + detail::f(y0) + " " + detail::f(x0 + side) + "," +
         detail::f(y0) + " " + detail::f(x0 + side / 2) + "," + detail::f(y0 - h) +
         "\" fill=\"none\" stroke=\"black\" class=\"frame\"/>\n";
    for (const auto& p : g.points) {
        // Barycentric: Rand (x0, y0), Mo (x0 + side, y0), Val apex.
        const double cx = x0 + side * (p.mo_frac + 0.5 * p.val_frac);
        const double cy = y0 - h * p.val_frac;
        const double v = metric == TernaryMetric::MeanDrop ? p.mean_drop
                         : metric == TernaryMetric::CrashFreq ? p.crash_freq
                                                              : p.boom_freq;
        s += "<polygon class=\"cell\" fill=\"" + detail::colour(v) + "\" points=\"";
        for (int k = 0; k < 6; ++k) {
            const double a = std::numbers::pi / 3.0 * k + std::numbers::pi / 6.0;
            if (k)
                s += ' ';
            s += detail::f(cx + radius * std::cos(a)) + "," + detail::f(cy + radius * std::sin(a));
        }
        s += "\"/>\n";
    }
    s += "<text x=\"" + detail::f(x0 + side / 2 - 12) + "\" y=\"" + detail::f(y0 - h - 8) + "\" font-size=\"14\">Val</text>\n";
    s += "<text x=\"" + detail::f(x0 + side - 10) + "\" y=\"" + detail::f(y0 + 24) + "\" font-size=\"14\">Mo</text>\n";
    s += "<text x=\"" + detail::f(x0 - 20) + "\" y=\"" + detail::f(y0 + 24) + "\" font-size=\"14\">Rand</text>\n";
    s += "</svg>\n";
    return s;
}

} // namespace valtrack::svg
