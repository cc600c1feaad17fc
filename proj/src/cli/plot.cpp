#include "ude/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ude/motion/io.hpp"

namespace ude::cli {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

// "--" is not allowed inside XML comments.
std::string comment_safe(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '-' && !out.empty() && out.back() == '-') out += ' ';
        out += c;
    }
    return out;
}

std::string num(double v) {
    std::ostringstream o;
    o.precision(6);
    o << v;
    return o.str();
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void fix() {
        if (!(lo <= hi)) lo = 0, hi = 1;
        if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    }
};

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys, Range rx, Range ry, double x0,
                     double y0, double w, double h, const char* color) {
    std::ostringstream o;
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(ys[i])) continue;
        const double px = x0 + (xs[i] - rx.lo) / (rx.hi - rx.lo) * w;
        const double py = y0 + h - (ys[i] - ry.lo) / (ry.hi - ry.lo) * h;
        o << num(px) << ',' << num(py) << ' ';
    }
    o << "\"/>\n";
    return o.str();
}

}  // namespace

std::string line_plot_svg(const std::string& title, const std::vector<Series>& series, const std::string& comment) {
    const double W = 640, H = 360, L = 60, T = 40, PW = 540, PH = 260;
    Range rx, ry;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            rx.add(static_cast<double>(i + 1));
            ry.add(s.values[i]);
        }
    }
    rx.fix();
    ry.fix();
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<!-- " << comment_safe(comment) << " -->\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << L << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title) << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << PW << "\" height=\"" << PH
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
    o << "<text x=\"4\" y=\"" << T + 10 << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(ry.hi) << "</text>\n";
    o << "<text x=\"4\" y=\"" << T + PH << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(ry.lo) << "</text>\n";
    o << "<text x=\"" << L << "\" y=\"" << T + PH + 16 << "\" font-family=\"sans-serif\" font-size=\"10\">epoch "
      << num(rx.lo) << "</text>\n";
    o << "<text x=\"" << L + PW - 60 << "\" y=\"" << T + PH + 16 << "\" font-family=\"sans-serif\" font-size=\"10\">epoch "
      << num(rx.hi) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = kColors[k % 8];
        std::vector<double> xs;
        for (std::size_t i = 0; i < series[k].values.size(); ++i) xs.push_back(static_cast<double>(i + 1));
        o << polyline(xs, series[k].values, rx, ry, L, T, PW, PH, color);
        o << "<text x=\"" << L + 10 + 120 * static_cast<double>(k) << "\" y=\"" << H - 12
          << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">" << escape(series[k].name)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string motion_plot_svg(const motion::MotionSequence& m, const std::string& comment) {
    const double W = 720, strip = 36;
    const double H = 300 + strip * static_cast<double>(m.joints) + 20;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << num(H) << "\">\n";
    o << "<!-- " << comment_safe(comment) << " -->\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"20\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">root trajectory (x, z)</text>\n";

    std::vector<double> xs, zs;
    Range rx, rz;
    for (std::size_t t = 0; t < m.length(); ++t) {
        const auto p = m.joint(t, 0);
        xs.push_back(p.x());
        zs.push_back(p.z());
        rx.add(p.x());
        rz.add(p.z());
    }
    // Same scale on both axes.
    rx.fix();
    rz.fix();
    const double span = std::max(rx.hi - rx.lo, rz.hi - rz.lo);
    const double cx = 0.5 * (rx.lo + rx.hi), cz = 0.5 * (rz.lo + rz.hi);
    rx.lo = cx - span / 2, rx.hi = cx + span / 2;
    rz.lo = cz - span / 2, rz.hi = cz + span / 2;
    o << "<rect x=\"20\" y=\"30\" width=\"240\" height=\"240\" fill=\"none\" stroke=\"#888\"/>\n";
    o << polyline(xs, zs, rx, rz, 20, 30, 240, 240, kColors[0]);

    std::vector<double> ts;
    for (std::size_t t = 0; t < m.length(); ++t) ts.push_back(static_cast<double>(t) / m.fps);
    Range rt;
    for (double t : ts) rt.add(t);
    rt.fix();
    for (std::size_t j = 0; j < m.joints; ++j) {
        const double y0 = 300 + strip * static_cast<double>(j);
        std::vector<double> hs;
        Range rh;
        for (std::size_t t = 0; t < m.length(); ++t) {
            hs.push_back(m.joint(t, j).y());
            rh.add(hs.back());
        }
        rh.fix();
        o << "<text x=\"20\" y=\"" << num(y0 + strip / 2) << "\" font-family=\"sans-serif\" font-size=\"10\">joint " << j
          << " height</text>\n";
        o << polyline(ts, hs, rt, rh, 110, y0 + 2, W - 130, strip - 6, kColors[j % 8]);
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace ude::cli
