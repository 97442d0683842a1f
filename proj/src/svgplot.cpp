#include "trajmask/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace trajmask {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Ticks {
    std::vector<double> at;
};

Ticks nice_ticks(double lo, double hi) {
    Ticks t;
    if (hi <= lo) {
        hi = lo + 1;
        lo -= 1;
    }
    double span = hi - lo;
    double raw = span / 5.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double norm = raw / mag;
    double step = (norm < 1.5 ? 1 : norm < 3.5 ? 2 : norm < 7.5 ? 5 : 10) * mag;
    double first = std::ceil(lo / step) * step;
    for (double v = first; v <= hi + step * 1e-9; v += step) t.at.push_back(v);
    return t;
}

}  // namespace

void render_line_chart(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<PlotSeries>& series,
                       const std::string& out_path) {
    if (series.empty()) throw ConfigError("plot: no series to draw");
    const double W = 760, H = 480, ml = 70, mr = 170, mt = 42, mb = 52;
    const double pw = W - ml - mr, ph = H - mt - mb;

    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& s : series) {
        for (double v : s.x) {
            x0 = std::min(x0, v);
            x1 = std::max(x1, v);
        }
        for (double v : s.y) {
            y0 = std::min(y0, v);
            y1 = std::max(y1, v);
        }
        for (double v : s.lo) y0 = std::min(y0, v);
        for (double v : s.hi) y1 = std::max(y1, v);
    }
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
    double ypad = 0.05 * (y1 - y0);
    y0 -= ypad;
    y1 += ypad;

    auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return mt + ph - (v - y0) / (y1 - y0) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
           "font-family=\"sans-serif\">"
        << xml_escape(title) << "</text>\n";

    // axes + ticks
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    for (double v : nice_ticks(x0, x1).at) {
        if (v < x0 - 1e-9 || v > x1 + 1e-9) continue;
        svg << "<line x1=\"" << px(v) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(v) << "\" y2=\""
            << mt + ph + 5 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << px(v) << "\" y=\"" << mt + ph + 18
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(v)
            << "</text>\n";
    }
    for (double v : nice_ticks(y0, y1).at) {
        if (v < y0 - 1e-9 || v > y1 + 1e-9) continue;
        svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(v) << "\" x2=\"" << ml << "\" y2=\""
            << py(v) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << ml - 8 << "\" y=\"" << py(v) + 4
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(v)
            << "</text>\n";
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
        << xml_escape(xlabel) << "</text>\n";
    svg << "<text x=\"18\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
           "transform=\"rotate(-90 18 "
        << mt + ph / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = kColors[i % 8];
        if (!s.lo.empty() && s.lo.size() == s.x.size() && s.hi.size() == s.x.size()) {
            svg << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.15\" "
                << "stroke=\"none\" points=\"";
            for (std::size_t j = 0; j < s.x.size(); ++j)
                svg << fmt(px(s.x[j])) << "," << fmt(py(s.hi[j])) << " ";
            for (std::size_t j = s.x.size(); j-- > 0;)
                svg << fmt(px(s.x[j])) << "," << fmt(py(s.lo[j])) << " ";
            svg << "\"/>\n";
        }
        svg << "<polyline class=\"line\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"2\" points=\"";
        for (std::size_t j = 0; j < s.x.size(); ++j)
            svg << fmt(px(s.x[j])) << "," << fmt(py(s.y[j])) << " ";
        svg << "\"/>\n";
        for (std::size_t j = 0; j < s.x.size(); ++j)
            svg << "<circle cx=\"" << fmt(px(s.x[j])) << "\" cy=\"" << fmt(py(s.y[j]))
                << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        double ly = mt + 16 + 18 * static_cast<double>(i);
        svg << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + pw + 34
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly
            << "\" font-size=\"12\" font-family=\"sans-serif\">" << xml_escape(s.label)
            << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(out_path, std::ios::trunc | std::ios::binary);
    if (!out.is_open()) throw ConfigError("cannot write svg file: " + out_path);
    out << svg.str();
    if (!out.good()) throw ConfigError("write failed for svg file: " + out_path);
}

namespace {

// mean plus min/max band over seeds, grouped on `group_cols`, keyed by x
std::vector<PlotSeries> banded_series(const CsvTable& t, const std::vector<int>& group_cols,
                                      int xcol, int ycol) {
    std::map<std::string, std::map<double, std::vector<double>>> groups;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::string key;
        for (int c : group_cols) {
            if (!key.empty()) key += "/";
            key += t.rows[r][static_cast<std::size_t>(c)];
        }
        groups[key][t.num(r, xcol)].push_back(t.num(r, ycol));
    }
    std::vector<PlotSeries> out;
    for (const auto& [label, pts] : groups) {
        PlotSeries s;
        s.label = label;
        for (const auto& [x, vals] : pts) {
            double mn = vals[0], mx = vals[0], sum = 0;
            for (double v : vals) {
                mn = std::min(mn, v);
                mx = std::max(mx, v);
                sum += v;
            }
            s.x.push_back(x);
            s.y.push_back(sum / static_cast<double>(vals.size()));
            s.lo.push_back(mn);
            s.hi.push_back(mx);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::vector<PlotSeries> build_plot_series(const std::string& kind, const CsvTable& t,
                                          const std::string& csv_path) {
    if (t.rows.empty()) throw ConfigError(csv_path + ": no data rows");
    if (kind == "loss") {
        require_columns(t, {"step", "loss"}, csv_path);
        PlotSeries s;
        s.label = "loss";
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            s.x.push_back(t.num(r, t.col("step")));
            s.y.push_back(t.num(r, t.col("loss")));
        }
        return {s};
    }
    if (kind == "probe") {
        require_columns(t, {"horizon", "encoder", "seed", "mse"}, csv_path);
        return banded_series(t, {t.col("encoder")}, t.col("horizon"), t.col("mse"));
    }
    if (kind == "rl") {
        int group = t.col("mode") >= 0 ? t.col("mode") : t.col("arm");
        if (group < 0 || t.col("layout") < 0 || t.col("step") < 0 || t.col("return") < 0)
            require_columns(t, {"layout", "mode", "seed", "step", "return"}, csv_path);
        return banded_series(t, {t.col("layout"), group}, t.col("step"), t.col("return"));
    }
    if (kind == "scaling") {
        require_columns(t, {"tier", "size", "scale", "seed", "score"}, csv_path);
        return banded_series(t, {t.col("tier"), t.col("scale")}, t.col("size"), t.col("score"));
    }
    throw ConfigError("unknown plot kind '" + kind + "' (expected loss|probe|rl|scaling)");
}

void plot_csv(const std::string& kind, const std::string& csv_path, const std::string& out_path) {
    CsvTable t = read_csv(csv_path);
    auto series = build_plot_series(kind, t, csv_path);
    std::string xlabel = kind == "probe" ? "horizon" : kind == "scaling" ? "dataset size" : "step";
    std::string ylabel = kind == "loss"      ? "loss"
                         : kind == "probe"   ? "test mse"
                         : kind == "scaling" ? "normalized score"
                                             : "return";
    render_line_chart(kind, xlabel, ylabel, series, out_path);
}

}  // namespace trajmask
