#include "modsteer/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "modsteer/error.hpp"
#include "modsteer/io.hpp"

namespace modsteer {

namespace {

constexpr double kW = 640.0;
constexpr double kH = 400.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

constexpr std::array<std::string_view, 6> kPalette = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                                                      "#937860"};

std::string escape(std::string_view s) {
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

struct Frame {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
    double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

void pad_range(double & lo, double & hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
}

std::string header(const std::string & title) {
    return fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{3}</text>\n",
        kW, kH, kW / 2, escape(title));
}

std::string axes(const Frame & f, const std::string & x_label, const std::string & y_label) {
    std::string s = fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", kLeft,
                                kH - kBottom, kW - kRight);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", kLeft, kTop, kH - kBottom);
    for (int i = 0; i <= 4; ++i) {
        const double v = f.y0 + (f.y1 - f.y0) * i / 4.0;
        s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"10\" "
                         "text-anchor=\"end\">{:.3g}</text>\n",
                         kLeft - 4, f.py(v) + 3, v);
    }
    if (!x_label.empty()) {
        s += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" "
                         "text-anchor=\"middle\">{}</text>\n",
                         (kLeft + kW - kRight) / 2, kH - 12, escape(x_label));
    }
    if (!y_label.empty()) {
        s += fmt::format("<text x=\"14\" y=\"{0}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
                         "transform=\"rotate(-90 14 {0})\">{1}</text>\n",
                         (kTop + kH - kBottom) / 2, escape(y_label));
    }
    return s;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

double to_number(const std::string & s, const std::string & what) {
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception &) {
        throw ParseError("non-numeric value '" + s + "' in " + what);
    }
}

} // namespace

std::string svg_bar_chart(const std::string & title, const std::vector<std::string> & labels,
                          const std::vector<double> & values, const std::string & y_label) {
    Frame f{0.0, static_cast<double>(std::max<size_t>(values.size(), 1)), 0.0, 1.0};
    for (double v : values) f.y1 = std::max(f.y1, v);
    std::string s = header(title) + axes(f, "", y_label);
    for (size_t i = 0; i < values.size(); ++i) {
        const double x = f.px(static_cast<double>(i) + 0.15);
        const double w = f.px(static_cast<double>(i) + 0.85) - x;
        const double v = std::isfinite(values[i]) ? values[i] : 0.0;
        s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x,
                         f.py(v), w, f.py(0.0) - f.py(v), kPalette[0]);
        s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" "
                         "text-anchor=\"middle\">{}</text>\n",
                         x + w / 2, kH - kBottom + 14, escape(i < labels.size() ? labels[i] : ""));
    }
    return s + "</svg>\n";
}

std::string svg_line_chart(const std::string & title, const std::vector<double> & xs, const std::vector<Series> & series,
                           const std::string & x_label, const std::string & y_label) {
    Frame f{0, 1, 0, 1};
    if (!xs.empty()) {
        f.x0 = *std::min_element(xs.begin(), xs.end());
        f.x1 = *std::max_element(xs.begin(), xs.end());
    }
    double lo = INFINITY, hi = -INFINITY;
    for (const auto & sr : series) {
        for (double y : sr.ys) {
            if (!std::isfinite(y)) continue;
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    }
    pad_range(f.x0, f.x1);
    pad_range(lo, hi);
    f.y0 = lo;
    f.y1 = hi;
    std::string s = header(title) + axes(f, x_label, y_label);
    for (size_t i = 0; i < xs.size(); ++i) {
        s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" "
                         "text-anchor=\"middle\">{:g}</text>\n",
                         f.px(xs[i]), kH - kBottom + 14, xs[i]);
    }
    for (size_t k = 0; k < series.size(); ++k) {
        const auto color = kPalette[k % kPalette.size()];
        std::string pts;
        for (size_t i = 0; i < xs.size() && i < series[k].ys.size(); ++i) {
            if (!std::isfinite(series[k].ys[i])) continue;
            pts += fmt::format("{:.1f},{:.1f} ", f.px(xs[i]), f.py(series[k].ys[i]));
            s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", f.px(xs[i]),
                             f.py(series[k].ys[i]), color);
        }
        s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", pts, color);
        s += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
                         kW - kRight - 120, kTop + 14 * (k + 1), color, escape(series[k].name));
    }
    return s + "</svg>\n";
}

std::string svg_scatter(const std::string & title, const std::vector<ScatterGroup> & groups) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto & g : groups) {
        for (const auto & [x, y] : g.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    pad_range(x0, x1);
    pad_range(y0, y1);
    const Frame f{x0, x1, y0, y1};
    std::string s = header(title) + axes(f, "PC1", "PC2");
    for (size_t k = 0; k < groups.size(); ++k) {
        const auto color = kPalette[k % kPalette.size()];
        for (const auto & [x, y] : groups[k].points) {
            s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"2\" fill=\"{}\" fill-opacity=\"0.5\"/>\n",
                             f.px(x), f.py(y), color);
        }
        if (groups[k].centroid) {
            const auto [cx, cy] = *groups[k].centroid;
            s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"10\" height=\"10\" fill=\"{}\" "
                             "stroke=\"black\"/>\n",
                             f.px(cx) - 5, f.py(cy) - 5, color);
        }
        s += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
                         kW - kRight - 120, kTop + 14 * (k + 1), color, escape(groups[k].label));
    }
    return s + "</svg>\n";
}

bool write_plot(const std::filesystem::path & path, const std::string & svg) {
    try {
        write_file(path, svg);
        return true;
    } catch (const std::exception & e) {
        spdlog::warn("plot '{}' not written: {}", path.string(), e.what());
        return false;
    }
}

size_t CsvTable::column(const std::string & name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("CSV has no column '" + name + "'");
    return static_cast<size_t>(it - header.begin());
}

CsvTable parse_csv(std::string_view text) {
    CsvTable t;
    std::istringstream in{std::string(text)};
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != t.header.size()) {
                throw ParseError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                                 std::to_string(t.header.size()));
            }
            t.rows.push_back(std::move(fields));
        }
    }
    if (first) throw ParseError("CSV is empty");
    return t;
}

CsvTable load_csv(const std::filesystem::path & path) {
    return parse_csv(read_file(path));
}

std::vector<std::pair<double, double>> join_columns(const CsvTable & a, const std::string & a_col, const CsvTable & b,
                                                    const std::string & b_col, const std::string & key) {
    const size_t ak = a.column(key), av = a.column(a_col);
    const size_t bk = b.column(key), bv = b.column(b_col);
    std::map<std::string, std::string> bmap;
    for (const auto & r : b.rows) bmap[r[bk]] = r[bv];
    std::vector<std::pair<double, double>> out;
    for (const auto & r : a.rows) {
        const auto it = bmap.find(r[ak]);
        if (it == bmap.end()) throw ParseError("key '" + r[ak] + "' missing from second table");
        out.emplace_back(to_number(r[av], a_col), to_number(it->second, b_col));
    }
    return out;
}

void write_manifest(const std::filesystem::path & out_dir, const std::string & command,
                    const nlohmann::ordered_json & config, const std::vector<std::filesystem::path> & artifacts) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto & p : artifacts) {
        const std::string bytes = read_file(p);
        nlohmann::ordered_json a;
        a["path"] = std::filesystem::relative(p, out_dir).generic_string();
        a["sha256"] = sha256_hex(bytes);
        a["bytes"] = bytes.size();
        list.push_back(a);
    }
    j["artifacts"] = list;
    write_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const std::filesystem::path & manifest_path) {
    const auto j = nlohmann::json::parse(read_file(manifest_path));
    const auto dir = manifest_path.parent_path();
    std::vector<std::string> bad;
    for (const auto & a : j.at("artifacts")) {
        const auto rel = a.at("path").get<std::string>();
        const auto p = dir / rel;
        if (!std::filesystem::exists(p) || sha256_file(p) != a.at("sha256").get<std::string>()) bad.push_back(rel);
    }
    return bad;
}

} // namespace modsteer
