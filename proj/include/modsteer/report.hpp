#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace modsteer {

struct Series {
    std::string name;
    std::vector<double> ys;
};

struct ScatterGroup {
    std::string label;
    std::vector<std::pair<double, double>> points;
    std::optional<std::pair<double, double>> centroid;
};

std::string svg_bar_chart(const std::string & title, const std::vector<std::string> & labels,
                          const std::vector<double> & values, const std::string & y_label);
std::string svg_line_chart(const std::string & title, const std::vector<double> & xs, const std::vector<Series> & series,
                           const std::string & x_label, const std::string & y_label);
std::string svg_scatter(const std::string & title, const std::vector<ScatterGroup> & groups);

// Writes a plot; failures are logged and reported as false, never thrown.
bool write_plot(const std::filesystem::path & path, const std::string & svg);

// Minimal RFC 4180 reader: header row plus records, quoted fields allowed.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    size_t column(const std::string & name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable load_csv(const std::filesystem::path & path);

// Joins two tables on `key` and returns (x, y) pairs in the order of the first table.
std::vector<std::pair<double, double>> join_columns(const CsvTable & a, const std::string & a_col, const CsvTable & b,
                                                    const std::string & b_col, const std::string & key);

// manifest.json: command, resolved config, and {path, sha256, bytes} for each artifact
// (paths relative to the manifest's directory).
void write_manifest(const std::filesystem::path & out_dir, const std::string & command,
                    const nlohmann::ordered_json & config, const std::vector<std::filesystem::path> & artifacts);

// Returns the artifacts whose file is missing or whose hash differs.
std::vector<std::string> verify_manifest(const std::filesystem::path & manifest_path);

} // namespace modsteer
