#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtsr/errors.hpp"

namespace mtsr::csv {

// Minimal CSV support for the artifact's schemas: comma-separated,
// no quoting, header row required, '.' decimal separator.

inline std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& path, std::size_t line) {
    double v{};
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw parse_error(path, line, "not a number: '" + s + "'");
    return v;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // raw cells, header excluded
    std::vector<std::size_t> linenos;            // source line per row
    std::string path;
};

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    Table t;
    t.path = path;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_row(line);
        if (lineno == 1) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw parse_error(path, lineno,
                              "expected " + std::to_string(t.header.size()) + " fields, got " +
                                  std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
        t.linenos.push_back(lineno);
    }
    if (t.header.empty()) throw parse_error(path, 1, "missing header row");
    return t;
}

}  // namespace mtsr::csv
