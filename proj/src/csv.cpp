#include "klora/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "klora/errors.hpp"

namespace klora {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw invalid_input_error("write_csv: cannot open " + path);
    for (size_t j = 0; j < table.header.size(); ++j) {
        if (j) out << ',';
        out << table.header[j];
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << row[j];
        }
        out << '\n';
    }
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input_error("read_csv: cannot open " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input_error("read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input_error("write_text_file: cannot open " + path);
    out << content;
}

} // namespace klora
