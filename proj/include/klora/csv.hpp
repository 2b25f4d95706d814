#pragma once

#include <string>
#include <vector>

namespace klora {

// Round-trip-exact float formatting (%.17g) so reruns of a deterministic
// pipeline produce byte-identical files.
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace klora
