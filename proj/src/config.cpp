#include "klora/config.hpp"

#include <cstdio>
#include <sstream>

#include "klora/csv.hpp"
#include "klora/errors.hpp"

namespace klora {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    size_t e = s.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

} // namespace

Config Config::parse(const std::string& text) {
    Config c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw invalid_input_error("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw invalid_input_error("config line " + std::to_string(lineno) + ": empty key");
        }
        c.entries_[key] = value;
    }
    return c;
}

Config Config::load(const std::string& path) { return parse(read_text_file(path)); }

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string Config::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw invalid_input_error("config: missing required key " + key);
    return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string v = get(key);
    try {
        return std::stod(v);
    } catch (...) {
        throw invalid_input_error("config: key " + key + " is not a number: " + v);
    }
}

double Config::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long Config::get_int(const std::string& key) const {
    const std::string v = get(key);
    try {
        return std::stol(v);
    } catch (...) {
        throw invalid_input_error("config: key " + key + " is not an integer: " + v);
    }
}

long Config::get_int_or(const std::string& key, long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw invalid_input_error("config: key " + key + " is not a boolean: " + v);
}

std::vector<double> Config::get_doubles_or(const std::string& key,
                                           const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            out.push_back(std::stod(cell));
        } catch (...) {
            throw invalid_input_error("config: key " + key + " has a non-numeric element: " + cell);
        }
    }
    return out;
}

std::vector<int> Config::get_ints_or(const std::string& key, const std::vector<int>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<int> out;
    for (double v : get_doubles_or(key, {})) out.push_back(static_cast<int>(v));
    return out;
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::string Config::hash() const {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, v] : entries_) {
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace klora
