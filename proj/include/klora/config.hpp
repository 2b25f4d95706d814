#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace klora {

// Line-oriented config: `section.key = value`, `#` comments, arrays as comma
// lists. Diff-friendly and free of schema machinery.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const;
    std::string get(const std::string& key) const; // throws when missing
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double_or(const std::string& key, double fallback) const;
    long get_int(const std::string& key) const;
    long get_int_or(const std::string& key, long fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles_or(const std::string& key,
                                       const std::vector<double>& fallback) const;
    std::vector<int> get_ints_or(const std::string& key, const std::vector<int>& fallback) const;

    void set(const std::string& key, const std::string& value);

    // FNV-1a over the sorted key=value pairs, as a 16-hex-digit string.
    std::string hash() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

} // namespace klora
