#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "penrose/error.hpp"

namespace penrose {

/// `key = value` lines, '#' comments.
class KeyValueConfig {
public:
    static KeyValueConfig load(const std::filesystem::path& path);
    static KeyValueConfig parse(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback = "") const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    uint64_t get_uint(const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    // Durations accept a unit suffix: s, m, h, d (plain numbers are seconds).
    int64_t get_duration_s(const std::string& key, int64_t fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

int64_t parse_duration_s(const std::string& text);

}  // namespace penrose
