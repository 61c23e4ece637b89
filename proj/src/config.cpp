#include "penrose/config.hpp"

#include <fstream>
#include <sstream>

namespace penrose {

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        cfg.values_[key] = val;
    }
    return cfg;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int64_t KeyValueConfig::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": bad integer '" + it->second + "'");
    }
}

uint64_t KeyValueConfig::get_uint(const std::string& key, uint64_t fallback) const {
    int64_t v = get_int(key, static_cast<int64_t>(fallback));
    if (v < 0 && values_.count(key)) throw ConfigError("config key " + key + ": must be >= 0");
    return values_.count(key) ? static_cast<uint64_t>(std::stoull(values_.at(key))) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": bad number '" + it->second + "'");
    }
}

int64_t KeyValueConfig::get_duration_s(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_duration_s(it->second);
}

int64_t parse_duration_s(const std::string& text) {
    if (text.empty()) throw ConfigError("empty duration");
    char suffix = text.back();
    int64_t mult = 1;
    std::string digits = text;
    switch (suffix) {
        case 's': mult = 1; digits.pop_back(); break;
        case 'm': mult = 60; digits.pop_back(); break;
        case 'h': mult = 3600; digits.pop_back(); break;
        case 'd': mult = 86400; digits.pop_back(); break;
        default:
            if (suffix < '0' || suffix > '9') throw ConfigError("bad duration: " + text);
    }
    try {
        return std::stoll(digits) * mult;
    } catch (const std::exception&) {
        throw ConfigError("bad duration: " + text);
    }
}

}  // namespace penrose
