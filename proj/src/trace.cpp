#include "penrose/trace.hpp"

#include <cmath>
#include <charconv>

namespace penrose {

TraceFileReader::TraceFileReader(const std::filesystem::path& path)
    : in_(path), path_(path.string()) {
    if (!in_) throw Error("cannot open trace file: " + path_);
}

std::optional<KernelRecord> TraceFileReader::parse_line(const std::string& line, std::string* error) {
    std::string text = line;
    if (auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    // trim
    auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::nullopt;
    auto last = text.find_last_not_of(" \t\r");
    text = text.substr(first, last - first + 1);

    std::vector<std::string> parts;
    size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string::npos) {
            parts.push_back(text.substr(pos));
            break;
        }
        parts.push_back(text.substr(pos, comma - pos));
        pos = comma + 1;
    }
    if (parts.size() < 2) {
        if (error) *error = "expected name,duration_ns";
        return std::nullopt;
    }
    KernelRecord rec;
    rec.name = parts[0];
    if (rec.name.empty()) {
        if (error) *error = "empty kernel name";
        return std::nullopt;
    }
    auto [p, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), rec.duration_ns);
    if (ec != std::errc() || p != parts[1].data() + parts[1].size() || rec.duration_ns <= 0) {
        if (error) *error = "bad duration: " + parts[1];
        return std::nullopt;
    }
    for (size_t i = 2; i < parts.size(); ++i) {
        auto colon = parts[i].find(':');
        if (colon == std::string::npos) {
            if (error) *error = "bad counter field: " + parts[i];
            return std::nullopt;
        }
        unsigned long id = 0;
        auto idstr = parts[i].substr(0, colon);
        auto [ip, iec] = std::from_chars(idstr.data(), idstr.data() + idstr.size(), id);
        if (iec != std::errc() || ip != idstr.data() + idstr.size() || id > 0xFFFF) {
            if (error) *error = "bad counter id: " + idstr;
            return std::nullopt;
        }
        double value = 0;
        try {
            value = std::stod(parts[i].substr(colon + 1));
        } catch (const std::exception&) {
            if (error) *error = "bad counter value: " + parts[i];
            return std::nullopt;
        }
        if (!std::isfinite(value) || value < 0) {
            if (error) *error = "counter value must be finite and >= 0";
            return std::nullopt;
        }
        rec.counters.emplace_back(static_cast<uint16_t>(id), value);
    }
    return rec;
}

std::optional<KernelRecord> TraceFileReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++lineno_;
        std::string error;
        auto rec = parse_line(line, &error);
        if (rec) return rec;
        if (!error.empty())
            diagnostics_.push_back(path_ + ":" + std::to_string(lineno_) + ": " + error);
        // blank/comment lines fall through silently
    }
    return std::nullopt;
}

}  // namespace penrose
