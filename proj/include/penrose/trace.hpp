#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "penrose/error.hpp"

namespace penrose {

/// One dynamic kernel invocation.
struct KernelRecord {
    std::string name;
    int64_t duration_ns = 0;
    std::vector<std::pair<uint16_t, double>> counters;
};

class KernelStream {
public:
    virtual ~KernelStream() = default;
    virtual std::optional<KernelRecord> next() = 0;
};

/// Line-oriented trace file: `name,duration_ns,counter_id:value[,...]`,
/// '#' comments, UTF-8. Malformed lines are skipped and reported with
/// their line number.
class TraceFileReader final : public KernelStream {
public:
    explicit TraceFileReader(const std::filesystem::path& path);

    std::optional<KernelRecord> next() override;

    const std::vector<std::string>& diagnostics() const { return diagnostics_; }

    static std::optional<KernelRecord> parse_line(const std::string& line, std::string* error);

private:
    std::ifstream in_;
    std::string path_;
    int lineno_ = 0;
    std::vector<std::string> diagnostics_;
};

/// Adapts a generator function; used by tests and the simulator to avoid
/// materializing large traces.
class CallbackStream final : public KernelStream {
public:
    explicit CallbackStream(std::function<std::optional<KernelRecord>()> fn) : fn_(std::move(fn)) {}
    std::optional<KernelRecord> next() override { return fn_(); }

private:
    std::function<std::optional<KernelRecord>()> fn_;
};

}  // namespace penrose
