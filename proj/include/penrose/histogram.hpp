#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "penrose/error.hpp"
#include "penrose/hash.hpp"

namespace penrose {

inline constexpr uint32_t kDefaultBinCount = 128;
inline constexpr uint32_t kPairGridSide = 32;
inline constexpr uint32_t kPairBinCount = kPairGridSide * kPairGridSide;
inline constexpr uint8_t kMaxTimeWeight = 15;

// Bit set on a wire counter id to mark the 2D pairing of a registry counter
// with its declared partner.
inline constexpr uint16_t kPairIdFlag = 0x8000;

enum class WeightMode : uint8_t { Count = 0, Time = 1 };

struct CounterSpec {
    uint16_t counter_id = 0;
    std::string name;
    double peak_value = 0.0;      // clipping ceiling in the counter's native unit
    uint32_t bin_count = kDefaultBinCount;
    WeightMode mode = WeightMode::Count;
    std::optional<uint16_t> pair_with;

    void validate() const;
};

struct PairCounterSpec {
    CounterSpec counter_a;
    CounterSpec counter_b;

    // Wire identity of the flattened 32x32 histogram.
    uint16_t pair_id() const { return static_cast<uint16_t>(counter_a.counter_id | kPairIdFlag); }
};

struct TimeWeight {
    uint8_t value = 0;  // in [0, 15]
};

struct PartialHistogram {
    Digest32 snippet_hash{};
    uint16_t counter_id = 0;
    std::vector<uint64_t> bins;
    uint64_t sample_count = 0;

    explicit PartialHistogram(uint32_t bin_count = kDefaultBinCount) : bins(bin_count, 0) {}
    uint64_t total_mass() const;
};

// Linear binning over [0, peak] with clipping; value == peak lands in the
// last bin. Non-finite values are rejected.
uint32_t bin_index(const CounterSpec& spec, double value);

// 32-level quantization used by the 2D pair layout.
uint32_t quantize32(const CounterSpec& spec, double value);

// Scale-clip-discretize of a kernel duration into a 4-bit weight.
TimeWeight time_weight(int64_t duration_ns, int64_t scale_max_ns);

// Adds one sampled kernel. weight is 1 in count mode, TimeWeight.value in
// time mode. A bin that would overflow 64 bits is a hard error; the
// aggregation bound makes that unreachable in configured deployments.
void fold_sample(PartialHistogram& h, const CounterSpec& spec, double value, uint64_t weight);

void fold_pair_sample(PartialHistogram& h, const PairCounterSpec& pair, double value_a,
                      double value_b, uint64_t weight);

/// Counter registry shared by agent, server, and designer console.
/// File format: one counter per line of whitespace-separated key=value
/// pairs, '#' starts a comment. Keys: counter_id, name, peak, mode
/// (count|time), optional pair_with.
struct CounterRegistry {
    std::vector<CounterSpec> counters;

    const CounterSpec* find(uint16_t counter_id) const;
    std::vector<PairCounterSpec> pairs() const;

    // All single counters plus declared pairs, in registry order; the
    // agent's rotation cycles through these.
    struct RotationSlot {
        const CounterSpec* single = nullptr;  // set for 1D slots
        std::optional<PairCounterSpec> pair;  // set for 2D slots
        uint16_t wire_id() const { return pair ? pair->pair_id() : single->counter_id; }
        uint32_t bin_count() const { return pair ? kPairBinCount : single->bin_count; }
    };
    std::vector<RotationSlot> rotation_slots() const;

    static CounterRegistry load(const std::filesystem::path& path);
    static CounterRegistry parse(const std::string& text);
};

}  // namespace penrose
