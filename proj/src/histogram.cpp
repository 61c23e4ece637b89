#include "penrose/histogram.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace penrose {

void CounterSpec::validate() const {
    if (!(peak_value > 0.0)) throw ConfigError("counter " + name + ": peak must be > 0");
    if (bin_count != kDefaultBinCount && bin_count != kPairBinCount)
        throw ConfigError("counter " + name + ": bin_count must be 128 or 1024");
}

uint64_t PartialHistogram::total_mass() const {
    uint64_t sum = 0;
    for (uint64_t b : bins) sum += b;
    return sum;
}

namespace {

uint32_t linear_bin(double value, double peak, uint32_t levels) {
    if (!std::isfinite(value)) throw Error("non-finite counter value");
    if (value <= 0.0) return 0;
    if (value >= peak) return levels - 1;
    auto idx = static_cast<uint32_t>(std::floor(value / peak * levels));
    return idx >= levels ? levels - 1 : idx;
}

}  // namespace

uint32_t bin_index(const CounterSpec& spec, double value) {
    return linear_bin(value, spec.peak_value, spec.bin_count);
}

uint32_t quantize32(const CounterSpec& spec, double value) {
    return linear_bin(value, spec.peak_value, kPairGridSide);
}

TimeWeight time_weight(int64_t duration_ns, int64_t scale_max_ns) {
    if (scale_max_ns <= 0) throw ConfigError("time_weight: scale_max must be > 0");
    if (duration_ns <= 0) return TimeWeight{0};
    if (duration_ns >= scale_max_ns) return TimeWeight{kMaxTimeWeight};
    auto w = static_cast<uint8_t>((static_cast<double>(duration_ns) / static_cast<double>(scale_max_ns)) * 16.0);
    return TimeWeight{w > kMaxTimeWeight ? kMaxTimeWeight : w};
}

namespace {

void fold_into_bin(PartialHistogram& h, uint32_t idx, uint64_t weight) {
    uint64_t& bin = h.bins.at(idx);
    if (bin > UINT64_MAX - weight) throw Error("histogram bin overflow");
    bin += weight;
    h.sample_count += 1;
}

}  // namespace

void fold_sample(PartialHistogram& h, const CounterSpec& spec, double value, uint64_t weight) {
    if (h.counter_id != spec.counter_id) throw Error("fold_sample: counter id mismatch");
    if (h.bins.size() != spec.bin_count) throw Error("fold_sample: bin count mismatch");
    fold_into_bin(h, bin_index(spec, value), weight);
}

void fold_pair_sample(PartialHistogram& h, const PairCounterSpec& pair, double value_a,
                      double value_b, uint64_t weight) {
    if (h.bins.size() != kPairBinCount) throw Error("fold_pair_sample: histogram must have 1024 bins");
    uint32_t row = quantize32(pair.counter_a, value_a);
    uint32_t col = quantize32(pair.counter_b, value_b);
    fold_into_bin(h, row * kPairGridSide + col, weight);
}

const CounterSpec* CounterRegistry::find(uint16_t counter_id) const {
    for (const auto& c : counters)
        if (c.counter_id == counter_id) return &c;
    return nullptr;
}

std::vector<PairCounterSpec> CounterRegistry::pairs() const {
    std::vector<PairCounterSpec> out;
    for (const auto& c : counters) {
        if (!c.pair_with) continue;
        const CounterSpec* other = find(*c.pair_with);
        if (!other) throw ConfigError("counter " + c.name + ": pair_with references unknown id");
        out.push_back(PairCounterSpec{c, *other});
    }
    return out;
}

std::vector<CounterRegistry::RotationSlot> CounterRegistry::rotation_slots() const {
    std::vector<RotationSlot> slots;
    for (const auto& c : counters) slots.push_back(RotationSlot{&c, std::nullopt});
    for (const auto& p : pairs()) slots.push_back(RotationSlot{nullptr, p});
    return slots;
}

CounterRegistry CounterRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open counter registry: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

CounterRegistry CounterRegistry::parse(const std::string& text) {
    CounterRegistry reg;
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string field;
        CounterSpec spec;
        bool have_id = false, have_name = false, have_peak = false;
        while (fields >> field) {
            auto eq = field.find('=');
            if (eq == std::string::npos)
                throw ConfigError("registry line " + std::to_string(lineno) + ": expected key=value");
            std::string key = field.substr(0, eq);
            std::string val = field.substr(eq + 1);
            if (key == "counter_id") {
                spec.counter_id = static_cast<uint16_t>(std::stoul(val));
                have_id = true;
            } else if (key == "name") {
                spec.name = val;
                have_name = true;
            } else if (key == "peak") {
                spec.peak_value = std::stod(val);
                have_peak = true;
            } else if (key == "mode") {
                if (val == "count") spec.mode = WeightMode::Count;
                else if (val == "time") spec.mode = WeightMode::Time;
                else throw ConfigError("registry line " + std::to_string(lineno) + ": mode must be count|time");
            } else if (key == "pair_with") {
                spec.pair_with = static_cast<uint16_t>(std::stoul(val));
            } else {
                throw ConfigError("registry line " + std::to_string(lineno) + ": unknown key " + key);
            }
        }
        if (!have_id && !have_name && !have_peak) continue;  // blank/comment line
        if (!have_id || !have_name || !have_peak)
            throw ConfigError("registry line " + std::to_string(lineno) + ": counter_id, name, peak required");
        if (spec.counter_id & kPairIdFlag)
            throw ConfigError("registry line " + std::to_string(lineno) + ": counter_id high bit is reserved");
        spec.validate();
        reg.counters.push_back(std::move(spec));
    }
    // resolve pair references eagerly so bad files fail at load
    reg.pairs();
    return reg;
}

}  // namespace penrose
