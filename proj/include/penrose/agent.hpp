#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "penrose/config.hpp"
#include "penrose/histogram.hpp"
#include "penrose/paillier.hpp"
#include "penrose/rng.hpp"
#include "penrose/snippet.hpp"
#include "penrose/trace.hpp"
#include "penrose/transport.hpp"

namespace penrose {

struct AgentConfig {
    uint64_t sampling_interval = 10000;      // S, kernels
    int64_t reset_interval_s = 600;          // O
    uint64_t aggregation_threshold = 10000;  // A, samples
    int64_t timeout_s = 1200;                // T, default 2*O
    uint64_t snippet_length = 10000;         // L, kernels
    double load_factor = 1.0;                // active fraction of each reset window
    std::string app_salt;                    // empty for public applications
    int64_t time_weight_scale_max_ns = 521000;
    bool fleet_rotation = false;  // rotation slot derived from epoch index instead of per-agent
    CounterRegistry registry;

    static AgentConfig from_config(const KeyValueConfig& kv, const std::filesystem::path& base_dir);
    void validate() const;
};

/// Kernel-index sampling state for one reset epoch: index i is sampled
/// iff i mod S == R and the agent is inside the active load window.
struct SamplerState {
    uint64_t interval = 10000;  // S
    uint64_t offset = 0;        // R, uniform in [0, S)
    uint64_t kernel_index = 0;  // kernels seen since the last reset
    size_t rotation_pos = 0;

    bool should_sample(uint64_t index, bool active_window) const {
        return active_window && index % interval == offset;
    }
};

struct AgentStats {
    uint64_t kernels_seen = 0;
    uint64_t samples_taken = 0;
    uint64_t samples_folded = 0;
    uint64_t announces_sent = 0;
    uint64_t updates_sent = 0;
    uint64_t epochs = 0;
    uint64_t send_failures = 0;
    uint64_t short_snippets = 0;
    std::vector<int64_t> update_virtual_times_ns;  // emission timestamps
};

/// The per-GPU client: builds snippet windows from every kernel name,
/// samples counter values at the configured interval, accumulates
/// partial histograms per (snippet, counter), and ships encrypted
/// updates over a fresh transport connection each.
class Agent {
public:
    Agent(AgentConfig config, paillier::PublicKey pk, Transport& transport, uint64_t seed);

    // Replays the stream against the virtual clock (kernel durations
    // advance time). Flushes residual state at end of stream.
    void run(KernelStream& stream);

    const AgentStats& stats() const { return stats_; }

    // Exposed for tests.
    const SamplerState& sampler() const { return sampler_; }
    uint16_t active_wire_id() const;

private:
    struct AccumulatorEntry {
        PartialHistogram hist;
        int64_t first_sample_ns = 0;
        bool has_pair = false;
    };
    struct PendingSample {
        uint16_t wire_id;
        uint32_t bin;
        uint64_t weight;
        int64_t t_ns;
        uint32_t bin_count;
    };

    void reset_epoch();
    void on_kernel(const KernelRecord& rec);
    void complete_window(bool app_end);
    void announce(const SnippetHash& sh, const MinHashSignature& sig);
    void record_sample(const KernelRecord& rec);
    void fold_pending();
    void fold_one(const SnippetHash& sh, const PendingSample& s);
    void flush_entry(const std::pair<SnippetHash, uint16_t>& key, AccumulatorEntry& entry);
    void flush_due(bool force_all);
    bool send_frame_with_retry(const std::vector<uint8_t>& frame);

    AgentConfig config_;
    paillier::PublicKey pk_;
    Transport& transport_;
    SeededRng rng_;
    SecureRng secure_rng_;

    SamplerState sampler_;
    std::vector<CounterRegistry::RotationSlot> slots_;
    int64_t now_ns_ = 0;
    int64_t epoch_start_ns_ = 0;
    int64_t active_until_ns_ = 0;

    std::vector<KernelName> window_;
    std::optional<SnippetHash> current_snippet_;
    std::vector<PendingSample> pre_window_buffer_;

    // window-content digest -> announced identity; repeat windows skip
    // both the minhash recomputation and the duplicate announce.
    std::unordered_map<uint64_t, SnippetHash> window_cache_;
    std::unordered_map<SnippetHash, MinHashSignature, Digest32Hash> announced_sigs_;

    std::map<std::pair<SnippetHash, uint16_t>, AccumulatorEntry> accumulators_;
    int64_t next_deadline_ns_ = INT64_MAX;
    AgentStats stats_;
};

}  // namespace penrose
