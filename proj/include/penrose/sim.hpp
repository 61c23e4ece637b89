#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "penrose/config.hpp"
#include "penrose/designer.hpp"
#include "penrose/hash.hpp"
#include "penrose/paillier.hpp"
#include "penrose/rng.hpp"
#include "penrose/server.hpp"
#include "penrose/snippet.hpp"

namespace penrose::sim {

inline constexpr uint32_t kKernelNamePool = 10000;
inline constexpr uint32_t kMinKernels = 14;
inline constexpr uint32_t kMaxKernels = 128838;

// Power exponents calibrating the log-range draws: kernel counts hit a
// median of 870 over [14, 128838]; per-kernel latency means 30us over
// [3us, 521us].
inline constexpr double kKernelCountShape = 1.1442361308599889;
inline constexpr double kLatencyShape = 4.4223996726021220;

struct AppSpec {
    std::string name;
    uint32_t kernel_count = 0;         // dynamic invocations per run
    uint32_t static_kernel_count = 0;  // distinct kernels; the coverage denominator
    int64_t mean_kernel_latency_ns = 0;
    double counter_mean_fraction = 0.5;  // mean counter value as a fraction of peak
    double counter_jitter = 0.05;        // relative spread of per-sample values
    uint64_t kernel_seed = 0;            // drives the deterministic kernel-name stream
    SnippetHash canonical{};
};

struct Corpus {
    std::vector<AppSpec> apps;
};

// Deterministic synthetic corpus; app attributes depend only on (seed,
// index), so a smaller corpus is a prefix of a larger one.
Corpus generate_corpus(uint32_t app_count, uint64_t seed);

// Static kernel at a dynamic position of the app's periodic stream.
uint32_t static_kernel_at(const AppSpec& app, uint64_t position);

// Kernel name at a dynamic position, drawn from the shared ~10^4-name
// pool; positions sharing a static kernel share the name.
std::string kernel_name_at(const AppSpec& app, uint64_t position);

// P(position sampled at least once) = 1 - (1 - 1/N)^u.
double analytic_coverage(double sampling_interval, double runs);

enum class Popularity : uint8_t { Uniform, NormalSmall, NormalLarge };

// Per-app execution weights. The normal variants draw app popularity
// values from N(n/2, n/6) (n = app count), clamp them positive, and hand
// the largest draws to the smallest (normal_small) or largest
// (normal_large) applications by kernel count.
std::vector<double> popularity_weights(const Corpus& corpus, Popularity pop, uint64_t seed);

/// Empirical anonymized-transport latency: piecewise-linear inverse CDF
/// through (0.70, 2s), (0.90, 8s), (0.95, 11s), capped at 30s.
struct LatencyModel {
    bool enabled = true;
    int64_t draw_ns(Rng& rng) const;
};

enum class Fidelity : uint8_t { Message, Kernel };

struct SimConfig {
    uint64_t gpus = 2000;
    uint32_t app_count = 200;
    Popularity popularity = Popularity::Uniform;
    uint64_t sampling_interval = 10000;       // S
    int64_t reset_interval_s = 600;           // O
    uint64_t aggregation_threshold = 10000;   // A
    int64_t timeout_s = 1200;                 // T
    uint64_t snippet_length = 10000;          // L
    int64_t report_interval_s = 86400;        // delta
    double load_factor = 0.10;
    uint64_t seed = 1;
    int64_t horizon_s = 86400;
    bool latency_model = true;
    double drop_fraction = 0.0;
    bool track_coverage = true;
    bool stop_when_converged = true;
    double coverage_target = 0.99;
    double percentile = 0.975;
    Fidelity fidelity = Fidelity::Message;

    static SimConfig from_config(const KeyValueConfig& kv);
    void validate() const;
};

struct TrajectoryPoint {
    int64_t t_s = 0;
    double mean_coverage = 0;
};

struct SimReport {
    uint64_t messages_emitted = 0;
    uint64_t messages_arrived = 0;
    uint64_t messages_dropped = 0;
    uint64_t announces = 0;

    std::vector<TrajectoryPoint> trajectory;          // hourly mean coverage
    std::vector<std::vector<double>> period_coverage; // per report period, per app
    std::vector<double> final_coverage;               // per app
    std::vector<uint64_t> covered_positions;          // per app
    std::vector<int64_t> time_to_target_s;            // per app, -1 when unreached
    int64_t percentile_time_s = -1;                   // time for the configured share of apps
    std::vector<uint64_t> hourly_arrivals;
    double steady_ingress_per_s = 0;                  // second half of the horizon

    std::string serialize() const;  // canonical byte representation
};

/// Optional real-crypto routing: flushes materialize encrypted update
/// frames through the embedded aggregation server instead of the
/// plaintext-shadow fast path.
struct CryptoHooks {
    const paillier::PublicKey* pk = nullptr;
    AggregationServer* server = nullptr;
    uint16_t counter_id = 1;
    double counter_peak = 100.0;
    // plaintext shadow sums per app index, for end-to-end verification
    std::map<uint32_t, std::vector<uint64_t>> shadow_sums;
};

SimReport run_sim(const SimConfig& config, const Corpus& corpus, CryptoHooks* hooks = nullptr);
SimReport run_sim(const SimConfig& config);

struct SweepCell {
    std::string name;
    SimConfig config;
};

struct SweepRow {
    std::string name;
    int64_t percentile_time_s = -1;
    uint64_t messages = 0;
    double final_mean_coverage = 0;
};

std::vector<SweepRow> sweep(const std::vector<SweepCell>& cells, const Corpus* shared_corpus = nullptr);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Registry + covered-position ledger for the designer console.
AppRegistry registry_of(const Corpus& corpus);
std::map<SnippetHash, uint64_t> covered_by_canonical(const Corpus& corpus, const SimReport& report);

}  // namespace penrose::sim
