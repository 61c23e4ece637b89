#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "penrose/histogram.hpp"
#include "penrose/paillier.hpp"
#include "penrose/snippet.hpp"
#include "penrose/wire.hpp"

namespace penrose {

struct DecryptedAsh {
    SnippetHash snippet_hash{};  // canonical
    uint16_t counter_id = 0;
    std::vector<uint64_t> bins;
    uint64_t contribution_count = 0;
    uint64_t period_id = 0;
};

std::vector<DecryptedAsh> decrypt_report(const paillier::PrivateKey& sk,
                                         const wire::ReportMessage& report);

// Requests the current report from the server and decrypts every bin.
std::vector<DecryptedAsh> fetch_and_decrypt(const std::string& host, uint16_t port,
                                            const paillier::PrivateKey& sk);

/// Four utilization states of a 32x32 pair histogram split at the "low"
/// threshold (default 1/3 of peak => grid levels 0..10 inclusive).
struct UtilizationBreakdown {
    bool defined = false;  // false when the histogram carries no mass
    uint64_t mass_both_low = 0;
    uint64_t mass_a_low_only = 0;
    uint64_t mass_b_low_only = 0;
    uint64_t mass_neither_low = 0;
    uint64_t total_mass = 0;
    double both_low = 0, a_low_only = 0, b_low_only = 0, neither_low = 0;
    uint32_t low_levels = 0;  // levels <= this are "low"
};

UtilizationBreakdown utilization_breakdown(const DecryptedAsh& ash, double threshold = 1.0 / 3.0);

/// Omniscient application registry emitted by the simulation harness:
/// maps canonical snippet hashes to app names and kernel counts, plus the
/// per-app covered kernel positions as reported over time.
struct AppRegistry {
    struct App {
        std::string name;
        uint32_t kernel_count = 0;
        bool operator==(const App&) const = default;
    };
    std::map<SnippetHash, App> apps;

    static AppRegistry load_csv(const std::filesystem::path& path);
    void save_csv(const std::filesystem::path& path) const;
};

struct CoverageRow {
    std::string app;
    SnippetHash canonical{};
    uint32_t kernel_count = 0;
    uint64_t covered_positions = 0;
    double fraction = 0;
};

struct CoverageReport {
    std::vector<CoverageRow> rows;
    std::vector<SnippetHash> unknown_canonicals;  // reported but absent from the registry
};

// covered: canonical -> number of distinct kernel positions with at least
// one reported sample (from the simulation coverage ledger).
CoverageReport coverage_report(const std::map<SnippetHash, uint64_t>& covered,
                               const AppRegistry& registry);

/// Sampled-vs-ground-truth comparison of mass-normalized histograms.
struct BinError {
    uint32_t bin = 0;
    double truth_fraction = 0;   // share of total truth mass in this bin
    double relative_error = 0;   // |sampled_norm - truth_norm| / truth_norm
};

struct ErrorReport {
    std::vector<BinError> bins;       // nonzero-truth bins only
    uint64_t zero_truth_bins = 0;     // excluded from the comparison
    double mean_relative_error = 0;   // across nonzero-truth bins
    // Bins holding more than heavy_mass_threshold of the truth mass:
    double heavy_mass_threshold = 0;
    double mass_weighted_error_heavy = 0;
    // Total truth-mass share carried by bins whose error exceeds 5%:
    double mass_share_above_5pct = 0;
};

ErrorReport error_report(const std::vector<uint64_t>& sampled, const std::vector<uint64_t>& truth,
                         double heavy_mass_threshold = 0.01);

// --- exports -------------------------------------------------------------

void export_ash_json(const std::filesystem::path& path, const std::vector<DecryptedAsh>& ashes);
std::vector<DecryptedAsh> load_ash_json(const std::filesystem::path& path);

void export_breakdown_csv(const std::filesystem::path& path,
                          const std::vector<std::pair<DecryptedAsh, UtilizationBreakdown>>& rows);
void export_coverage_csv(const std::filesystem::path& path, const CoverageReport& report);
void export_error_csv(const std::filesystem::path& path, const ErrorReport& report);

}  // namespace penrose
