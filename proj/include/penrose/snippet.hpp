#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "penrose/error.hpp"
#include "penrose/hash.hpp"

namespace penrose {

using KernelName = std::string;
using SnippetHash = Digest32;

inline constexpr uint32_t kMinHashFunctions = 100;
inline constexpr uint32_t kNgramSize = 8;
inline constexpr double kDefaultJaccardThreshold = 0.85;

// Protocol constant identifying the v1 hash family. Clients and server
// agree on the family through the root_seed_id wire field.
inline constexpr uint64_t kRootSeedV1 = 0x50454E524F534531ull;
inline constexpr uint32_t kRootSeedIdV1 = 1;

struct Snippet {
    std::vector<KernelName> kernels;
};

struct MinHashSignature {
    std::array<uint64_t, kMinHashFunctions> values{};

    bool operator==(const MinHashSignature&) const = default;

    // 800-byte little-endian packing, also the digest preimage.
    std::string serialize() const;
    static MinHashSignature deserialize(std::span<const uint8_t> bytes);
};

struct SnippetTooShort : Error {
    using Error::Error;
};

// Keyed rename applied at build time for private applications. An empty
// salt is the identity transform (public application).
KernelName salt_kernel_name(const KernelName& name, std::string_view app_salt);

// All distinct length-8 contiguous windows, each serialized as the 8
// names joined with a 0x1F separator. Throws SnippetTooShort below 8.
std::vector<std::string> ngrams8(const Snippet& snippet);

// Windows shorter than 8 kernels repeat the terminal name up to length 8.
Snippet pad_to_window(Snippet snippet);

// values[j] = min over grams of h_j(gram), h_j = xxh64 seeded with
// splitmix64(root_seed + j).
MinHashSignature minhash(const Snippet& snippet, uint64_t root_seed = kRootSeedV1);
MinHashSignature signature_of_grams(std::span<const std::string> grams,
                                    uint64_t root_seed = kRootSeedV1);

// SHA-256 over the signature's little-endian packing.
SnippetHash snippet_hash_of(const MinHashSignature& sig);

// Fraction of agreeing signature positions.
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

enum class Disposition : uint8_t { Exact, Matched, New };

struct ClassifyResult {
    SnippetHash canonical{};
    Disposition disposition = Disposition::New;
};

/// Canonical-snippet registry (SST) plus the hash-to-canonical map (EST).
/// Mutations are appended to two logs when a state directory is attached,
/// so a restarted server resumes with the same canonical assignments.
/// Single-writer: callers serialize mutations.
class SnippetTables {
public:
    SnippetTables() = default;

    // Attaches (and replays) sst.log / est.log under dir.
    void attach_storage(const std::filesystem::path& dir);

    ClassifyResult classify(const SnippetHash& sh, const MinHashSignature& sig,
                            double tau = kDefaultJaccardThreshold);

    size_t canonical_count() const { return sst_.size(); }
    size_t known_hash_count() const { return est_.size(); }
    const MinHashSignature* canonical_signature(const SnippetHash& h) const;
    std::optional<SnippetHash> lookup(const SnippetHash& h) const;

    // EST values resolve to SST keys and canonicals self-map.
    void check_integrity() const;

private:
    void append_sst(const SnippetHash& h, const MinHashSignature& sig);
    void append_est(const SnippetHash& h, const SnippetHash& canonical);
    void replay_logs();

    std::unordered_map<SnippetHash, MinHashSignature, Digest32Hash> sst_;
    std::unordered_map<SnippetHash, SnippetHash, Digest32Hash> est_;
    std::vector<SnippetHash> sst_order_;  // insertion order for deterministic scans
    std::filesystem::path dir_;
    bool persistent_ = false;
};

}  // namespace penrose
