#include "penrose/snippet.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace penrose {

std::string MinHashSignature::serialize() const {
    std::string out;
    out.reserve(kMinHashFunctions * 8);
    for (uint64_t v : values) put_u64le(out, v);
    return out;
}

MinHashSignature MinHashSignature::deserialize(std::span<const uint8_t> bytes) {
    if (bytes.size() != kMinHashFunctions * 8) throw Error("minhash signature must be 800 bytes");
    MinHashSignature sig;
    for (uint32_t j = 0; j < kMinHashFunctions; ++j) {
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[j * 8 + i];
        sig.values[j] = v;
    }
    return sig;
}

KernelName salt_kernel_name(const KernelName& name, std::string_view app_salt) {
    if (app_salt.empty()) return name;
    return to_hex(hmac_sha256(app_salt, name));
}

namespace {
constexpr char kGramSeparator = 0x1F;
}

std::vector<std::string> ngrams8(const Snippet& snippet) {
    const auto& ks = snippet.kernels;
    if (ks.size() < kNgramSize)
        throw SnippetTooShort("snippet has " + std::to_string(ks.size()) + " kernels, need >= 8");
    std::vector<std::string> grams;
    grams.reserve(ks.size() - kNgramSize + 1);
    std::unordered_set<std::string> seen;
    for (size_t i = 0; i + kNgramSize <= ks.size(); ++i) {
        std::string gram;
        for (size_t j = 0; j < kNgramSize; ++j) {
            if (j) gram.push_back(kGramSeparator);
            gram += ks[i + j];
        }
        if (seen.insert(gram).second) grams.push_back(std::move(gram));
    }
    return grams;
}

Snippet pad_to_window(Snippet snippet) {
    if (snippet.kernels.empty()) throw SnippetTooShort("empty snippet");
    while (snippet.kernels.size() < kNgramSize) snippet.kernels.push_back(snippet.kernels.back());
    return snippet;
}

MinHashSignature signature_of_grams(std::span<const std::string> grams, uint64_t root_seed) {
    if (grams.empty()) throw SnippetTooShort("no grams");
    MinHashSignature sig;
    for (uint32_t j = 0; j < kMinHashFunctions; ++j) {
        uint64_t seed = splitmix64(root_seed + j);
        uint64_t best = UINT64_MAX;
        for (const auto& g : grams) best = std::min(best, xxh64(g, seed));
        sig.values[j] = best;
    }
    return sig;
}

MinHashSignature minhash(const Snippet& snippet, uint64_t root_seed) {
    auto grams = ngrams8(snippet);
    return signature_of_grams(grams, root_seed);
}

SnippetHash snippet_hash_of(const MinHashSignature& sig) {
    return sha256(sig.serialize());
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
    uint32_t match = 0;
    for (uint32_t j = 0; j < kMinHashFunctions; ++j)
        if (a.values[j] == b.values[j]) ++match;
    return static_cast<double>(match) / kMinHashFunctions;
}

void SnippetTables::attach_storage(const std::filesystem::path& dir) {
    dir_ = dir;
    persistent_ = true;
    std::filesystem::create_directories(dir_);
    replay_logs();
}

namespace {

void append_record(const std::filesystem::path& path, std::span<const uint8_t> a,
                   std::span<const uint8_t> b) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to " + path.string());
    out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size()));
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

void SnippetTables::append_sst(const SnippetHash& h, const MinHashSignature& sig) {
    if (!persistent_) return;
    std::string packed = sig.serialize();
    append_record(dir_ / "sst.log", h,
                  std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(packed.data()), packed.size()));
}

void SnippetTables::append_est(const SnippetHash& h, const SnippetHash& canonical) {
    if (!persistent_) return;
    append_record(dir_ / "est.log", h, canonical);
}

void SnippetTables::replay_logs() {
    sst_.clear();
    est_.clear();
    sst_order_.clear();
    auto sst_path = dir_ / "sst.log";
    auto est_path = dir_ / "est.log";
    if (std::filesystem::exists(sst_path)) {
        std::ifstream in(sst_path, std::ios::binary);
        SnippetHash h;
        std::vector<uint8_t> sigbuf(kMinHashFunctions * 8);
        while (in.read(reinterpret_cast<char*>(h.data()), 32)) {
            if (!in.read(reinterpret_cast<char*>(sigbuf.data()), static_cast<std::streamsize>(sigbuf.size())))
                throw Error("truncated sst.log");
            if (sst_.emplace(h, MinHashSignature::deserialize(sigbuf)).second) sst_order_.push_back(h);
        }
    }
    if (std::filesystem::exists(est_path)) {
        std::ifstream in(est_path, std::ios::binary);
        SnippetHash h, c;
        while (in.read(reinterpret_cast<char*>(h.data()), 32)) {
            if (!in.read(reinterpret_cast<char*>(c.data()), 32)) throw Error("truncated est.log");
            est_[h] = c;
        }
    }
    check_integrity();
}

const MinHashSignature* SnippetTables::canonical_signature(const SnippetHash& h) const {
    auto it = sst_.find(h);
    return it == sst_.end() ? nullptr : &it->second;
}

std::optional<SnippetHash> SnippetTables::lookup(const SnippetHash& h) const {
    auto it = est_.find(h);
    if (it == est_.end()) return std::nullopt;
    return it->second;
}

ClassifyResult SnippetTables::classify(const SnippetHash& sh, const MinHashSignature& sig,
                                       double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("classify: tau must be in (0,1]");

    if (auto it = est_.find(sh); it != est_.end())
        return ClassifyResult{it->second, Disposition::Exact};

    // Linear scan of canonical signatures; ties break toward the highest
    // estimate, then the lexicographically smallest canonical hash.
    double best_est = -1.0;
    const SnippetHash* best = nullptr;
    for (const auto& canonical : sst_order_) {
        double est = estimate_jaccard(sig, sst_.at(canonical));
        if (est > best_est || (est == best_est && best && canonical < *best)) {
            best_est = est;
            best = &canonical;
        }
    }
    if (best && best_est >= tau) {
        SnippetHash canonical = *best;
        est_[sh] = canonical;
        append_est(sh, canonical);
        return ClassifyResult{canonical, Disposition::Matched};
    }

    sst_.emplace(sh, sig);
    sst_order_.push_back(sh);
    est_[sh] = sh;
    append_sst(sh, sig);
    append_est(sh, sh);
    return ClassifyResult{sh, Disposition::New};
}

void SnippetTables::check_integrity() const {
    for (const auto& [h, sig] : sst_) {
        auto it = est_.find(h);
        if (it == est_.end() || it->second != h) throw Error("SST canonical not self-mapped in EST");
    }
    for (const auto& [h, canonical] : est_) {
        if (!sst_.contains(canonical)) throw Error("EST value is not an SST key");
    }
}

}  // namespace penrose
