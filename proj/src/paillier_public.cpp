#include <openssl/bio.h>
#include <openssl/buffer.h>
#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "penrose/paillier.hpp"

namespace penrose::paillier {

bool valid_key_bits(uint32_t bits) { return bits == 1024 || bits == 2048 || bits == 3072; }

KeyFingerprint fingerprint_of(uint32_t bits, const mpz_class& n) {
    std::string preimage = "penrose-paillier-pk-v1";
    put_u32le(preimage, bits);
    size_t count = 0;
    std::vector<uint8_t> buf((mpz_sizeinbase(n.get_mpz_t(), 2) + 7) / 8);
    mpz_export(buf.data(), &count, 1, 1, 0, 0, n.get_mpz_t());
    preimage.append(reinterpret_cast<const char*>(buf.data()), count);
    Digest32 d = sha256(preimage);
    KeyFingerprint fp{};
    std::memcpy(fp.data(), d.data(), fp.size());
    return fp;
}

namespace {

mpz_class random_below(Rng& rng, const mpz_class& bound) {
    size_t bytes = (mpz_sizeinbase(bound.get_mpz_t(), 2) + 7) / 8 + 8;
    std::vector<uint8_t> buf(bytes);
    mpz_class v;
    do {
        rng.fill(buf);
        mpz_import(v.get_mpz_t(), buf.size(), 1, 1, 0, 0, buf.data());
        v %= bound;
    } while (v == 0);
    return v;
}

}  // namespace

Ciphertext encrypt_mpz(const PublicKey& pk, const mpz_class& m, Rng& rng) {
    if (m < 0 || m >= pk.n) throw Error("paillier: plaintext out of range");
    // r uniform in [1, n) with gcd(r, n) = 1
    mpz_class r, g;
    do {
        r = random_below(rng, pk.n);
        mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
    } while (g != 1);

    // (1 + m*n) * r^n mod n^2
    mpz_class gm = (1 + m * pk.n) % pk.n_squared;
    mpz_class rn;
    mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n_squared.get_mpz_t());
    return Ciphertext{(gm * rn) % pk.n_squared};
}

Ciphertext encrypt(const PublicKey& pk, uint64_t m, Rng& rng) {
    mpz_class z;
    mpz_import(z.get_mpz_t(), 1, 1, sizeof(m), 0, 0, &m);
    return encrypt_mpz(pk, z, rng);
}

Ciphertext add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
    return Ciphertext{(a.value * b.value) % pk.n_squared};
}

std::vector<uint8_t> serialize_ciphertext(const PublicKey& pk, const Ciphertext& c) {
    std::vector<uint8_t> out(pk.ciphertext_width(), 0);
    size_t count = 0;
    size_t bytes = (mpz_sizeinbase(c.value.get_mpz_t(), 2) + 7) / 8;
    if (bytes > out.size()) throw Error("ciphertext wider than 2*key-bits");
    mpz_export(out.data() + (out.size() - bytes), &count, 1, 1, 0, 0, c.value.get_mpz_t());
    return out;
}

Ciphertext deserialize_ciphertext(const PublicKey& pk, std::span<const uint8_t> bytes) {
    if (bytes.size() != pk.ciphertext_width()) throw Error("ciphertext width mismatch");
    mpz_class v;
    mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 0, 0, bytes.data());
    if (v >= pk.n_squared) throw Error("malformed ciphertext: not in [0, n^2)");
    return Ciphertext{std::move(v)};
}

EncryptedHistogram encrypt_bins(const PublicKey& pk, const Digest32& snippet_hash,
                                uint16_t counter_id, std::span<const uint64_t> bins, Rng& rng) {
    EncryptedHistogram h;
    h.snippet_hash = snippet_hash;
    h.counter_id = counter_id;
    h.key_fingerprint = pk.fingerprint;
    h.bins.reserve(bins.size());
    for (uint64_t b : bins) h.bins.push_back(encrypt(pk, b, rng));
    return h;
}

EncryptedHistogram add_histograms(const PublicKey& pk, const EncryptedHistogram& a,
                                  const EncryptedHistogram& b) {
    if (a.counter_id != b.counter_id) throw Error("add_histograms: counter mismatch");
    if (a.bins.size() != b.bins.size()) throw Error("add_histograms: dimension mismatch");
    if (a.key_fingerprint != b.key_fingerprint || a.key_fingerprint != pk.fingerprint)
        throw Error("add_histograms: key fingerprint mismatch");
    EncryptedHistogram out;
    out.snippet_hash = a.snippet_hash;
    out.counter_id = a.counter_id;
    out.key_fingerprint = a.key_fingerprint;
    out.bins.reserve(a.bins.size());
    for (size_t i = 0; i < a.bins.size(); ++i) out.bins.push_back(add(pk, a.bins[i], b.bins[i]));
    return out;
}

void rerandomize(const PublicKey& pk, EncryptedHistogram& h, Rng& rng) {
    for (auto& bin : h.bins) bin = add(pk, bin, encrypt(pk, uint64_t{0}, rng));
}

std::vector<uint8_t> serialize_bins(const PublicKey& pk, const EncryptedHistogram& h) {
    std::vector<uint8_t> out;
    out.reserve(h.bins.size() * pk.ciphertext_width());
    for (const auto& c : h.bins) {
        auto bytes = serialize_ciphertext(pk, c);
        out.insert(out.end(), bytes.begin(), bytes.end());
    }
    return out;
}

std::vector<Ciphertext> deserialize_bins(const PublicKey& pk, std::span<const uint8_t> bytes,
                                         uint32_t bin_count, uint32_t ct_width) {
    if (ct_width != pk.ciphertext_width()) throw Error("ciphertext width mismatch with key");
    if (bytes.size() != static_cast<size_t>(bin_count) * ct_width)
        throw Error("encrypted bin payload size mismatch");
    std::vector<Ciphertext> out;
    out.reserve(bin_count);
    for (uint32_t i = 0; i < bin_count; ++i)
        out.push_back(deserialize_ciphertext(pk, bytes.subspan(static_cast<size_t>(i) * ct_width, ct_width)));
    return out;
}

mpz_class worst_case_bin(const AggregationBoundParams& p) {
    if (p.min_message_period_s <= 0) throw ConfigError("min_message_period must be > 0");
    if (p.report_period_s <= 0) throw ConfigError("report_period must be > 0");
    // Messages per client per report period: pushes at t = 0, T, 2T, ... < delta.
    uint64_t messages =
        static_cast<uint64_t>((p.report_period_s + p.min_message_period_s - 1) / p.min_message_period_s);
    mpz_class bound = p.gpus;
    bound *= messages;
    bound *= p.aggregation_threshold;
    bound *= p.max_weight;
    return bound;
}

bool aggregation_bound_ok(const AggregationBoundParams& p) {
    mpz_class limit = 1;
    limit <<= 63;
    return worst_case_bin(p) < limit;
}

void check_aggregation_bound(const AggregationBoundParams& p, const PublicKey& pk) {
    mpz_class bound = worst_case_bin(p);
    mpz_class limit = 1;
    limit <<= 63;
    if (bound >= limit)
        throw ConfigError("aggregation bound exceeds 2^63: " + bound.get_str());
    if (bound >= pk.n)
        throw ConfigError("aggregation bound exceeds the Paillier modulus");
}

// --- key files ---------------------------------------------------------

namespace {

std::string b64_encode(std::span<const uint8_t> data) {
    std::string out;
    out.resize(((data.size() + 2) / 3) * 4 + 1);
    int n = EVP_EncodeBlock(reinterpret_cast<uint8_t*>(out.data()), data.data(),
                            static_cast<int>(data.size()));
    out.resize(static_cast<size_t>(n));
    return out;
}

std::vector<uint8_t> b64_decode(std::string_view text) {
    std::vector<uint8_t> out(((text.size() + 3) / 4) * 3);
    int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const uint8_t*>(text.data()),
                            static_cast<int>(text.size()));
    if (n < 0) throw Error("bad base64");
    // EVP_DecodeBlock pads; trim by '=' count.
    size_t pad = 0;
    for (auto it = text.rbegin(); it != text.rend() && *it == '='; ++it) ++pad;
    out.resize(static_cast<size_t>(n) - pad);
    return out;
}

std::vector<uint8_t> mpz_to_bytes(const mpz_class& v) {
    std::vector<uint8_t> buf((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8);
    size_t count = 0;
    mpz_export(buf.data(), &count, 1, 1, 0, 0, v.get_mpz_t());
    buf.resize(count);
    return buf;
}

mpz_class mpz_from_bytes(std::span<const uint8_t> bytes) {
    mpz_class v;
    mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 0, 0, bytes.data());
    return v;
}

}  // namespace

void write_public_key_file(const std::filesystem::path& path, const PublicKey& pk) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write public key file: " + path.string());
    auto nbytes = mpz_to_bytes(pk.n);
    out << "penrose-public-key v1\n";
    out << "bits = " << pk.bits << "\n";
    out << "n = " << b64_encode(nbytes) << "\n";
    out << "fingerprint = " << to_hex(pk.fingerprint) << "\n";
}

PublicKey read_public_key_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read public key file: " + path.string());
    std::string header;
    std::getline(in, header);
    if (header != "penrose-public-key v1") throw Error("unrecognized public key file");
    PublicKey pk;
    std::string line;
    std::string n_b64, fp_hex;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string key, eq, val;
        if (!(ss >> key >> eq >> val) || eq != "=") continue;
        if (key == "bits") pk.bits = static_cast<uint32_t>(std::stoul(val));
        else if (key == "n") n_b64 = val;
        else if (key == "fingerprint") fp_hex = val;
    }
    if (!valid_key_bits(pk.bits) || n_b64.empty()) throw Error("incomplete public key file");
    pk.n = mpz_from_bytes(b64_decode(n_b64));
    pk.n_squared = pk.n * pk.n;
    pk.fingerprint = fingerprint_of(pk.bits, pk.n);
    if (!fp_hex.empty() && fp_hex != to_hex(pk.fingerprint))
        throw Error("public key fingerprint mismatch");
    return pk;
}

namespace keyfile_detail {

// Shared with paillier_private.cpp; not part of the public surface.
std::string b64e(std::span<const uint8_t> d) { return b64_encode(d); }
std::vector<uint8_t> b64d(std::string_view t) { return b64_decode(t); }
std::vector<uint8_t> to_bytes(const mpz_class& v) { return mpz_to_bytes(v); }
mpz_class from_bytes(std::span<const uint8_t> b) { return mpz_from_bytes(b); }

}  // namespace keyfile_detail

}  // namespace penrose::paillier
