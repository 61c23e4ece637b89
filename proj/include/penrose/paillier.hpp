#pragma once

#include <gmpxx.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "penrose/error.hpp"
#include "penrose/hash.hpp"
#include "penrose/rng.hpp"

namespace penrose::paillier {

using KeyFingerprint = std::array<uint8_t, 8>;

// 1024 is allowed for fast tests; 2048 is the deployment default.
bool valid_key_bits(uint32_t bits);

struct PublicKey {
    uint32_t bits = 0;      // modulus size
    mpz_class n;            // p*q
    mpz_class n_squared;    // cached n^2
    KeyFingerprint fingerprint{};

    // g = n+1, so Enc(m) = (1 + m*n) * r^n mod n^2.
    size_t ciphertext_width() const { return bits / 4; }  // 2*bits in bytes
};

struct PrivateKey {
    mpz_class p, q;
    mpz_class lambda;  // lcm(p-1, q-1)
    mpz_class mu;      // lambda^{-1} mod n
    // CRT precomputation
    mpz_class p_squared, q_squared;
    mpz_class hp, hq;      // L_p(g^{p-1} mod p^2)^{-1} mod p, same for q
    mpz_class q_inv_p;     // q^{-1} mod p
    PublicKey pk;
};

struct Ciphertext {
    mpz_class value;  // in [0, n^2)
};

struct KeyPair {
    PublicKey pk;
    PrivateKey sk;
};

// Probabilistic keygen: random primes of bits/2 each (Miller-Rabin, 64
// rounds), p != q, gcd(n, (p-1)(q-1)) = 1.
KeyPair keygen(uint32_t bits, Rng& rng);

KeyFingerprint fingerprint_of(uint32_t bits, const mpz_class& n);

Ciphertext encrypt(const PublicKey& pk, uint64_t m, Rng& rng);
Ciphertext encrypt_mpz(const PublicKey& pk, const mpz_class& m, Rng& rng);

// Ciphertext product; decrypts to the plaintext sum mod n.
Ciphertext add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b);

mpz_class decrypt(const PrivateKey& sk, const Ciphertext& c);
uint64_t decrypt_u64(const PrivateKey& sk, const Ciphertext& c);

// Fixed-width big-endian, 2*bits per ciphertext.
std::vector<uint8_t> serialize_ciphertext(const PublicKey& pk, const Ciphertext& c);
Ciphertext deserialize_ciphertext(const PublicKey& pk, std::span<const uint8_t> bytes);

struct EncryptedHistogram {
    Digest32 snippet_hash{};
    uint16_t counter_id = 0;
    std::vector<Ciphertext> bins;
    KeyFingerprint key_fingerprint{};
};

EncryptedHistogram encrypt_bins(const PublicKey& pk, const Digest32& snippet_hash,
                                uint16_t counter_id, std::span<const uint64_t> bins, Rng& rng);

// Bin-wise homomorphic addition. snippet hashes may differ (the server
// routes partials from equivalent snippets into one canonical); counter,
// dimension, and key fingerprint must match.
EncryptedHistogram add_histograms(const PublicKey& pk, const EncryptedHistogram& a,
                                  const EncryptedHistogram& b);

// Multiplies every bin by a fresh encryption of zero; plaintexts are
// unchanged but the ciphertext bytes become unlinkable to the source frame.
void rerandomize(const PublicKey& pk, EncryptedHistogram& h, Rng& rng);

std::vector<uint64_t> decrypt_histogram(const PrivateKey& sk, const EncryptedHistogram& h);

std::vector<uint8_t> serialize_bins(const PublicKey& pk, const EncryptedHistogram& h);
std::vector<Ciphertext> deserialize_bins(const PublicKey& pk, std::span<const uint8_t> bytes,
                                         uint32_t bin_count, uint32_t ct_width);

/// Worst-case aggregated-bin bound for a deployment configuration:
/// every one of `gpus` clients ships a full-threshold partial every
/// `min_message_period_s`, all landing in one bin, for `report_period_s`.
struct AggregationBoundParams {
    uint64_t gpus = 100000;
    uint64_t aggregation_threshold = 10000;   // A
    int64_t report_period_s = 86400;          // delta
    int64_t min_message_period_s = 3000;
    uint64_t max_weight = 15;                 // 1 in count mode
};

mpz_class worst_case_bin(const AggregationBoundParams& p);

// Throws ConfigError when the worst-case bin reaches 2^63 or the modulus.
void check_aggregation_bound(const AggregationBoundParams& p, const PublicKey& pk);
bool aggregation_bound_ok(const AggregationBoundParams& p);

// --- key files ---------------------------------------------------------

// Text envelope: key-bits, base64 modulus, fingerprint.
void write_public_key_file(const std::filesystem::path& path, const PublicKey& pk);
PublicKey read_public_key_file(const std::filesystem::path& path);

// Private key at rest is AES-256-GCM under a PBKDF2-derived key.
void write_private_key_file(const std::filesystem::path& path, const PrivateKey& sk,
                            std::string_view passphrase);
PrivateKey read_private_key_file(const std::filesystem::path& path, std::string_view passphrase);

}  // namespace penrose::paillier
