#pragma once

#include <cstdint>
#include <span>

#include "penrose/hash.hpp"

namespace penrose {

/// Random source abstraction. Key generation and per-encryption blinding
/// use a CSPRNG; simulation and tests inject seeded generators so frames
/// and reports are reproducible.
class Rng {
public:
    virtual ~Rng() = default;
    virtual uint64_t next_u64() = 0;
    virtual void fill(std::span<uint8_t> out) = 0;

    // Uniform in [0, bound) without modulo bias.
    uint64_t below(uint64_t bound);
    double next_double();  // uniform in [0, 1)
};

/// OS-backed CSPRNG (OpenSSL RAND_bytes).
class SecureRng final : public Rng {
public:
    uint64_t next_u64() override;
    void fill(std::span<uint8_t> out) override;
};

/// Deterministic splitmix64 stream.
class SeededRng final : public Rng {
public:
    explicit SeededRng(uint64_t seed) : state_(seed) {}
    uint64_t next_u64() override {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }
    void fill(std::span<uint8_t> out) override;

private:
    uint64_t state_;
};

}  // namespace penrose
