#include "penrose/rng.hpp"

#include <openssl/rand.h>

#include <cstring>
#include <stdexcept>

namespace penrose {

uint64_t Rng::below(uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::below: zero bound");
    // Rejection sampling over the largest multiple of bound.
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % bound;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t SecureRng::next_u64() {
    uint64_t v;
    fill(std::span<uint8_t>(reinterpret_cast<uint8_t*>(&v), sizeof(v)));
    return v;
}

void SecureRng::fill(std::span<uint8_t> out) {
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1)
        throw std::runtime_error("entropy source failure");
}

void SeededRng::fill(std::span<uint8_t> out) {
    size_t i = 0;
    while (i < out.size()) {
        uint64_t v = next_u64();
        size_t n = std::min(out.size() - i, sizeof(v));
        std::memcpy(out.data() + i, &v, n);
        i += n;
    }
}

}  // namespace penrose
