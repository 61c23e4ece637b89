#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace penrose {

using Digest32 = std::array<uint8_t, 32>;

// 64-bit mixer; also usable as a tiny deterministic RNG step.
uint64_t splitmix64(uint64_t x);

// XXH64 as specified by the xxHash project. Used for the MinHash family
// and other non-cryptographic fingerprints.
uint64_t xxh64(std::span<const uint8_t> data, uint64_t seed);
uint64_t xxh64(std::string_view data, uint64_t seed);

Digest32 sha256(std::span<const uint8_t> data);
Digest32 sha256(std::string_view data);

// HMAC-SHA256(key, msg).
Digest32 hmac_sha256(std::string_view key, std::string_view msg);

std::string to_hex(std::span<const uint8_t> data);

// Little-endian scalar packing helpers shared by the wire codec and
// digest computations.
void put_u16le(std::string& out, uint16_t v);
void put_u32le(std::string& out, uint32_t v);
void put_u64le(std::string& out, uint64_t v);

struct Digest32Hash {
    size_t operator()(const Digest32& d) const {
        uint64_t v;
        __builtin_memcpy(&v, d.data(), sizeof(v));
        return static_cast<size_t>(v);
    }
};

}  // namespace penrose
