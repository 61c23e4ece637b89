#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "penrose/hash.hpp"
#include "penrose/snippet.hpp"

namespace penrose::wire {

// Frame layout (all integers little-endian):
//   u32 frame_length (total bytes, including this field)
//   4B  magic "PNRS"
//   u8  version
//   u8  msg_type
//   ... type-specific body ...
//   u32 CRC32 over magic..body
inline constexpr std::array<uint8_t, 4> kMagic{'P', 'N', 'R', 'S'};
inline constexpr uint8_t kVersion = 1;
inline constexpr size_t kMaxFrameBytes = 64u << 20;

enum class MsgType : uint8_t {
    Update = 0x01,
    Report = 0x02,
    ReportRequest = 0x03,
};

enum class DecodeError : uint8_t {
    None = 0,
    Truncated,
    BadMagic,
    BadVersion,
    UnknownType,
    BadCrc,
    Malformed,
};

std::string_view decode_error_name(DecodeError e);

/// Client -> AS. An announce (classification-phase) frame is the same
/// message with bin_count = 0 and no histogram payload. Carries no user
/// identifier of any kind.
struct UpdateMessage {
    uint32_t root_seed_id = kRootSeedIdV1;
    uint16_t counter_id = 0;
    SnippetHash snippet_hash{};
    MinHashSignature minhash;
    std::array<uint8_t, 8> key_fingerprint{};
    uint16_t bin_count = 0;
    uint32_t ct_width = 0;       // serialized bytes per ciphertext
    uint64_t sample_count = 0;   // plaintext contribution size
    std::vector<uint8_t> bins;   // bin_count * ct_width bytes of ciphertext

    bool is_announce() const { return bin_count == 0; }
    bool operator==(const UpdateMessage&) const = default;
};

struct ReportEntry {
    SnippetHash snippet_hash{};  // canonical
    uint16_t counter_id = 0;
    uint64_t contribution_count = 0;
    uint16_t bin_count = 0;
    std::vector<uint8_t> bins;

    bool operator==(const ReportEntry&) const = default;
};

/// AS -> DS. Entries sorted by (snippet_hash, counter_id).
struct ReportMessage {
    uint64_t period_id = 0;
    std::array<uint8_t, 8> key_fingerprint{};
    uint32_t ct_width = 0;
    std::vector<ReportEntry> entries;

    bool operator==(const ReportMessage&) const = default;
};

/// DS -> AS. period_id 0 requests the current period snapshot.
struct ReportRequest {
    uint64_t period_id = 0;
    bool operator==(const ReportRequest&) const = default;
};

std::vector<uint8_t> encode_update(const UpdateMessage& msg);
std::vector<uint8_t> encode_report(const ReportMessage& msg);
std::vector<uint8_t> encode_report_request(const ReportRequest& msg);

std::optional<UpdateMessage> decode_update(std::span<const uint8_t> frame, DecodeError& err);
std::optional<ReportMessage> decode_report(std::span<const uint8_t> frame, DecodeError& err);
std::optional<ReportRequest> decode_report_request(std::span<const uint8_t> frame, DecodeError& err);

// Validates framing (length, magic, version, CRC) and returns the type.
std::optional<MsgType> frame_type(std::span<const uint8_t> frame, DecodeError& err);

}  // namespace penrose::wire
