#include "penrose/wire.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>

namespace penrose::wire {

std::string_view decode_error_name(DecodeError e) {
    switch (e) {
        case DecodeError::None: return "none";
        case DecodeError::Truncated: return "truncated";
        case DecodeError::BadMagic: return "bad_magic";
        case DecodeError::BadVersion: return "bad_version";
        case DecodeError::UnknownType: return "unknown_type";
        case DecodeError::BadCrc: return "bad_crc";
        case DecodeError::Malformed: return "malformed";
    }
    return "unknown";
}

namespace {

class Writer {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) { for (int i = 0; i < 2; ++i) buf_.push_back(uint8_t(v >> (8 * i))); }
    void u32(uint32_t v) { for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i))); }
    void u64(uint64_t v) { for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i))); }
    void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    std::vector<uint8_t>& data() { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const uint8_t> data) : data_(data) {}
    bool u8(uint8_t& v) { return copy(&v, 1); }
    bool u16(uint16_t& v) {
        uint8_t b[2];
        if (!copy(b, 2)) return false;
        v = uint16_t(b[0]) | uint16_t(b[1]) << 8;
        return true;
    }
    bool u32(uint32_t& v) {
        uint8_t b[4];
        if (!copy(b, 4)) return false;
        v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return true;
    }
    bool u64(uint64_t& v) {
        uint8_t b[8];
        if (!copy(b, 8)) return false;
        v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return true;
    }
    bool bytes(uint8_t* out, size_t n) { return copy(out, n); }
    bool bytes(std::vector<uint8_t>& out, size_t n) {
        out.resize(n);
        return n == 0 || copy(out.data(), n);
    }
    size_t remaining() const { return data_.size() - pos_; }

private:
    bool copy(void* out, size_t n) {
        if (pos_ + n > data_.size()) return false;
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
        return true;
    }
    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

uint32_t crc_of(std::span<const uint8_t> data) {
    return static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

std::vector<uint8_t> finish_frame(Writer& body) {
    // body holds magic..payload; wrap with length prefix and CRC.
    uint32_t crc = crc_of(body.data());
    Writer frame;
    frame.u32(static_cast<uint32_t>(4 + body.data().size() + 4));
    frame.bytes(body.data());
    frame.u32(crc);
    return std::move(frame.data());
}

void begin_frame(Writer& w, MsgType type) {
    w.bytes(kMagic);
    w.u8(kVersion);
    w.u8(static_cast<uint8_t>(type));
}

// Checks framing and returns the body (magic..payload, CRC stripped).
std::optional<std::span<const uint8_t>> open_frame(std::span<const uint8_t> frame,
                                                   DecodeError& err) {
    err = DecodeError::None;
    if (frame.size() < 4 + 4 + 1 + 1 + 4) {
        err = DecodeError::Truncated;
        return std::nullopt;
    }
    uint32_t declared = 0;
    for (int i = 3; i >= 0; --i) declared = (declared << 8) | frame[i];
    if (declared != frame.size() || declared > kMaxFrameBytes) {
        err = DecodeError::Truncated;
        return std::nullopt;
    }
    auto body = frame.subspan(4, frame.size() - 8);
    if (!std::equal(kMagic.begin(), kMagic.end(), body.begin())) {
        err = DecodeError::BadMagic;
        return std::nullopt;
    }
    auto crc_bytes = frame.subspan(frame.size() - 4);
    uint32_t declared_crc = 0;
    for (int i = 3; i >= 0; --i) declared_crc = (declared_crc << 8) | crc_bytes[i];
    if (declared_crc != crc_of(body)) {
        err = DecodeError::BadCrc;
        return std::nullopt;
    }
    if (body[4] != kVersion) {
        err = DecodeError::BadVersion;
        return std::nullopt;
    }
    return body;
}

std::optional<Reader> open_typed(std::span<const uint8_t> frame, MsgType expect, DecodeError& err) {
    auto body = open_frame(frame, err);
    if (!body) return std::nullopt;
    MsgType t = static_cast<MsgType>((*body)[5]);
    if (t != expect) {
        err = DecodeError::UnknownType;
        return std::nullopt;
    }
    return Reader(body->subspan(6));
}

}  // namespace

std::optional<MsgType> frame_type(std::span<const uint8_t> frame, DecodeError& err) {
    auto body = open_frame(frame, err);
    if (!body) return std::nullopt;
    uint8_t t = (*body)[5];
    if (t != uint8_t(MsgType::Update) && t != uint8_t(MsgType::Report) &&
        t != uint8_t(MsgType::ReportRequest)) {
        err = DecodeError::UnknownType;
        return std::nullopt;
    }
    return static_cast<MsgType>(t);
}

std::vector<uint8_t> encode_update(const UpdateMessage& msg) {
    Writer w;
    begin_frame(w, MsgType::Update);
    w.u32(msg.root_seed_id);
    w.u16(msg.counter_id);
    w.bytes(msg.snippet_hash);
    std::string sig = msg.minhash.serialize();
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(sig.data()), sig.size()));
    w.bytes(msg.key_fingerprint);
    w.u16(msg.bin_count);
    w.u32(msg.ct_width);
    w.u64(msg.sample_count);
    w.bytes(msg.bins);
    return finish_frame(w);
}

std::optional<UpdateMessage> decode_update(std::span<const uint8_t> frame, DecodeError& err) {
    auto r = open_typed(frame, MsgType::Update, err);
    if (!r) return std::nullopt;
    UpdateMessage m;
    std::vector<uint8_t> sig(kMinHashFunctions * 8);
    if (!r->u32(m.root_seed_id) || !r->u16(m.counter_id) ||
        !r->bytes(m.snippet_hash.data(), m.snippet_hash.size()) ||
        !r->bytes(sig.data(), sig.size()) ||
        !r->bytes(m.key_fingerprint.data(), m.key_fingerprint.size()) || !r->u16(m.bin_count) ||
        !r->u32(m.ct_width) || !r->u64(m.sample_count)) {
        err = DecodeError::Malformed;
        return std::nullopt;
    }
    m.minhash = MinHashSignature::deserialize(sig);
    size_t payload = static_cast<size_t>(m.bin_count) * m.ct_width;
    if (r->remaining() != payload || !r->bytes(m.bins, payload)) {
        err = DecodeError::Malformed;
        return std::nullopt;
    }
    if (m.bin_count != 0 && m.ct_width == 0) {
        err = DecodeError::Malformed;
        return std::nullopt;
    }
    return m;
}

std::vector<uint8_t> encode_report(const ReportMessage& msg) {
    Writer w;
    begin_frame(w, MsgType::Report);
    w.u64(msg.period_id);
    w.bytes(msg.key_fingerprint);
    w.u32(msg.ct_width);
    w.u32(static_cast<uint32_t>(msg.entries.size()));
    for (const auto& e : msg.entries) {
        w.bytes(e.snippet_hash);
        w.u16(e.counter_id);
        w.u64(e.contribution_count);
        w.u16(e.bin_count);
        w.bytes(e.bins);
    }
    return finish_frame(w);
}

std::optional<ReportMessage> decode_report(std::span<const uint8_t> frame, DecodeError& err) {
    auto r = open_typed(frame, MsgType::Report, err);
    if (!r) return std::nullopt;
    ReportMessage m;
    uint32_t count = 0;
    if (!r->u64(m.period_id) || !r->bytes(m.key_fingerprint.data(), m.key_fingerprint.size()) ||
        !r->u32(m.ct_width) || !r->u32(count)) {
        err = DecodeError::Malformed;
        return std::nullopt;
    }
    m.entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        ReportEntry e;
        if (!r->bytes(e.snippet_hash.data(), e.snippet_hash.size()) || !r->u16(e.counter_id) ||
            !r->u64(e.contribution_count) || !r->u16(e.bin_count) ||
            !r->bytes(e.bins, static_cast<size_t>(e.bin_count) * m.ct_width)) {
            err = DecodeError::Malformed;
            return std::nullopt;
        }
        m.entries.push_back(std::move(e));
    }
    if (r->remaining() != 0) {
        err = DecodeError::Malformed;
        return std::nullopt;
    }
    return m;
}

std::vector<uint8_t> encode_report_request(const ReportRequest& msg) {
    Writer w;
    begin_frame(w, MsgType::ReportRequest);
    w.u64(msg.period_id);
    return finish_frame(w);
}

std::optional<ReportRequest> decode_report_request(std::span<const uint8_t> frame,
                                                   DecodeError& err) {
    auto r = open_typed(frame, MsgType::ReportRequest, err);
    if (!r) return std::nullopt;
    ReportRequest m;
    if (!r->u64(m.period_id) || r->remaining() != 0) {
        err = DecodeError::Malformed;
        return std::nullopt;
    }
    return m;
}

}  // namespace penrose::wire
