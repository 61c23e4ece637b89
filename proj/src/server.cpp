#include "penrose/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <deque>
#include <sstream>

#include "penrose/transport.hpp"

namespace penrose {

std::string_view drop_reason_name(DropReason r) {
    switch (r) {
        case DropReason::Truncated: return "truncated";
        case DropReason::BadMagic: return "bad_magic";
        case DropReason::BadVersion: return "bad_version";
        case DropReason::UnknownType: return "unknown_type";
        case DropReason::BadCrc: return "bad_crc";
        case DropReason::Malformed: return "malformed";
        case DropReason::RootSeedMismatch: return "root_seed_mismatch";
        case DropReason::IntegrityMismatch: return "integrity_mismatch";
        case DropReason::KeyMismatch: return "key_mismatch";
        case DropReason::DimensionMismatch: return "dimension_mismatch";
        case DropReason::QueueFull: return "queue_full";
    }
    return "unknown";
}

std::string ServerMetrics::to_text() const {
    std::ostringstream out;
    out << "accepted_updates " << accepted_updates << "\n";
    out << "accepted_announces " << accepted_announces << "\n";
    for (size_t i = 0; i < kDropReasonCount; ++i)
        out << "dropped_" << drop_reason_name(static_cast<DropReason>(i)) << " " << dropped[i] << "\n";
    out << "classified_exact " << dispositions[0] << "\n";
    out << "classified_matched " << dispositions[1] << "\n";
    out << "classified_new " << dispositions[2] << "\n";
    out << "reports_emitted " << reports_emitted << "\n";
    out << "fold_seconds " << fold_seconds << "\n";
    return out.str();
}

AggregationServer::AggregationServer(ServerConfig config) : config_(std::move(config)) {
    if (!config_.state_dir.empty()) tables_.attach_storage(config_.state_dir);
}

namespace {

DropReason from_decode_error(wire::DecodeError err) {
    using wire::DecodeError;
    switch (err) {
        case DecodeError::Truncated: return DropReason::Truncated;
        case DecodeError::BadMagic: return DropReason::BadMagic;
        case DecodeError::BadVersion: return DropReason::BadVersion;
        case DecodeError::UnknownType: return DropReason::UnknownType;
        case DecodeError::BadCrc: return DropReason::BadCrc;
        default: return DropReason::Malformed;
    }
}

}  // namespace

AcceptResult AggregationServer::handle_update_frame(std::span<const uint8_t> frame) {
    wire::DecodeError err;
    auto msg = wire::decode_update(frame, err);
    if (!msg) {
        AcceptResult r;
        r.reason = from_decode_error(err);
        std::lock_guard lock(metrics_mu_);
        ++metrics_.dropped[static_cast<size_t>(*r.reason)];
        return r;
    }
    return ingest(*msg);
}

AcceptResult AggregationServer::ingest(const wire::UpdateMessage& msg) {
    AcceptResult result;
    auto drop = [&](DropReason reason) {
        result.reason = reason;
        std::lock_guard lock(metrics_mu_);
        ++metrics_.dropped[static_cast<size_t>(reason)];
        return result;
    };

    if (msg.root_seed_id != kRootSeedIdV1) return drop(DropReason::RootSeedMismatch);
    // The snippet hash must be the digest of the attached signature.
    if (snippet_hash_of(msg.minhash) != msg.snippet_hash) return drop(DropReason::IntegrityMismatch);

    ClassifyResult cls;
    {
        std::lock_guard lock(tables_mu_);
        cls = tables_.classify(msg.snippet_hash, msg.minhash, config_.tau);
    }
    result.disposition = cls.disposition;
    result.canonical = cls.canonical;
    {
        std::lock_guard lock(metrics_mu_);
        ++metrics_.dispositions[static_cast<size_t>(cls.disposition)];
    }

    if (msg.is_announce()) {
        result.accepted = true;
        result.announce_only = true;
        std::lock_guard lock(metrics_mu_);
        ++metrics_.accepted_announces;
        return result;
    }

    if (msg.key_fingerprint != config_.pk.fingerprint) return drop(DropReason::KeyMismatch);
    if (msg.ct_width != config_.pk.ciphertext_width()) return drop(DropReason::KeyMismatch);
    // Aggregation is opaque to counter semantics; the protocol only caps
    // the dimension. Deployed counters use 128 or 1024 bins.
    if (msg.bin_count == 0 || msg.bin_count > 1024) return drop(DropReason::DimensionMismatch);

    paillier::EncryptedHistogram incoming;
    incoming.snippet_hash = cls.canonical;
    incoming.counter_id = msg.counter_id;
    incoming.key_fingerprint = msg.key_fingerprint;
    try {
        incoming.bins = paillier::deserialize_bins(config_.pk, msg.bins, msg.bin_count, msg.ct_width);
    } catch (const Error&) {
        return drop(DropReason::Malformed);
    }

    auto t0 = std::chrono::steady_clock::now();
    auto key = std::make_pair(cls.canonical, msg.counter_id);
    std::mutex* fold_mu = nullptr;
    AshEntry* entry = nullptr;
    bool created = false;
    // Entry locks are taken under store_mu_ (so snapshots cannot race the
    // map shape) but without blocking other keys: contended entries spin
    // on a re-lookup instead of holding the store lock.
    while (true) {
        std::unique_lock lock(store_mu_);
        auto it = store_.find(key);
        if (it == store_.end()) {
            it = store_.emplace(key, AshEntry{}).first;
            created = true;
        }
        entry = &it->second;
        fold_mu = entry->fold_mu.get();
        if (fold_mu->try_lock()) break;
        lock.unlock();
        std::this_thread::yield();
    }
    {
        std::lock_guard<std::mutex> fold_guard(*fold_mu, std::adopt_lock);
        if (created) {
            // Adopt the first vector, then re-randomize so the designer
            // cannot match a single-contributor ASH to an observed frame.
            entry->hist = std::move(incoming);
            if (config_.rerandomize_adopted) {
                SecureRng rng;
                paillier::rerandomize(config_.pk, entry->hist, rng);
            }
        } else {
            if (entry->hist.bins.size() != incoming.bins.size()) {
                return drop(DropReason::DimensionMismatch);
            }
            entry->hist = paillier::add_histograms(config_.pk, entry->hist, incoming);
        }
        entry->contribution_count += 1;
        entry->last_update_unix =
            std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count();
    }
    auto t1 = std::chrono::steady_clock::now();

    result.accepted = true;
    {
        std::lock_guard lock(metrics_mu_);
        ++metrics_.accepted_updates;
        metrics_.fold_seconds += std::chrono::duration<double>(t1 - t0).count();
    }
    return result;
}

wire::ReportMessage AggregationServer::emit_report() {
    wire::ReportMessage report;
    report.key_fingerprint = config_.pk.fingerprint;
    report.ct_width = static_cast<uint32_t>(config_.pk.ciphertext_width());

    std::lock_guard lock(store_mu_);
    report.period_id = period_id_;
    for (auto& [key, entry] : store_) {
        std::lock_guard fold_guard(*entry.fold_mu);
        if (entry.contribution_count == 0) continue;
        wire::ReportEntry e;
        e.snippet_hash = key.first;
        e.counter_id = key.second;
        e.contribution_count = entry.contribution_count;
        e.bin_count = static_cast<uint16_t>(entry.hist.bins.size());
        e.bins = paillier::serialize_bins(config_.pk, entry.hist);
        report.entries.push_back(std::move(e));
    }
    // std::map iteration is already (snippet_hash, counter_id) ordered;
    // keep the sort explicit since the encoding is normative.
    std::sort(report.entries.begin(), report.entries.end(), [](const auto& a, const auto& b) {
        if (a.snippet_hash != b.snippet_hash) return a.snippet_hash < b.snippet_hash;
        return a.counter_id < b.counter_id;
    });

    if (config_.windowed) store_.clear();
    ++period_id_;
    {
        std::lock_guard mlock(metrics_mu_);
        ++metrics_.reports_emitted;
    }
    return report;
}

ServerMetrics AggregationServer::metrics() const {
    std::lock_guard lock(metrics_mu_);
    return metrics_;
}

size_t AggregationServer::ash_count() const {
    std::lock_guard lock(store_mu_);
    return store_.size();
}

// --- TCP service ---------------------------------------------------------

namespace {

int make_listener(const std::string& host, uint16_t port) {
    int fd = socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error("socket() failed");
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = host == "0.0.0.0" ? INADDR_ANY : inet_addr(host.c_str());
    if (bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        close(fd);
        throw Error("bind failed on " + host + ":" + std::to_string(port));
    }
    if (listen(fd, 256) != 0) {
        close(fd);
        throw Error("listen failed");
    }
    return fd;
}

}  // namespace

void AggregationServer::connection_worker() {
    while (true) {
        int fd = -1;
        {
            std::unique_lock lock(queue_mu_);
            queue_cv_.wait(lock, [this] { return stopping_ || !conn_queue_.empty(); });
            if (stopping_ && conn_queue_.empty()) return;
            fd = conn_queue_.front();
            conn_queue_.pop_front();
        }
        try {
            auto frame = read_frame(fd);
            wire::DecodeError err;
            auto type = wire::frame_type(frame, err);
            if (!type) {
                std::lock_guard lock(metrics_mu_);
                ++metrics_.dropped[static_cast<size_t>(from_decode_error(err))];
            } else if (*type == wire::MsgType::Update) {
                handle_update_frame(frame);
                uint8_t ack = 0x06;
                write_all(fd, std::span<const uint8_t>(&ack, 1));
            } else if (*type == wire::MsgType::ReportRequest) {
                auto report = emit_report();
                auto reply = wire::encode_report(report);
                write_all(fd, reply);
            } else {
                std::lock_guard lock(metrics_mu_);
                ++metrics_.dropped[static_cast<size_t>(DropReason::UnknownType)];
            }
        } catch (const std::exception&) {
            std::lock_guard lock(metrics_mu_);
            ++metrics_.dropped[static_cast<size_t>(DropReason::Truncated)];
        }
        close(fd);
    }
}

void AggregationServer::serve(const std::string& host, uint16_t data_port, uint16_t metrics_port) {
    stopping_ = false;
    listen_fd_ = make_listener(host, data_port);
    metrics_fd_ = make_listener(host, metrics_port);

    for (size_t i = 0; i < config_.worker_threads; ++i)
        workers_.emplace_back([this] { connection_worker(); });

    std::thread metrics_thread([this] {
        while (!stopping_) {
            int fd = accept(metrics_fd_, nullptr, nullptr);
            if (fd < 0) break;
            auto text = metrics().to_text();
            try {
                write_all(fd, std::span<const uint8_t>(
                                  reinterpret_cast<const uint8_t*>(text.data()), text.size()));
            } catch (const std::exception&) {
            }
            close(fd);
        }
    });

    while (!stopping_) {
        int fd = accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (stopping_) break;
            continue;
        }
        std::unique_lock lock(queue_mu_);
        if (conn_queue_.size() >= config_.fold_queue_bound) {
            lock.unlock();
            close(fd);  // backpressure: drop, correctness is statistical
            std::lock_guard mlock(metrics_mu_);
            ++metrics_.dropped[static_cast<size_t>(DropReason::QueueFull)];
            continue;
        }
        conn_queue_.push_back(fd);
        lock.unlock();
        queue_cv_.notify_one();
    }

    queue_cv_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
    if (metrics_thread.joinable()) metrics_thread.join();
    if (metrics_fd_ >= 0) {
        close(metrics_fd_);
        metrics_fd_ = -1;
    }
}

void AggregationServer::stop() {
    stopping_ = true;
    queue_cv_.notify_all();
    if (listen_fd_ >= 0) {
        shutdown(listen_fd_, SHUT_RDWR);
        close(listen_fd_);
        listen_fd_ = -1;
    }
    if (metrics_fd_ >= 0) shutdown(metrics_fd_, SHUT_RDWR);
}

}  // namespace penrose
