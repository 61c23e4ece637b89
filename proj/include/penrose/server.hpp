#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "penrose/paillier.hpp"
#include "penrose/snippet.hpp"
#include "penrose/wire.hpp"

namespace penrose {

struct ServerConfig {
    paillier::PublicKey pk;
    std::filesystem::path state_dir;
    int64_t report_interval_s = 86400;  // delta
    bool windowed = true;               // reset the store at every report boundary
    double tau = kDefaultJaccardThreshold;
    size_t fold_queue_bound = 1024;     // beyond this, new frames are dropped
    size_t worker_threads = 4;
    bool rerandomize_adopted = true;
};

enum class DropReason : uint8_t {
    Truncated,
    BadMagic,
    BadVersion,
    UnknownType,
    BadCrc,
    Malformed,
    RootSeedMismatch,
    IntegrityMismatch,   // snippet hash does not match the signature
    KeyMismatch,
    DimensionMismatch,
    QueueFull,
};
inline constexpr size_t kDropReasonCount = 11;
std::string_view drop_reason_name(DropReason r);

struct ServerMetrics {
    uint64_t accepted_updates = 0;
    uint64_t accepted_announces = 0;
    uint64_t dropped[kDropReasonCount] = {};
    uint64_t dispositions[3] = {};  // exact, matched, new
    uint64_t reports_emitted = 0;
    double fold_seconds = 0;  // cumulative time spent in homomorphic folds
    std::string to_text() const;
};

struct AcceptResult {
    bool accepted = false;
    bool announce_only = false;
    std::optional<DropReason> reason;
    std::optional<Disposition> disposition;
    SnippetHash canonical{};
};

/// The untrusted aggregation point. Holds only the public key: it can
/// fold and re-randomize ciphertexts but has no decryption path.
class AggregationServer {
public:
    explicit AggregationServer(ServerConfig config);

    // Decode -> classify -> route -> fold. Hostile input never throws.
    AcceptResult handle_update_frame(std::span<const uint8_t> frame);

    // Snapshot of every ASH with contributions this period; in windowed
    // mode the store resets and the period id advances.
    wire::ReportMessage emit_report();

    ServerMetrics metrics() const;
    uint64_t current_period() const { return period_id_; }
    size_t ash_count() const;

    // Blocking TCP service: one frame per connection on `data`, report
    // requests answered on the same port; plain-text metrics dumped to
    // any connection on `metrics_port`. stop() unblocks serve().
    void serve(const std::string& host, uint16_t data_port, uint16_t metrics_port);
    void stop();

private:
    struct AshEntry {
        paillier::EncryptedHistogram hist;
        uint64_t contribution_count = 0;
        int64_t last_update_unix = 0;
        std::unique_ptr<std::mutex> fold_mu = std::make_unique<std::mutex>();
    };

    AcceptResult ingest(const wire::UpdateMessage& msg);
    void connection_worker();

    ServerConfig config_;
    SnippetTables tables_;
    mutable std::mutex tables_mu_;

    // (canonical, counter) -> ASH. store_mu_ guards the map shape; folds
    // into one entry serialize on the entry mutex; report snapshots hold
    // store_mu_ for the duration, quiescing new folds.
    std::map<std::pair<SnippetHash, uint16_t>, AshEntry> store_;
    mutable std::mutex store_mu_;
    uint64_t period_id_ = 1;

    mutable std::mutex metrics_mu_;
    ServerMetrics metrics_;

    // serve() machinery
    std::atomic<bool> stopping_{false};
    int listen_fd_ = -1;
    int metrics_fd_ = -1;
    std::vector<std::thread> workers_;
    std::deque<int> conn_queue_;
    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
};

}  // namespace penrose
