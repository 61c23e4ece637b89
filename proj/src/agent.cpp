#include "penrose/agent.hpp"

#include <unistd.h>

#include <algorithm>

#include "penrose/config.hpp"
#include "penrose/wire.hpp"

namespace penrose {

namespace {
constexpr int64_t kNsPerSec = 1'000'000'000;
constexpr int kSendAttempts = 3;
constexpr uint64_t kWindowDigestSeed = 0x414E4E4355ull;
}  // namespace

AgentConfig AgentConfig::from_config(const KeyValueConfig& kv,
                                     const std::filesystem::path& base_dir) {
    AgentConfig c;
    c.sampling_interval = kv.get_uint("S", c.sampling_interval);
    c.reset_interval_s = kv.get_duration_s("O", c.reset_interval_s);
    c.aggregation_threshold = kv.get_uint("A", c.aggregation_threshold);
    c.timeout_s = kv.get_duration_s("T", 2 * c.reset_interval_s);
    c.snippet_length = kv.get_uint("L", c.snippet_length);
    c.load_factor = kv.get_double("load_factor", c.load_factor);
    c.app_salt = kv.get_string("app_salt", "");
    c.time_weight_scale_max_ns = kv.get_int("time_weight_scale_max_ns", c.time_weight_scale_max_ns);
    c.fleet_rotation = kv.get_string("rotation", "independent") == "fleet";
    std::string reg = kv.get_string("counter_registry", "");
    if (reg.empty()) throw ConfigError("agent config: counter_registry is required");
    std::filesystem::path reg_path(reg);
    if (reg_path.is_relative()) reg_path = base_dir / reg_path;
    c.registry = CounterRegistry::load(reg_path);
    c.validate();
    return c;
}

void AgentConfig::validate() const {
    if (sampling_interval == 0) throw ConfigError("S must be >= 1");
    if (reset_interval_s <= 0) throw ConfigError("O must be > 0");
    if (aggregation_threshold == 0) throw ConfigError("A must be >= 1");
    if (timeout_s <= 0) throw ConfigError("T must be > 0");
    if (snippet_length < 1) throw ConfigError("L must be >= 1");
    if (!(load_factor > 0.0) || load_factor > 1.0) throw ConfigError("load_factor must be in (0,1]");
    if (registry.counters.empty()) throw ConfigError("counter registry is empty");
}

Agent::Agent(AgentConfig config, paillier::PublicKey pk, Transport& transport, uint64_t seed)
    : config_(std::move(config)),
      pk_(std::move(pk)),
      transport_(transport),
      rng_(seed),
      slots_(config_.registry.rotation_slots()) {
    config_.validate();
    sampler_.interval = config_.sampling_interval;
    if (!config_.fleet_rotation) sampler_.rotation_pos = static_cast<size_t>(rng_.below(slots_.size()));
    epoch_start_ns_ = 0;
    reset_epoch();
    stats_.epochs = 1;  // epochs counts reset windows entered, not resets
}

uint16_t Agent::active_wire_id() const { return slots_[sampler_.rotation_pos].wire_id(); }

void Agent::reset_epoch() {
    sampler_.offset = rng_.below(sampler_.interval);
    sampler_.kernel_index = 0;
    if (config_.fleet_rotation) {
        auto epoch_index = static_cast<uint64_t>(epoch_start_ns_ / (config_.reset_interval_s * kNsPerSec));
        sampler_.rotation_pos = static_cast<size_t>(epoch_index % slots_.size());
    } else {
        sampler_.rotation_pos = (sampler_.rotation_pos + 1) % slots_.size();
    }
    double active_ns = config_.load_factor * static_cast<double>(config_.reset_interval_s) * kNsPerSec;
    active_until_ns_ = epoch_start_ns_ + static_cast<int64_t>(active_ns);
    ++stats_.epochs;
}

void Agent::run(KernelStream& stream) {
    while (auto rec = stream.next()) {
        on_kernel(*rec);
    }
    complete_window(true);
    fold_pending();
    flush_due(true);
}

void Agent::on_kernel(const KernelRecord& rec) {
    int64_t epoch_ns = config_.reset_interval_s * kNsPerSec;
    while (now_ns_ >= epoch_start_ns_ + epoch_ns) {
        epoch_start_ns_ += epoch_ns;
        reset_epoch();
    }

    ++stats_.kernels_seen;
    window_.push_back(salt_kernel_name(rec.name, config_.app_salt));
    if (window_.size() >= config_.snippet_length) complete_window(false);

    bool active = now_ns_ < active_until_ns_;
    if (sampler_.should_sample(sampler_.kernel_index, active)) {
        ++stats_.samples_taken;
        record_sample(rec);
    }
    ++sampler_.kernel_index;
    now_ns_ += rec.duration_ns;

    // Timeout flushes are checked lazily against the earliest deadline.
    if (now_ns_ >= next_deadline_ns_) flush_due(false);
}

void Agent::complete_window(bool app_end) {
    if (window_.empty()) return;
    if (app_end && window_.size() < config_.snippet_length) ++stats_.short_snippets;

    // Content digest over the salted names; repeated windows reuse the
    // announced identity without recomputing the signature.
    std::string joined;
    for (const auto& k : window_) {
        joined += k;
        joined.push_back('\x1F');
    }
    uint64_t digest = xxh64(joined, kWindowDigestSeed);
    auto cached = window_cache_.find(digest);
    if (cached != window_cache_.end()) {
        current_snippet_ = cached->second;
    } else {
        Snippet snippet{std::move(window_)};
        window_ = {};
        if (snippet.kernels.size() < kNgramSize) snippet = pad_to_window(std::move(snippet));
        MinHashSignature sig = minhash(snippet);
        SnippetHash sh = snippet_hash_of(sig);
        window_cache_.emplace(digest, sh);
        announced_sigs_.emplace(sh, sig);
        announce(sh, sig);
        current_snippet_ = sh;
    }
    window_.clear();
    fold_pending();
}

void Agent::announce(const SnippetHash& sh, const MinHashSignature& sig) {
    wire::UpdateMessage msg;
    msg.root_seed_id = kRootSeedIdV1;
    msg.counter_id = 0;
    msg.snippet_hash = sh;
    msg.minhash = sig;
    msg.key_fingerprint = pk_.fingerprint;
    msg.bin_count = 0;
    if (send_frame_with_retry(wire::encode_update(msg))) ++stats_.announces_sent;
}

void Agent::record_sample(const KernelRecord& rec) {
    const auto& slot = slots_[sampler_.rotation_pos];
    auto lookup = [&rec](uint16_t id) -> std::optional<double> {
        for (const auto& [cid, v] : rec.counters)
            if (cid == id) return v;
        return std::nullopt;
    };

    PendingSample s;
    s.wire_id = slot.wire_id();
    s.bin_count = slot.bin_count();
    s.t_ns = now_ns_;
    if (slot.pair) {
        auto va = lookup(slot.pair->counter_a.counter_id);
        auto vb = lookup(slot.pair->counter_b.counter_id);
        if (!va || !vb) return;  // counter not present in this trace record
        s.bin = quantize32(slot.pair->counter_a, *va) * kPairGridSide +
                quantize32(slot.pair->counter_b, *vb);
        s.weight = slot.pair->counter_a.mode == WeightMode::Time
                       ? time_weight(rec.duration_ns, config_.time_weight_scale_max_ns).value
                       : 1;
    } else {
        auto v = lookup(slot.single->counter_id);
        if (!v) return;
        s.bin = bin_index(*slot.single, *v);
        s.weight = slot.single->mode == WeightMode::Time
                       ? time_weight(rec.duration_ns, config_.time_weight_scale_max_ns).value
                       : 1;
    }

    if (!current_snippet_) {
        pre_window_buffer_.push_back(s);
        return;
    }
    fold_one(*current_snippet_, s);
}

void Agent::fold_pending() {
    if (!current_snippet_ || pre_window_buffer_.empty()) return;
    for (const auto& s : pre_window_buffer_) fold_one(*current_snippet_, s);
    pre_window_buffer_.clear();
}

void Agent::fold_one(const SnippetHash& sh, const PendingSample& s) {
    auto key = std::make_pair(sh, s.wire_id);
    auto it = accumulators_.find(key);
    if (it == accumulators_.end()) {
        AccumulatorEntry entry;
        entry.hist = PartialHistogram(s.bin_count);
        entry.hist.snippet_hash = sh;
        entry.hist.counter_id = s.wire_id;
        entry.first_sample_ns = s.t_ns;
        it = accumulators_.emplace(key, std::move(entry)).first;
        next_deadline_ns_ = std::min(next_deadline_ns_, s.t_ns + config_.timeout_s * kNsPerSec);
    }
    auto& entry = it->second;
    uint64_t& bin = entry.hist.bins.at(s.bin);
    if (bin > UINT64_MAX - s.weight) throw Error("histogram bin overflow");
    bin += s.weight;
    entry.hist.sample_count += 1;
    ++stats_.samples_folded;

    if (entry.hist.sample_count >= config_.aggregation_threshold) {
        auto moved = std::move(entry);
        accumulators_.erase(it);
        flush_entry(key, moved);
    }
}

void Agent::flush_entry(const std::pair<SnippetHash, uint16_t>& key, AccumulatorEntry& entry) {
    auto sig_it = announced_sigs_.find(key.first);
    if (sig_it == announced_sigs_.end()) return;  // unreachable: folds require an announced window

    auto enc = paillier::encrypt_bins(pk_, key.first, key.second, entry.hist.bins, secure_rng_);

    wire::UpdateMessage msg;
    msg.root_seed_id = kRootSeedIdV1;
    msg.counter_id = key.second;
    msg.snippet_hash = key.first;
    msg.minhash = sig_it->second;
    msg.key_fingerprint = pk_.fingerprint;
    msg.bin_count = static_cast<uint16_t>(entry.hist.bins.size());
    msg.ct_width = static_cast<uint32_t>(pk_.ciphertext_width());
    msg.sample_count = entry.hist.sample_count;
    msg.bins = paillier::serialize_bins(pk_, enc);
    if (send_frame_with_retry(wire::encode_update(msg))) {
        ++stats_.updates_sent;
        stats_.update_virtual_times_ns.push_back(now_ns_);
    }
}

void Agent::flush_due(bool force_all) {
    int64_t timeout_ns = config_.timeout_s * kNsPerSec;
    for (auto it = accumulators_.begin(); it != accumulators_.end();) {
        if (force_all || now_ns_ - it->second.first_sample_ns >= timeout_ns) {
            auto key = it->first;
            auto entry = std::move(it->second);
            it = accumulators_.erase(it);
            flush_entry(key, entry);
        } else {
            ++it;
        }
    }
    next_deadline_ns_ = INT64_MAX;
    for (const auto& [key, entry] : accumulators_)
        next_deadline_ns_ = std::min(next_deadline_ns_, entry.first_sample_ns + timeout_ns);
}

bool Agent::send_frame_with_retry(const std::vector<uint8_t>& frame) {
    for (int attempt = 0; attempt < kSendAttempts; ++attempt) {
        try {
            transport_.send_frame(frame);
            return true;
        } catch (const Error&) {
            if (attempt + 1 == kSendAttempts) break;
            usleep(static_cast<useconds_t>(1000 + rng_.below(4000)));
        }
    }
    // Sample loss is tolerated; coverage is statistical.
    ++stats_.send_failures;
    return false;
}

}  // namespace penrose
