#include "penrose/sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include "penrose/histogram.hpp"
#include "penrose/wire.hpp"

namespace penrose::sim {

namespace {

constexpr int64_t kNsPerSec = 1'000'000'000;

uint64_t mix(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b + 0x9E3779B97F4A7C15ull)); }
uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return mix(mix(a, b), c); }

double gauss(Rng& rng) {
    // Box-Muller; u in (0,1] to keep the log finite.
    double u = 1.0 - rng.next_double();
    double v = rng.next_double();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

}  // namespace

Corpus generate_corpus(uint32_t app_count, uint64_t seed) {
    Corpus corpus;
    corpus.apps.reserve(app_count);
    const double count_range = std::log(static_cast<double>(kMaxKernels) / kMinKernels);
    for (uint32_t i = 0; i < app_count; ++i) {
        SeededRng rng(mix(seed, 0xA2905EEDull, i));
        AppSpec app;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "app%05u", i);
        app.name = buf;
        double u = rng.next_double();
        double k = kMinKernels * std::exp(std::pow(u, kKernelCountShape) * count_range);
        app.kernel_count = std::clamp<uint32_t>(static_cast<uint32_t>(std::lround(k)),
                                                kMinKernels, kMaxKernels);
        // Distinct-kernel repertoires are nearly flat across apps: a long
        // run mostly repeats kernels, while even a short-batch app cycles
        // through a few hundred distinct kernels over its lifetime.
        app.static_kernel_count = static_cast<uint32_t>(
            std::lround(240.0 + 24.0 * std::log(double(app.kernel_count) / kMinKernels)));
        // Per-app mean latency clusters near the corpus mean; per-kernel
        // durations inside an app spread much wider than the app means.
        double g1 = 1.0 - rng.next_double();
        double g2 = rng.next_double();
        double gauss_draw = std::sqrt(-2.0 * std::log(g1)) * std::cos(2.0 * M_PI * g2);
        double lat_us = std::exp(3.340 + 0.35 * gauss_draw);  // mean 30us
        app.mean_kernel_latency_ns = std::clamp<int64_t>(std::llround(lat_us * 1000.0), 3000, 521000);
        app.counter_mean_fraction = 0.10 + 0.80 * rng.next_double();
        app.counter_jitter = 0.02 + 0.05 * rng.next_double();
        app.kernel_seed = rng.next_u64();
        std::string id = "penrose-sim-app\x1F" + app.name + "\x1F" + std::to_string(seed);
        app.canonical = sha256(id);
        corpus.apps.push_back(std::move(app));
    }
    return corpus;
}

uint64_t behavioral_cycle(const AppSpec& app) {
    // The stream repeats over the app's behavioral cycle: at least one
    // run, and long enough to visit every distinct kernel.
    return std::max<uint64_t>(app.kernel_count,
                              app.static_kernel_count ? app.static_kernel_count : 1);
}

uint32_t static_kernel_at(const AppSpec& app, uint64_t position) {
    uint32_t n = app.static_kernel_count ? app.static_kernel_count : app.kernel_count;
    uint64_t p = position % behavioral_cycle(app);
    // Positions below n enumerate every static kernel once, so each one
    // occurs in the dynamic stream; the remainder hash-distribute.
    if (p < n) return static_cast<uint32_t>(p);
    return static_cast<uint32_t>(splitmix64(app.kernel_seed + p) % n);
}

std::string kernel_name_at(const AppSpec& app, uint64_t position) {
    uint64_t id =
        splitmix64(app.kernel_seed ^ (0x9E3779B97F4A7C15ull * (1 + static_kernel_at(app, position)))) %
        kKernelNamePool;
    return "k" + std::to_string(id);
}

double analytic_coverage(double sampling_interval, double runs) {
    if (sampling_interval < 1.0) throw Error("sampling interval must be >= 1");
    if (runs <= 0.0) return 0.0;
    return 1.0 - std::pow(1.0 - 1.0 / sampling_interval, runs);
}

std::vector<double> popularity_weights(const Corpus& corpus, Popularity pop, uint64_t seed) {
    size_t n = corpus.apps.size();
    std::vector<double> weights(n, 1.0);
    if (pop == Popularity::Uniform || n == 0) return weights;

    double mean = static_cast<double>(n) / 2.0;
    double sd = static_cast<double>(n) / 6.0;
    double floor_w = std::max(1.0, mean / 200.0);

    SeededRng rng(mix(seed, 0x707ABCDEull));
    std::vector<double> draws(n);
    for (auto& d : draws) d = std::max(floor_w, mean + sd * gauss(rng));
    std::sort(draws.begin(), draws.end(), std::greater<>());

    // size_rank[r] = index of the r-th smallest app by kernel count
    std::vector<uint32_t> size_rank(n);
    for (uint32_t i = 0; i < n; ++i) size_rank[i] = i;
    std::stable_sort(size_rank.begin(), size_rank.end(), [&](uint32_t a, uint32_t b) {
        return corpus.apps[a].kernel_count < corpus.apps[b].kernel_count;
    });

    for (size_t r = 0; r < n; ++r) {
        uint32_t app = size_rank[r];
        weights[app] = pop == Popularity::NormalSmall ? draws[r] : draws[n - 1 - r];
    }
    return weights;
}

int64_t LatencyModel::draw_ns(Rng& rng) const {
    if (!enabled) return 0;
    static constexpr struct {
        double q;
        double seconds;
    } anchors[] = {{0.0, 0.05}, {0.70, 2.0}, {0.90, 8.0}, {0.95, 11.0}, {1.0, 30.0}};
    double q = rng.next_double();
    for (size_t i = 1; i < std::size(anchors); ++i) {
        if (q <= anchors[i].q) {
            double t = (q - anchors[i - 1].q) / (anchors[i].q - anchors[i - 1].q);
            double s = anchors[i - 1].seconds + t * (anchors[i].seconds - anchors[i - 1].seconds);
            return static_cast<int64_t>(s * kNsPerSec);
        }
    }
    return static_cast<int64_t>(30.0 * kNsPerSec);
}

SimConfig SimConfig::from_config(const KeyValueConfig& kv) {
    SimConfig c;
    c.gpus = kv.get_uint("G", c.gpus);
    c.app_count = static_cast<uint32_t>(kv.get_uint("apps", c.app_count));
    std::string pop = kv.get_string("popularity", "uniform");
    if (pop == "uniform") c.popularity = Popularity::Uniform;
    else if (pop == "normal_small") c.popularity = Popularity::NormalSmall;
    else if (pop == "normal_large") c.popularity = Popularity::NormalLarge;
    else throw ConfigError("popularity must be uniform|normal_small|normal_large");
    c.sampling_interval = kv.get_uint("S", c.sampling_interval);
    c.reset_interval_s = kv.get_duration_s("O", c.reset_interval_s);
    c.aggregation_threshold = kv.get_uint("A", c.aggregation_threshold);
    c.timeout_s = kv.get_duration_s("T", c.timeout_s);
    c.snippet_length = kv.get_uint("L", c.snippet_length);
    c.report_interval_s = kv.get_duration_s("delta", c.report_interval_s);
    c.load_factor = kv.get_double("load_factor", c.load_factor);
    c.seed = kv.get_uint("seed", c.seed);
    c.horizon_s = kv.get_duration_s("horizon", c.horizon_s);
    c.latency_model = kv.get_string("latency_model", "on") != "off";
    c.drop_fraction = kv.get_double("drop_fraction", c.drop_fraction);
    c.track_coverage = kv.get_string("track_coverage", "on") != "off";
    c.stop_when_converged = kv.get_string("stop_when_converged", "on") != "off";
    c.coverage_target = kv.get_double("coverage_target", c.coverage_target);
    c.percentile = kv.get_double("percentile", c.percentile);
    c.fidelity = kv.get_string("fidelity", "message") == "kernel" ? Fidelity::Kernel : Fidelity::Message;
    c.validate();
    return c;
}

void SimConfig::validate() const {
    if (gpus == 0 || app_count == 0) throw ConfigError("sim: G and apps must be >= 1");
    if (sampling_interval == 0 || aggregation_threshold == 0) throw ConfigError("sim: S and A must be >= 1");
    if (reset_interval_s <= 0 || timeout_s <= 0 || report_interval_s <= 0 || horizon_s <= 0)
        throw ConfigError("sim: intervals must be > 0");
    if (!(load_factor > 0.0) || load_factor > 1.0) throw ConfigError("sim: load_factor in (0,1]");
    if (!(coverage_target > 0.0) || coverage_target > 1.0) throw ConfigError("sim: coverage_target in (0,1]");
    if (!(percentile > 0.0) || percentile > 1.0) throw ConfigError("sim: percentile in (0,1]");
    if (drop_fraction < 0.0 || drop_fraction >= 1.0) throw ConfigError("sim: drop_fraction in [0,1)");
}

namespace {

enum class EventKind : uint8_t { EpochStart, FlushTimer, Arrival, Trajectory, PeriodBoundary };

struct Event {
    int64_t t = 0;
    uint64_t seq = 0;
    EventKind kind = EventKind::EpochStart;
    uint32_t gpu = 0;
    uint32_t app = 0;
    uint64_t count = 0;
    std::vector<uint32_t> positions;
    std::vector<uint8_t> frame;  // crypto-mode payload
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        if (a.t != b.t) return a.t > b.t;
        return a.seq > b.seq;
    }
};

struct PendEntry {
    uint32_t app = 0;
    uint64_t count = 0;
    int64_t first_ts = 0;
    bool has_timer = false;  // at most one live FlushTimer per entry
    std::vector<uint32_t> positions;
};

struct GpuState {
    std::vector<PendEntry> entries;      // few per GPU
    std::vector<std::pair<uint32_t, uint32_t>> phases;
    uint64_t epoch_index = 0;
    uint64_t msg_counter = 0;

    PendEntry& entry_for(uint32_t app) {
        for (auto& e : entries)
            if (e.app == app) return e;
        entries.push_back(PendEntry{app, 0, 0, false, {}});
        return entries.back();
    }
    uint32_t& phase_for(uint32_t app) {
        for (auto& p : phases)
            if (p.first == app) return p.second;
        phases.emplace_back(app, 0);
        return phases.back().second;
    }
};

struct Engine {
    const SimConfig& cfg;
    const Corpus& corpus;
    CryptoHooks* hooks;
    std::vector<double> cum_weights;
    LatencyModel latency;
    std::priority_queue<Event, std::vector<Event>, EventAfter> queue;
    uint64_t seq = 0;
    std::vector<GpuState> gpus;
    SimReport report;

    // coverage state
    std::vector<std::vector<bool>> covered;
    std::vector<uint64_t> covered_count;
    std::vector<int64_t> t_target;
    uint32_t apps_converged = 0;
    bool halted = false;

    std::map<uint32_t, std::pair<SnippetHash, MinHashSignature>> app_identity;

    explicit Engine(const SimConfig& c, const Corpus& corp, CryptoHooks* h)
        : cfg(c), corpus(corp), hooks(h) {
        auto weights = popularity_weights(corpus, cfg.popularity, cfg.seed);
        cum_weights.resize(weights.size());
        double acc = 0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            cum_weights[i] = acc;
        }
        latency.enabled = cfg.latency_model;
        gpus.resize(cfg.gpus);
        size_t n = corpus.apps.size();
        covered_count.assign(n, 0);
        t_target.assign(n, -1);
        if (cfg.track_coverage) {
            covered.resize(n);
            for (size_t i = 0; i < n; ++i)
                covered[i].assign(corpus.apps[i].static_kernel_count
                                      ? corpus.apps[i].static_kernel_count
                                      : corpus.apps[i].kernel_count,
                                  false);
        }
    }

    uint32_t coverage_denominator(size_t app) const {
        return corpus.apps[app].static_kernel_count ? corpus.apps[app].static_kernel_count
                                                    : corpus.apps[app].kernel_count;
    }

    void push(Event ev) {
        ev.seq = seq++;
        queue.push(std::move(ev));
    }

    uint32_t draw_app(Rng& rng) const {
        double total = cum_weights.back();
        double x = rng.next_double() * total;
        auto it = std::lower_bound(cum_weights.begin(), cum_weights.end(), x);
        size_t idx = static_cast<size_t>(it - cum_weights.begin());
        return static_cast<uint32_t>(std::min(idx, cum_weights.size() - 1));
    }

    double mean_coverage() const {
        if (covered_count.empty()) return 0;
        double sum = 0;
        for (size_t i = 0; i < covered_count.size(); ++i)
            sum += static_cast<double>(covered_count[i]) / coverage_denominator(i);
        return sum / static_cast<double>(covered_count.size());
    }

    void ensure_identity(uint32_t app_idx) {
        if (!hooks || app_identity.count(app_idx)) return;
        const auto& app = corpus.apps[app_idx];
        uint32_t window_len =
            static_cast<uint32_t>(std::min<uint64_t>(cfg.snippet_length,
                                                     std::max<uint32_t>(app.kernel_count, 8)));
        window_len = std::min<uint32_t>(window_len, 2000);  // cost cap, identity is stable anyway
        Snippet snippet;
        snippet.kernels.reserve(window_len);
        for (uint32_t p = 0; p < window_len; ++p)
            snippet.kernels.push_back(kernel_name_at(app, p % app.kernel_count));
        if (snippet.kernels.size() < kNgramSize) snippet = pad_to_window(std::move(snippet));
        MinHashSignature sig = minhash(snippet);
        SnippetHash sh = snippet_hash_of(sig);
        app_identity.emplace(app_idx, std::make_pair(sh, sig));

        wire::UpdateMessage announce;
        announce.snippet_hash = sh;
        announce.minhash = sig;
        announce.key_fingerprint = hooks->pk->fingerprint;
        hooks->server->handle_update_frame(wire::encode_update(announce));
        ++report.announces;
    }

    std::vector<uint8_t> make_crypto_frame(uint32_t app_idx, uint64_t count, Rng& rng) {
        ensure_identity(app_idx);
        const auto& app = corpus.apps[app_idx];
        CounterSpec spec;
        spec.counter_id = hooks->counter_id;
        spec.name = "sim";
        spec.peak_value = hooks->counter_peak;
        PartialHistogram hist;
        hist.counter_id = spec.counter_id;
        auto& [sh, sig] = app_identity.at(app_idx);
        hist.snippet_hash = sh;
        for (uint64_t i = 0; i < count; ++i) {
            double value = app.counter_mean_fraction * spec.peak_value *
                           (1.0 + app.counter_jitter * gauss(rng));
            value = std::clamp(value, 0.0, spec.peak_value);
            fold_sample(hist, spec, value, 1);
        }
        auto& shadow = hooks->shadow_sums[app_idx];
        if (shadow.empty()) shadow.assign(hist.bins.size(), 0);
        for (size_t i = 0; i < hist.bins.size(); ++i) shadow[i] += hist.bins[i];

        auto enc = paillier::encrypt_bins(*hooks->pk, sh, spec.counter_id, hist.bins, rng);
        wire::UpdateMessage msg;
        msg.counter_id = spec.counter_id;
        msg.snippet_hash = sh;
        msg.minhash = sig;
        msg.key_fingerprint = hooks->pk->fingerprint;
        msg.bin_count = static_cast<uint16_t>(hist.bins.size());
        msg.ct_width = static_cast<uint32_t>(hooks->pk->ciphertext_width());
        msg.sample_count = hist.sample_count;
        msg.bins = paillier::serialize_bins(*hooks->pk, enc);
        return wire::encode_update(msg);
    }

    void flush(uint32_t gpu, PendEntry& entry, int64_t t_emit) {
        if (entry.count == 0) return;
        auto& gs = gpus[gpu];
        SeededRng rng(mix(cfg.seed, 0xF1A5Cull ^ gpu, gs.msg_counter++));
        ++report.messages_emitted;

        Event arrival;
        arrival.kind = EventKind::Arrival;
        arrival.app = entry.app;
        arrival.count = entry.count;
        arrival.positions = std::move(entry.positions);
        if (hooks) arrival.frame = make_crypto_frame(entry.app, entry.count, rng);

        bool dropped = cfg.drop_fraction > 0.0 && rng.next_double() < cfg.drop_fraction;
        if (dropped) {
            ++report.messages_dropped;
        } else {
            arrival.t = t_emit + latency.draw_ns(rng);
            push(std::move(arrival));
        }
        entry.count = 0;
        entry.positions = {};
        entry.first_ts = 0;
    }

    void arm_timer(uint32_t gpu, PendEntry& entry) {
        if (entry.has_timer) return;
        entry.has_timer = true;
        Event timer;
        timer.kind = EventKind::FlushTimer;
        timer.t = entry.first_ts + cfg.timeout_s * kNsPerSec;
        timer.gpu = gpu;
        timer.app = entry.app;
        push(std::move(timer));
    }

    void process_epoch(uint32_t gpu, int64_t t0) {
        auto& gs = gpus[gpu];
        uint64_t epoch = gs.epoch_index++;
        SeededRng rng(mix(cfg.seed, 0xE90C4Aull ^ gpu, epoch));
        uint32_t app_idx = draw_app(rng);
        const auto& app = corpus.apps[app_idx];
        uint64_t S = cfg.sampling_interval;
        uint64_t R = rng.below(S);
        int64_t lat = app.mean_kernel_latency_ns;
        int64_t active_ns = static_cast<int64_t>(cfg.load_factor *
                                                 static_cast<double>(cfg.reset_interval_s) * kNsPerSec);
        uint64_t executed = static_cast<uint64_t>(active_ns / lat);
        uint64_t K = behavioral_cycle(app);
        uint32_t& phase = gs.phase_for(app_idx);

        if (R < executed) {
            uint64_t n_samples = (executed - 1 - R) / S + 1;
            int64_t stride = static_cast<int64_t>(S) * lat;
            int64_t t_first = t0 + static_cast<int64_t>(R + 1) * lat;
            int64_t timeout_ns = cfg.timeout_s * kNsPerSec;
            PendEntry& entry = gs.entry_for(app_idx);

            // Per-kernel latency variance accumulates into timing drift
            // between consecutive samples, which decouples the sampling
            // stride from the app's cycle length. Modeled as a seeded
            // random walk in position space.
            const int64_t drift_step = static_cast<int64_t>(S / 25) + 1;
            int64_t drift = 0;
            uint64_t drift_seed = mix(cfg.seed, 0xD21F7ull ^ gpu, epoch);

            uint64_t j = 0;
            while (j < n_samples) {
                int64_t tj = t_first + static_cast<int64_t>(j) * stride;
                if (entry.count > 0 && entry.first_ts + timeout_ns <= tj) {
                    flush(gpu, entry, entry.first_ts + timeout_ns);
                    continue;
                }
                if (entry.count == 0) {
                    entry.first_ts = tj;
                    arm_timer(gpu, entry);
                }
                int64_t deadline = entry.first_ts + timeout_ns;

                uint64_t take = std::min<uint64_t>(n_samples - j, cfg.aggregation_threshold - entry.count);
                // samples j..j+k-1 land strictly before the deadline
                uint64_t before_deadline =
                    deadline <= tj ? 0 : static_cast<uint64_t>((deadline - tj - 1) / stride) + 1;
                bool capped_by_deadline = before_deadline < take;
                take = std::min(take, before_deadline);
                if (take == 0) take = 1;  // deadline > tj always holds here

                if (cfg.fidelity == Fidelity::Kernel) take = 1;  // per-sample stepping
                if (cfg.track_coverage) {
                    for (uint64_t k = 0; k < take; ++k) {
                        uint64_t step = splitmix64(drift_seed + j + k);
                        drift += static_cast<int64_t>(step % (2 * drift_step + 1)) - drift_step;
                        int64_t raw = static_cast<int64_t>(phase + R + (j + k) * S) + drift;
                        int64_t kc = static_cast<int64_t>(K);
                        uint64_t pos = static_cast<uint64_t>(((raw % kc) + kc) % kc);
                        entry.positions.push_back(static_kernel_at(app, pos));
                    }
                }
                entry.count += take;
                j += take;

                if (entry.count >= cfg.aggregation_threshold) {
                    flush(gpu, entry, t_first + static_cast<int64_t>(j - 1) * stride);
                } else if (capped_by_deadline && cfg.fidelity == Fidelity::Message && j < n_samples) {
                    flush(gpu, entry, deadline);
                }
            }
        }
        phase = static_cast<uint32_t>((phase + executed) % K);
        (void)0;

        int64_t next = t0 + cfg.reset_interval_s * kNsPerSec;
        if (next < cfg.horizon_s * kNsPerSec && !halted) {
            Event ev;
            ev.kind = EventKind::EpochStart;
            ev.t = next;
            ev.gpu = gpu;
            push(std::move(ev));
        }
    }

    void process_arrival(const Event& ev) {
        ++report.messages_arrived;
        size_t hour = static_cast<size_t>(ev.t / (3600 * kNsPerSec));
        if (report.hourly_arrivals.size() <= hour) report.hourly_arrivals.resize(hour + 1, 0);
        ++report.hourly_arrivals[hour];

        if (hooks && !ev.frame.empty()) hooks->server->handle_update_frame(ev.frame);

        if (!cfg.track_coverage) return;
        auto& bits = covered[ev.app];
        uint64_t& count = covered_count[ev.app];
        for (uint32_t p : ev.positions) {
            if (!bits[p]) {
                bits[p] = true;
                ++count;
            }
        }
        if (t_target[ev.app] < 0) {
            double frac = static_cast<double>(count) / coverage_denominator(ev.app);
            if (frac >= cfg.coverage_target) {
                t_target[ev.app] = (ev.t + kNsPerSec - 1) / kNsPerSec;
                ++apps_converged;
                if (cfg.stop_when_converged && apps_converged == corpus.apps.size()) halted = true;
            }
        }
    }

    SimReport run() {
        for (uint32_t g = 0; g < cfg.gpus; ++g) {
            Event ev;
            ev.kind = EventKind::EpochStart;
            ev.t = 0;
            ev.gpu = g;
            push(std::move(ev));
        }
        if (cfg.track_coverage) {
            Event traj;
            traj.kind = EventKind::Trajectory;
            traj.t = 3600 * kNsPerSec;
            push(std::move(traj));
            Event period;
            period.kind = EventKind::PeriodBoundary;
            period.t = cfg.report_interval_s * kNsPerSec;
            push(std::move(period));
        }

        while (!queue.empty()) {
            Event ev = std::move(const_cast<Event&>(queue.top()));
            queue.pop();
            switch (ev.kind) {
                case EventKind::EpochStart:
                    if (!halted) process_epoch(ev.gpu, ev.t);
                    break;
                case EventKind::FlushTimer: {
                    auto& gs = gpus[ev.gpu];
                    int64_t timeout_ns = cfg.timeout_s * kNsPerSec;
                    for (auto& entry : gs.entries) {
                        if (entry.app != ev.app) continue;
                        entry.has_timer = false;
                        if (entry.count > 0) {
                            if (ev.t - entry.first_ts >= timeout_ns) {
                                flush(ev.gpu, entry, ev.t);
                            } else {
                                arm_timer(ev.gpu, entry);  // entry was refilled; rearm
                            }
                        }
                        break;
                    }
                    break;
                }
                case EventKind::Arrival:
                    process_arrival(ev);
                    break;
                case EventKind::Trajectory: {
                    report.trajectory.push_back(TrajectoryPoint{ev.t / kNsPerSec, mean_coverage()});
                    int64_t next = ev.t + 3600 * kNsPerSec;
                    if (next <= cfg.horizon_s * kNsPerSec && !halted) {
                        Event n;
                        n.kind = EventKind::Trajectory;
                        n.t = next;
                        push(std::move(n));
                    }
                    break;
                }
                case EventKind::PeriodBoundary: {
                    std::vector<double> row(corpus.apps.size());
                    for (size_t i = 0; i < row.size(); ++i)
                        row[i] = static_cast<double>(covered_count[i]) / coverage_denominator(i);
                    report.period_coverage.push_back(std::move(row));
                    int64_t next = ev.t + cfg.report_interval_s * kNsPerSec;
                    if (next <= cfg.horizon_s * kNsPerSec && !halted) {
                        Event n;
                        n.kind = EventKind::PeriodBoundary;
                        n.t = next;
                        push(std::move(n));
                    }
                    break;
                }
            }
        }

        report.final_coverage.resize(corpus.apps.size());
        for (size_t i = 0; i < corpus.apps.size(); ++i)
            report.final_coverage[i] =
                static_cast<double>(covered_count[i]) / coverage_denominator(i);
        report.covered_positions = covered_count;
        report.time_to_target_s.assign(t_target.begin(), t_target.end());

        // time at which the configured share of apps reached the target
        std::vector<int64_t> reached;
        for (int64_t t : t_target)
            if (t >= 0) reached.push_back(t);
        size_t need = static_cast<size_t>(
            std::ceil(cfg.percentile * static_cast<double>(corpus.apps.size())));
        if (need > 0 && reached.size() >= need) {
            std::nth_element(reached.begin(), reached.begin() + (need - 1), reached.end());
            report.percentile_time_s = reached[need - 1];
        }

        // steady ingress over the second half of the horizon
        size_t h0 = static_cast<size_t>(cfg.horizon_s / 2 / 3600);
        size_t h1 = static_cast<size_t>(cfg.horizon_s / 3600);
        uint64_t arrived = 0;
        size_t hours = 0;
        for (size_t h = h0; h < h1 && h < report.hourly_arrivals.size(); ++h) {
            arrived += report.hourly_arrivals[h];
            ++hours;
        }
        if (hours > 0) report.steady_ingress_per_s = static_cast<double>(arrived) / (3600.0 * hours);
        return report;
    }
};

}  // namespace

SimReport run_sim(const SimConfig& config, const Corpus& corpus, CryptoHooks* hooks) {
    config.validate();
    if (corpus.apps.empty()) throw ConfigError("sim: empty corpus");

    // Up-front overflow guard: the fastest possible message cadence is a
    // full threshold accumulated at the smallest kernel latency.
    int64_t min_lat = INT64_MAX;
    for (const auto& app : corpus.apps) min_lat = std::min(min_lat, app.mean_kernel_latency_ns);
    paillier::AggregationBoundParams bound;
    bound.gpus = config.gpus;
    bound.aggregation_threshold = config.aggregation_threshold;
    bound.report_period_s = config.report_interval_s;
    bound.min_message_period_s = std::max<int64_t>(
        1, static_cast<int64_t>(config.aggregation_threshold) *
               static_cast<int64_t>(config.sampling_interval) * min_lat / kNsPerSec);
    bound.max_weight = kMaxTimeWeight;
    if (!paillier::aggregation_bound_ok(bound))
        throw ConfigError("sim: configuration can overflow a 64-bit aggregated bin");

    Engine engine(config, corpus, hooks);
    return engine.run();
}

SimReport run_sim(const SimConfig& config) {
    Corpus corpus = generate_corpus(config.app_count, config.seed);
    return run_sim(config, corpus);
}

std::string SimReport::serialize() const {
    std::ostringstream out;
    out.precision(9);
    out << "messages_emitted," << messages_emitted << "\n";
    out << "messages_arrived," << messages_arrived << "\n";
    out << "messages_dropped," << messages_dropped << "\n";
    out << "announces," << announces << "\n";
    out << "percentile_time_s," << percentile_time_s << "\n";
    out << "steady_ingress_per_s," << steady_ingress_per_s << "\n";
    out << "trajectory\n";
    for (const auto& p : trajectory) out << p.t_s << "," << p.mean_coverage << "\n";
    out << "apps\n";
    for (size_t i = 0; i < final_coverage.size(); ++i)
        out << i << "," << final_coverage[i] << "," << time_to_target_s[i] << "\n";
    out << "hourly_arrivals\n";
    for (size_t h = 0; h < hourly_arrivals.size(); ++h) out << h << "," << hourly_arrivals[h] << "\n";
    out << "periods\n";
    for (size_t p = 0; p < period_coverage.size(); ++p) {
        out << p;
        for (double c : period_coverage[p]) out << "," << c;
        out << "\n";
    }
    return out.str();
}

std::vector<SweepRow> sweep(const std::vector<SweepCell>& cells, const Corpus* shared_corpus) {
    std::vector<SweepRow> rows;
    for (const auto& cell : cells) {
        SimReport rep = shared_corpus ? run_sim(cell.config, *shared_corpus) : run_sim(cell.config);
        SweepRow row;
        row.name = cell.name;
        row.percentile_time_s = rep.percentile_time_s;
        row.messages = rep.messages_arrived;
        double mean = 0;
        for (double c : rep.final_coverage) mean += c;
        row.final_mean_coverage = rep.final_coverage.empty() ? 0 : mean / rep.final_coverage.size();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out.precision(9);
    out << "cell,time_to_percentile_s,messages_arrived,final_mean_coverage\n";
    for (const auto& r : rows)
        out << r.name << "," << r.percentile_time_s << "," << r.messages << ","
            << r.final_mean_coverage << "\n";
    return out.str();
}

AppRegistry registry_of(const Corpus& corpus) {
    AppRegistry reg;
    for (const auto& app : corpus.apps)
        reg.apps[app.canonical] = AppRegistry::App{
            app.name, app.static_kernel_count ? app.static_kernel_count : app.kernel_count};
    return reg;
}

std::map<SnippetHash, uint64_t> covered_by_canonical(const Corpus& corpus, const SimReport& report) {
    std::map<SnippetHash, uint64_t> out;
    for (size_t i = 0; i < corpus.apps.size() && i < report.covered_positions.size(); ++i)
        out[corpus.apps[i].canonical] = report.covered_positions[i];
    return out;
}

}  // namespace penrose::sim
