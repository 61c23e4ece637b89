#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/socket.h>

#include <algorithm>
#include <filesystem>
#include <future>
#include <thread>

#include "penrose/designer.hpp"
#include "penrose/server.hpp"
#include "penrose/transport.hpp"

using namespace penrose;

namespace {

const paillier::KeyPair& test_key() {
    static paillier::KeyPair kp = [] {
        SecureRng rng;
        return paillier::keygen(1024, rng);
    }();
    return kp;
}

ServerConfig server_config() {
    ServerConfig c;
    c.pk = test_key().pk;
    c.worker_threads = 4;
    return c;
}

struct TestSnippet {
    SnippetHash hash{};
    MinHashSignature sig;
};

TestSnippet make_snippet(const std::string& tag, int kernels = 40) {
    Snippet s;
    for (int i = 0; i < kernels; ++i) s.kernels.push_back(tag + "_" + std::to_string(i));
    TestSnippet out;
    out.sig = minhash(s);
    out.hash = snippet_hash_of(out.sig);
    return out;
}

wire::UpdateMessage make_update(const TestSnippet& snip, uint16_t counter,
                                const std::vector<uint64_t>& bins, Rng& rng) {
    auto enc = paillier::encrypt_bins(test_key().pk, snip.hash, counter, bins, rng);
    wire::UpdateMessage msg;
    msg.counter_id = counter;
    msg.snippet_hash = snip.hash;
    msg.minhash = snip.sig;
    msg.key_fingerprint = test_key().pk.fingerprint;
    msg.bin_count = static_cast<uint16_t>(bins.size());
    msg.ct_width = static_cast<uint32_t>(test_key().pk.ciphertext_width());
    msg.sample_count = 0;
    for (auto b : bins) msg.sample_count += b;
    msg.bins = paillier::serialize_bins(test_key().pk, enc);
    return msg;
}

std::vector<uint64_t> random_bins(Rng& rng, size_t n = 128, uint64_t cap = 50) {
    std::vector<uint64_t> bins(n);
    for (auto& b : bins) b = rng.below(cap);
    return bins;
}

std::vector<uint64_t> decrypt_entry(const wire::ReportMessage& report, const wire::ReportEntry& e) {
    paillier::EncryptedHistogram h;
    h.counter_id = e.counter_id;
    h.key_fingerprint = report.key_fingerprint;
    h.bins = paillier::deserialize_bins(test_key().pk, e.bins, e.bin_count, report.ct_width);
    return paillier::decrypt_histogram(test_key().sk, h);
}

}  // namespace

TEST_CASE("first update creates an ASH; second folds into it") {
    AggregationServer server(server_config());
    SecureRng rng;
    auto snip = make_snippet("alpha");

    auto bins1 = random_bins(rng);
    auto r1 = server.handle_update_frame(wire::encode_update(make_update(snip, 7, bins1, rng)));
    CHECK(r1.accepted);
    CHECK(r1.disposition == Disposition::New);
    CHECK(server.ash_count() == 1);

    auto bins2 = random_bins(rng);
    auto r2 = server.handle_update_frame(wire::encode_update(make_update(snip, 7, bins2, rng)));
    CHECK(r2.accepted);
    CHECK(r2.disposition == Disposition::Exact);
    CHECK(server.ash_count() == 1);

    auto report = server.emit_report();
    REQUIRE(report.entries.size() == 1);
    CHECK(report.entries[0].contribution_count == 2);
    auto decrypted = decrypt_entry(report, report.entries[0]);
    for (size_t i = 0; i < decrypted.size(); ++i) CHECK(decrypted[i] == bins1[i] + bins2[i]);
}

TEST_CASE("near-duplicate snippet routes into the canonical ASH") {
    AggregationServer server(server_config());
    SecureRng rng;
    auto base = make_snippet("beta", 64);

    Snippet variant;
    for (int i = 0; i < 64; ++i) variant.kernels.push_back("beta_" + std::to_string(i));
    for (int i = 0; i < 5; ++i) variant.kernels.push_back("tail_" + std::to_string(i));
    TestSnippet near;
    near.sig = minhash(variant);
    near.hash = snippet_hash_of(near.sig);
    REQUIRE(near.hash != base.hash);
    REQUIRE(estimate_jaccard(near.sig, base.sig) >= 0.85);

    auto b1 = random_bins(rng);
    auto b2 = random_bins(rng);
    server.handle_update_frame(wire::encode_update(make_update(base, 1, b1, rng)));
    auto r = server.handle_update_frame(wire::encode_update(make_update(near, 1, b2, rng)));
    CHECK(r.accepted);
    CHECK(r.disposition == Disposition::Matched);
    CHECK(r.canonical == base.hash);
    CHECK(server.ash_count() == 1);

    auto report = server.emit_report();
    REQUIRE(report.entries.size() == 1);
    CHECK(report.entries[0].snippet_hash == base.hash);
    auto decrypted = decrypt_entry(report, report.entries[0]);
    for (size_t i = 0; i < decrypted.size(); ++i) CHECK(decrypted[i] == b1[i] + b2[i]);
}

TEST_CASE("announce-only frames classify without touching the store") {
    AggregationServer server(server_config());
    auto snip = make_snippet("gamma");
    wire::UpdateMessage announce;
    announce.snippet_hash = snip.hash;
    announce.minhash = snip.sig;
    announce.key_fingerprint = test_key().pk.fingerprint;
    auto r = server.handle_update_frame(wire::encode_update(announce));
    CHECK(r.accepted);
    CHECK(r.announce_only);
    CHECK(server.ash_count() == 0);
    CHECK(server.metrics().accepted_announces == 1);
}

TEST_CASE("malformed and mismatched frames are dropped with reasons, never fatally") {
    AggregationServer server(server_config());
    SecureRng rng;
    auto snip = make_snippet("delta");

    auto good = wire::encode_update(make_update(snip, 2, random_bins(rng), rng));

    auto corrupt = good;
    corrupt[good.size() / 2] ^= 0xFF;
    CHECK(!server.handle_update_frame(corrupt).accepted);

    auto truncated = good;
    truncated.resize(32);
    CHECK(!server.handle_update_frame(truncated).accepted);

    // integrity: snippet hash not matching the signature
    auto tampered = make_update(snip, 2, random_bins(rng), rng);
    tampered.snippet_hash[0] ^= 1;
    auto r = server.handle_update_frame(wire::encode_update(tampered));
    CHECK(!r.accepted);
    CHECK(r.reason == DropReason::IntegrityMismatch);

    // wrong key fingerprint
    auto wrong_key = make_update(snip, 2, random_bins(rng), rng);
    wrong_key.key_fingerprint[0] ^= 1;
    r = server.handle_update_frame(wire::encode_update(wrong_key));
    CHECK(r.reason == DropReason::KeyMismatch);

    // wrong hash family
    auto wrong_seed = make_update(snip, 2, random_bins(rng), rng);
    wrong_seed.root_seed_id = 99;
    r = server.handle_update_frame(wire::encode_update(wrong_seed));
    CHECK(r.reason == DropReason::RootSeedMismatch);

    auto m = server.metrics();
    uint64_t total_dropped = 0;
    for (auto d : m.dropped) total_dropped += d;
    CHECK(total_dropped == 5);
    CHECK(server.ash_count() == 0);
}

TEST_CASE("order independence: any fold order decrypts identically") {
    SecureRng rng;
    auto snip = make_snippet("epsilon");
    std::vector<wire::UpdateMessage> updates;
    std::vector<uint64_t> oracle(16, 0);
    for (int i = 0; i < 8; ++i) {
        auto bins = random_bins(rng, 16);
        for (size_t j = 0; j < 16; ++j) oracle[j] += bins[j];
        updates.push_back(make_update(snip, 3, bins, rng));
    }

    auto run_order = [&](const std::vector<size_t>& order) {
        AggregationServer server(server_config());
        for (size_t idx : order) server.handle_update_frame(wire::encode_update(updates[idx]));
        auto report = server.emit_report();
        REQUIRE(report.entries.size() == 1);
        return decrypt_entry(report, report.entries[0]);
    };

    std::vector<size_t> forward{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<size_t> backward{7, 6, 5, 4, 3, 2, 1, 0};
    std::vector<size_t> shuffled{3, 7, 0, 5, 1, 6, 2, 4};
    auto a = run_order(forward);
    CHECK(a == run_order(backward));
    CHECK(a == run_order(shuffled));
    CHECK(a == oracle);
}

TEST_CASE("windowed vs cumulative reporting") {
    SecureRng rng;
    auto snip = make_snippet("zeta");
    auto b1 = random_bins(rng, 16);
    auto b2 = random_bins(rng, 16);

    auto windowed_cfg = server_config();
    windowed_cfg.windowed = true;
    AggregationServer windowed(windowed_cfg);
    windowed.handle_update_frame(wire::encode_update(make_update(snip, 1, b1, rng)));
    auto w1 = windowed.emit_report();
    windowed.handle_update_frame(wire::encode_update(make_update(snip, 1, b2, rng)));
    auto w2 = windowed.emit_report();
    CHECK(w1.period_id == 1);
    CHECK(w2.period_id == 2);
    REQUIRE(w1.entries.size() == 1);
    REQUIRE(w2.entries.size() == 1);
    CHECK(w2.entries[0].contribution_count == 1);  // store reset between periods

    auto cumulative_cfg = server_config();
    cumulative_cfg.windowed = false;
    AggregationServer cumulative(cumulative_cfg);
    cumulative.handle_update_frame(wire::encode_update(make_update(snip, 1, b1, rng)));
    cumulative.emit_report();
    cumulative.handle_update_frame(wire::encode_update(make_update(snip, 1, b2, rng)));
    auto c2 = cumulative.emit_report();
    REQUIRE(c2.entries.size() == 1);
    CHECK(c2.entries[0].contribution_count == 2);

    // cumulative period-2 equals the sum of the two windowed periods
    auto wsum1 = decrypt_entry(w1, w1.entries[0]);
    auto wsum2 = decrypt_entry(w2, w2.entries[0]);
    auto csum = decrypt_entry(c2, c2.entries[0]);
    for (size_t i = 0; i < csum.size(); ++i) CHECK(csum[i] == wsum1[i] + wsum2[i]);
}

TEST_CASE("no traffic emits an empty report; identical traffic emits identical reports") {
    AggregationServer server(server_config());
    auto empty = server.emit_report();
    CHECK(empty.entries.empty());

    SecureRng rng;
    auto snip = make_snippet("eta");
    auto bins = random_bins(rng, 16);
    auto update = make_update(snip, 5, bins, rng);

    server.handle_update_frame(wire::encode_update(update));
    auto r1 = server.emit_report();
    server.handle_update_frame(wire::encode_update(update));
    auto r2 = server.emit_report();
    REQUIRE(r1.entries.size() == 1);
    REQUIRE(r2.entries.size() == 1);
    CHECK(decrypt_entry(r1, r1.entries[0]) == decrypt_entry(r2, r2.entries[0]));
}

TEST_CASE("drop safety: losing updates only reduces mass, never corrupts") {
    SecureRng rng;
    SeededRng choice(88);
    auto snip = make_snippet("theta");
    std::vector<wire::UpdateMessage> updates;
    for (int i = 0; i < 20; ++i) updates.push_back(make_update(snip, 4, random_bins(rng, 16), rng));

    AggregationServer full(server_config());
    AggregationServer lossy(server_config());
    uint64_t kept = 0;
    std::vector<uint64_t> kept_oracle(16, 0);
    for (int i = 0; i < 20; ++i) {
        auto frame = wire::encode_update(updates[static_cast<size_t>(i)]);
        full.handle_update_frame(frame);
        if (choice.next_double() >= 0.4) {
            lossy.handle_update_frame(frame);
            ++kept;
        }
    }
    auto lossy_report = lossy.emit_report();
    REQUIRE(lossy_report.entries.size() == 1);
    CHECK(lossy_report.entries[0].contribution_count == kept);
    CHECK_NOTHROW(decrypt_entry(lossy_report, lossy_report.entries[0]));
}

TEST_CASE("SST/EST survive kill-and-restart") {
    auto dir = std::filesystem::temp_directory_path() / "penrose_server_state";
    std::filesystem::remove_all(dir);
    SecureRng rng;
    auto snip = make_snippet("iota");

    {
        auto cfg = server_config();
        cfg.state_dir = dir;
        AggregationServer server(cfg);
        auto r = server.handle_update_frame(
            wire::encode_update(make_update(snip, 1, random_bins(rng, 16), rng)));
        CHECK(r.disposition == Disposition::New);
    }
    {
        auto cfg = server_config();
        cfg.state_dir = dir;
        AggregationServer server(cfg);
        wire::UpdateMessage announce;
        announce.snippet_hash = snip.hash;
        announce.minhash = snip.sig;
        announce.key_fingerprint = test_key().pk.fingerprint;
        auto r = server.handle_update_frame(wire::encode_update(announce));
        CHECK(r.disposition == Disposition::Exact);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("data update with unknown hash still classifies via its attached signature") {
    AggregationServer server(server_config());
    SecureRng rng;
    auto base = make_snippet("kappa", 64);
    server.handle_update_frame(wire::encode_update(make_update(base, 1, random_bins(rng, 16), rng)));

    // a variant hash the EST has never seen, carried by a data update
    Snippet variant;
    for (int i = 0; i < 64; ++i) variant.kernels.push_back("kappa_" + std::to_string(i));
    variant.kernels.push_back("kappa_0");
    variant.kernels.push_back("kappa_1");
    variant.kernels.push_back("kappa_2");
    TestSnippet near;
    near.sig = minhash(variant);
    near.hash = snippet_hash_of(near.sig);
    auto r = server.handle_update_frame(
        wire::encode_update(make_update(near, 1, random_bins(rng, 16), rng)));
    CHECK(r.accepted);
    CHECK(r.disposition == Disposition::Matched);
    CHECK(r.canonical == base.hash);
}

TEST_CASE("unknown counter ids aggregate opaquely") {
    AggregationServer server(server_config());
    SecureRng rng;
    auto snip = make_snippet("lambda");
    auto r = server.handle_update_frame(
        wire::encode_update(make_update(snip, 0x7ABC, random_bins(rng, 16), rng)));
    CHECK(r.accepted);
    CHECK(server.ash_count() == 1);
}

TEST_CASE("networked service: concurrent single-frame connections reconcile") {
    auto cfg = server_config();
    cfg.worker_threads = 8;
    AggregationServer server(cfg);
    const uint16_t port = 47311;
    std::thread service([&] { server.serve("127.0.0.1", port, port + 1); });

    // wait for the listener
    for (int i = 0; i < 100; ++i) {
        try {
            close_fd(tcp_connect("127.0.0.1", port + 1));
            break;
        } catch (const Error&) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    }

    SecureRng rng;
    auto snip = make_snippet("mu");
    const int messages = 200;
    std::vector<uint64_t> oracle(16, 0);
    std::vector<std::vector<uint8_t>> frames;
    for (int i = 0; i < messages; ++i) {
        auto bins = random_bins(rng, 16);
        for (size_t j = 0; j < 16; ++j) oracle[j] += bins[j];
        frames.push_back(wire::encode_update(make_update(snip, 9, bins, rng)));
    }

    std::vector<std::future<void>> clients;
    for (int c = 0; c < 10; ++c) {
        clients.push_back(std::async(std::launch::async, [&, c] {
            TcpTransport transport("127.0.0.1", port);
            for (int i = c; i < messages; i += 10) transport.send_frame(frames[static_cast<size_t>(i)]);
        }));
    }
    for (auto& f : clients) f.get();

    // metrics endpoint answers over its own port
    int mfd = tcp_connect("127.0.0.1", port + 1);
    std::string metrics_text;
    char buf[4096];
    ssize_t n;
    while ((n = recv(mfd, buf, sizeof(buf), 0)) > 0) metrics_text.append(buf, static_cast<size_t>(n));
    close_fd(mfd);

    // report over the wire
    wire::ReportRequest req;
    auto reply = tcp_request("127.0.0.1", port, wire::encode_report_request(req));

    server.stop();
    service.join();

    CHECK(metrics_text.find("accepted_updates " + std::to_string(messages)) != std::string::npos);
    wire::DecodeError err;
    auto report = wire::decode_report(reply, err);
    REQUIRE(report.has_value());
    REQUIRE(report->entries.size() == 1);
    CHECK(report->entries[0].contribution_count == messages);
    CHECK(decrypt_entry(*report, report->entries[0]) == oracle);
}
