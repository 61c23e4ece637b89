#include "penrose/designer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "penrose/transport.hpp"

namespace penrose {

using json = nlohmann::json;

std::vector<DecryptedAsh> decrypt_report(const paillier::PrivateKey& sk,
                                         const wire::ReportMessage& report) {
    if (report.key_fingerprint != sk.pk.fingerprint)
        throw Error("report was aggregated under a different public key");
    std::vector<DecryptedAsh> out;
    out.reserve(report.entries.size());
    for (const auto& e : report.entries) {
        paillier::EncryptedHistogram h;
        h.snippet_hash = e.snippet_hash;
        h.counter_id = e.counter_id;
        h.key_fingerprint = report.key_fingerprint;
        h.bins = paillier::deserialize_bins(sk.pk, e.bins, e.bin_count, report.ct_width);
        DecryptedAsh d;
        d.snippet_hash = e.snippet_hash;
        d.counter_id = e.counter_id;
        d.contribution_count = e.contribution_count;
        d.period_id = report.period_id;
        d.bins = paillier::decrypt_histogram(sk, h);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<DecryptedAsh> fetch_and_decrypt(const std::string& host, uint16_t port,
                                            const paillier::PrivateKey& sk) {
    wire::ReportRequest req;  // period 0: current snapshot
    auto reply = tcp_request(host, port, wire::encode_report_request(req));
    wire::DecodeError err;
    auto report = wire::decode_report(reply, err);
    if (!report) throw Error(std::string("bad report frame: ") + std::string(wire::decode_error_name(err)));
    return decrypt_report(sk, *report);
}

UtilizationBreakdown utilization_breakdown(const DecryptedAsh& ash, double threshold) {
    if (ash.bins.size() != kPairBinCount)
        throw Error("utilization breakdown needs a 1024-bin pair histogram");
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error("threshold must be in (0,1)");

    UtilizationBreakdown b;
    b.low_levels = static_cast<uint32_t>(std::floor(kPairGridSide * threshold));
    for (uint32_t row = 0; row < kPairGridSide; ++row) {
        for (uint32_t col = 0; col < kPairGridSide; ++col) {
            uint64_t m = ash.bins[row * kPairGridSide + col];
            if (m == 0) continue;
            bool a_low = row <= b.low_levels;
            bool b_low = col <= b.low_levels;
            if (a_low && b_low) b.mass_both_low += m;
            else if (a_low) b.mass_a_low_only += m;
            else if (b_low) b.mass_b_low_only += m;
            else b.mass_neither_low += m;
        }
    }
    b.total_mass = b.mass_both_low + b.mass_a_low_only + b.mass_b_low_only + b.mass_neither_low;
    if (b.total_mass == 0) return b;  // undefined, reported as such
    b.defined = true;
    auto frac = [&](uint64_t m) { return static_cast<double>(m) / static_cast<double>(b.total_mass); };
    b.both_low = frac(b.mass_both_low);
    b.a_low_only = frac(b.mass_a_low_only);
    b.b_low_only = frac(b.mass_b_low_only);
    b.neither_low = frac(b.mass_neither_low);
    return b;
}

namespace {

std::string hex32(const SnippetHash& h) { return to_hex(h); }

SnippetHash parse_hex32(const std::string& s) {
    if (s.size() != 64) throw Error("bad snippet hash hex");
    SnippetHash h{};
    auto nibble = [](char c) -> uint8_t {
        if (c >= '0' && c <= '9') return uint8_t(c - '0');
        if (c >= 'a' && c <= 'f') return uint8_t(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return uint8_t(c - 'A' + 10);
        throw Error("bad hex digit");
    };
    for (size_t i = 0; i < 32; ++i) h[i] = uint8_t(nibble(s[2 * i]) << 4) | nibble(s[2 * i + 1]);
    return h;
}

}  // namespace

AppRegistry AppRegistry::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open registry: " + path.string());
    AppRegistry reg;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first && line.rfind("app,", 0) == 0) {
            first = false;
            continue;  // header
        }
        first = false;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string app, hash, count;
        if (!std::getline(ss, app, ',') || !std::getline(ss, hash, ',') || !std::getline(ss, count, ','))
            throw Error("bad registry line: " + line);
        reg.apps[parse_hex32(hash)] = App{app, static_cast<uint32_t>(std::stoul(count))};
    }
    return reg;
}

void AppRegistry::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write registry: " + path.string());
    out << "app,canonical_hash,kernel_count\n";
    for (const auto& [hash, app] : apps)
        out << app.name << "," << hex32(hash) << "," << app.kernel_count << "\n";
}

CoverageReport coverage_report(const std::map<SnippetHash, uint64_t>& covered,
                               const AppRegistry& registry) {
    CoverageReport report;
    for (const auto& [hash, app] : registry.apps) {
        CoverageRow row;
        row.app = app.name;
        row.canonical = hash;
        row.kernel_count = app.kernel_count;
        auto it = covered.find(hash);
        row.covered_positions = it == covered.end() ? 0 : std::min<uint64_t>(it->second, app.kernel_count);
        row.fraction = app.kernel_count == 0
                           ? 0.0
                           : static_cast<double>(row.covered_positions) / app.kernel_count;
        report.rows.push_back(std::move(row));
    }
    for (const auto& [hash, count] : covered)
        if (!registry.apps.count(hash)) report.unknown_canonicals.push_back(hash);
    return report;
}

ErrorReport error_report(const std::vector<uint64_t>& sampled, const std::vector<uint64_t>& truth,
                         double heavy_mass_threshold) {
    if (sampled.size() != truth.size()) throw Error("error_report: bin count mismatch");
    ErrorReport report;
    report.heavy_mass_threshold = heavy_mass_threshold;

    long double truth_total = 0, sampled_total = 0;
    for (uint64_t v : truth) truth_total += v;
    for (uint64_t v : sampled) sampled_total += v;
    if (truth_total == 0) throw Error("error_report: ground truth has no mass");

    double err_sum = 0;
    double heavy_err_weighted = 0;
    long double heavy_mass = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 0) {
            ++report.zero_truth_bins;
            continue;
        }
        double t_norm = static_cast<double>(truth[i] / truth_total);
        double s_norm = sampled_total == 0 ? 0.0 : static_cast<double>(sampled[i] / sampled_total);
        BinError be;
        be.bin = static_cast<uint32_t>(i);
        be.truth_fraction = t_norm;
        be.relative_error = std::fabs(s_norm - t_norm) / t_norm;
        err_sum += be.relative_error;
        if (t_norm > heavy_mass_threshold) {
            heavy_err_weighted += be.relative_error * t_norm;
            heavy_mass += t_norm;
        }
        if (be.relative_error > 0.05) report.mass_share_above_5pct += t_norm;
        report.bins.push_back(be);
    }
    if (!report.bins.empty()) report.mean_relative_error = err_sum / report.bins.size();
    if (heavy_mass > 0)
        report.mass_weighted_error_heavy = heavy_err_weighted / static_cast<double>(heavy_mass);
    return report;
}

// --- exports -------------------------------------------------------------

void export_ash_json(const std::filesystem::path& path, const std::vector<DecryptedAsh>& ashes) {
    json doc = json::array();
    for (const auto& a : ashes) {
        doc.push_back({{"snippet_hash", hex32(a.snippet_hash)},
                       {"counter_id", a.counter_id},
                       {"contribution_count", a.contribution_count},
                       {"period_id", a.period_id},
                       {"bins", a.bins}});
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

std::vector<DecryptedAsh> load_ash_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    json doc = json::parse(in);
    std::vector<DecryptedAsh> out;
    for (const auto& item : doc) {
        DecryptedAsh a;
        a.snippet_hash = parse_hex32(item.at("snippet_hash").get<std::string>());
        a.counter_id = item.at("counter_id").get<uint16_t>();
        a.contribution_count = item.at("contribution_count").get<uint64_t>();
        a.period_id = item.at("period_id").get<uint64_t>();
        a.bins = item.at("bins").get<std::vector<uint64_t>>();
        out.push_back(std::move(a));
    }
    return out;
}

void export_breakdown_csv(const std::filesystem::path& path,
                          const std::vector<std::pair<DecryptedAsh, UtilizationBreakdown>>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "snippet_hash,counter_id,total_mass,both_low,a_low_only,b_low_only,neither_low\n";
    out.precision(9);
    for (const auto& [ash, b] : rows) {
        out << hex32(ash.snippet_hash) << "," << ash.counter_id << "," << b.total_mass << ","
            << b.both_low << "," << b.a_low_only << "," << b.b_low_only << "," << b.neither_low
            << "\n";
    }
}

void export_coverage_csv(const std::filesystem::path& path, const CoverageReport& report) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "app,canonical_hash,kernel_count,covered_positions,fraction\n";
    out.precision(9);
    for (const auto& r : report.rows)
        out << r.app << "," << hex32(r.canonical) << "," << r.kernel_count << ","
            << r.covered_positions << "," << r.fraction << "\n";
    for (const auto& h : report.unknown_canonicals) out << "unknown," << hex32(h) << ",0,0,0\n";
}

void export_error_csv(const std::filesystem::path& path, const ErrorReport& report) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "bin,truth_fraction,relative_error\n";
    out.precision(9);
    for (const auto& b : report.bins)
        out << b.bin << "," << b.truth_fraction << "," << b.relative_error << "\n";
}

}  // namespace penrose
