#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "penrose/designer.hpp"
#include "penrose/paillier.hpp"
#include "penrose/transport.hpp"

using namespace penrose;

namespace {

std::string passphrase_from(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("PENROSE_PASSPHRASE")) return env;
    std::fprintf(stderr, "passphrase: ");
    std::string p;
    std::getline(std::cin, p);
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"penrose designer console: key custody, report decryption, analytics"};
    app.require_subcommand(1);

    // keygen
    auto* keygen_cmd = app.add_subcommand("keygen", "generate a key pair and write key files");
    uint32_t bits = 2048;
    std::string out_dir = ".";
    std::string passphrase_flag;
    keygen_cmd->add_option("--bits", bits, "modulus size (1024 test, 2048 default, 3072)");
    keygen_cmd->add_option("--out", out_dir, "output directory");
    keygen_cmd->add_option("--passphrase", passphrase_flag,
                           "private key passphrase (or PENROSE_PASSPHRASE)");

    // fetch
    auto* fetch_cmd = app.add_subcommand("fetch", "retrieve and decrypt the current report");
    std::string server_addr, key_path, fetch_out = ".";
    fetch_cmd->add_option("--server", server_addr, "aggregation server host:port")->required();
    fetch_cmd->add_option("--key", key_path, "private key file")->required();
    fetch_cmd->add_option("--out", fetch_out, "output directory for decrypted reports");
    fetch_cmd->add_option("--passphrase", passphrase_flag,
                          "private key passphrase (or PENROSE_PASSPHRASE)");

    // analyze
    auto* analyze_cmd = app.add_subcommand("analyze", "run an analysis over decrypted reports");
    std::string analysis, in_path, registry_path, coverage_path, out_csv = "analysis.csv";
    std::string truth_path;
    double threshold = 1.0 / 3.0;
    analyze_cmd->add_option("kind", analysis, "breakdown|coverage|error")
        ->required()
        ->check(CLI::IsMember({"breakdown", "coverage", "error"}));
    analyze_cmd->add_option("--in", in_path, "decrypted report json")->required();
    analyze_cmd->add_option("--registry", registry_path, "app registry csv (coverage)");
    analyze_cmd->add_option("--covered", coverage_path, "covered-positions csv (coverage)");
    analyze_cmd->add_option("--truth", truth_path, "ground-truth report json (error)");
    analyze_cmd->add_option("--threshold", threshold, "low-utilization threshold (breakdown)");
    analyze_cmd->add_option("--out", out_csv, "output csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*keygen_cmd) {
            if (!paillier::valid_key_bits(bits)) throw Error("bits must be 1024, 2048, or 3072");
            SecureRng rng;
            auto kp = paillier::keygen(bits, rng);
            std::filesystem::create_directories(out_dir);
            auto pub = std::filesystem::path(out_dir) / "penrose_pub.key";
            auto priv = std::filesystem::path(out_dir) / "penrose_priv.key";
            paillier::write_public_key_file(pub, kp.pk);
            paillier::write_private_key_file(priv, kp.sk, passphrase_from(passphrase_flag));
            std::printf("public key:  %s\nprivate key: %s\nfingerprint: %s\n", pub.c_str(),
                        priv.c_str(), to_hex(kp.pk.fingerprint).c_str());
        } else if (*fetch_cmd) {
            auto sk = paillier::read_private_key_file(key_path, passphrase_from(passphrase_flag));
            auto hp = parse_host_port(server_addr);
            auto ashes = fetch_and_decrypt(hp.host, hp.port, sk);
            std::filesystem::create_directories(fetch_out);
            uint64_t period = ashes.empty() ? 0 : ashes.front().period_id;
            auto out = std::filesystem::path(fetch_out) /
                       ("report_period_" + std::to_string(period) + ".json");
            export_ash_json(out, ashes);
            std::printf("decrypted %zu histograms into %s\n", ashes.size(), out.c_str());
        } else if (*analyze_cmd) {
            auto ashes = load_ash_json(in_path);
            if (analysis == "breakdown") {
                std::vector<std::pair<DecryptedAsh, UtilizationBreakdown>> rows;
                for (const auto& a : ashes) {
                    if (a.bins.size() != kPairBinCount) continue;
                    rows.emplace_back(a, utilization_breakdown(a, threshold));
                }
                export_breakdown_csv(out_csv, rows);
                std::printf("wrote %zu pair-histogram breakdowns to %s\n", rows.size(),
                            out_csv.c_str());
            } else if (analysis == "coverage") {
                if (registry_path.empty() || coverage_path.empty())
                    throw Error("coverage needs --registry and --covered");
                auto registry = AppRegistry::load_csv(registry_path);
                // covered csv: canonical_hash,covered_positions
                std::map<SnippetHash, uint64_t> covered;
                {
                    std::ifstream in(coverage_path);
                    if (!in) throw Error("cannot open " + coverage_path);
                    std::string line;
                    while (std::getline(in, line)) {
                        if (line.empty() || line.rfind("canonical", 0) == 0) continue;
                        auto comma = line.find(',');
                        if (comma == std::string::npos) continue;
                        SnippetHash h{};
                        auto hex = line.substr(0, comma);
                        if (hex.size() != 64) continue;
                        for (size_t i = 0; i < 32; ++i)
                            h[i] = static_cast<uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
                        covered[h] = std::stoull(line.substr(comma + 1));
                    }
                }
                auto report = coverage_report(covered, registry);
                export_coverage_csv(out_csv, report);
                std::printf("wrote coverage for %zu apps to %s\n", report.rows.size(), out_csv.c_str());
            } else {
                if (truth_path.empty()) throw Error("error analysis needs --truth");
                auto truth = load_ash_json(truth_path);
                if (ashes.empty() || truth.empty()) throw Error("empty inputs");
                auto rep = error_report(ashes.front().bins, truth.front().bins);
                export_error_csv(out_csv, rep);
                std::printf("mean relative error %.4f, heavy-bin mass-weighted %.4f -> %s\n",
                            rep.mean_relative_error, rep.mass_weighted_error_heavy, out_csv.c_str());
            }
        }
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "ds-console: %s\n", e.what());
        return 1;
    }
}
