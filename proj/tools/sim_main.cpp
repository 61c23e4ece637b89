#include <cstdio>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "penrose/sim.hpp"

using namespace penrose;
using namespace penrose::sim;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

void write_outputs(const std::filesystem::path& dir, const SimConfig& config,
                   const Corpus& corpus, const SimReport& report) {
    std::filesystem::create_directories(dir);
    write_text(dir / "report.csv", report.serialize());

    auto registry = registry_of(corpus);
    registry.save_csv(dir / "registry.csv");

    std::ostringstream covered;
    covered << "canonical_hash,covered_positions\n";
    auto by_canonical = covered_by_canonical(corpus, report);
    for (const auto& [hash, count] : by_canonical) covered << to_hex(hash) << "," << count << "\n";
    write_text(dir / "covered.csv", covered.str());

    std::ostringstream summary;
    summary.precision(9);
    summary << "gpus," << config.gpus << "\n";
    summary << "apps," << config.app_count << "\n";
    summary << "seed," << config.seed << "\n";
    summary << "time_to_percentile_s," << report.percentile_time_s << "\n";
    summary << "messages_arrived," << report.messages_arrived << "\n";
    summary << "steady_ingress_per_s," << report.steady_ingress_per_s << "\n";
    write_text(dir / "summary.csv", summary.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"penrose fleet simulator: deterministic event-driven model of G GPUs, "
                 "the aggregation server, and the designer"};
    app.require_subcommand(1);

    auto* run_cmd = app.add_subcommand("run", "run one configuration");
    std::string config_path, out_dir = "sim-out";
    uint64_t seed_override = 0;
    run_cmd->add_option("--config", config_path, "simulation config file")->required();
    run_cmd->add_option("--seed", seed_override, "override the config seed");
    run_cmd->add_option("--out", out_dir, "output directory");

    auto* sweep_cmd = app.add_subcommand("sweep", "run a grid of configurations");
    std::string grid_path, sweep_out = "sweep.csv";
    sweep_cmd->add_option("--grid", grid_path, "grid file: one `name: key=value ...` per line")
        ->required();
    sweep_cmd->add_option("--out", sweep_out, "output csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            auto kv = KeyValueConfig::load(config_path);
            auto config = SimConfig::from_config(kv);
            if (seed_override) config.seed = seed_override;
            auto corpus = generate_corpus(config.app_count, config.seed);
            auto report = run_sim(config, corpus);
            write_outputs(out_dir, config, corpus, report);
            std::printf("arrived=%llu time_to_%.1f%%=%llds -> %s\n",
                        (unsigned long long)report.messages_arrived, config.percentile * 100.0,
                        (long long)report.percentile_time_s, out_dir.c_str());
        } else {
            std::ifstream in(grid_path);
            if (!in) throw Error("cannot open grid file: " + grid_path);
            std::vector<SweepCell> cells;
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty() || line[0] == '#') continue;
                auto colon = line.find(':');
                if (colon == std::string::npos) throw Error("grid line needs `name: overrides`");
                SweepCell cell;
                cell.name = line.substr(0, colon);
                std::string overrides = line.substr(colon + 1);
                // overrides are space-separated key=value pairs
                std::string as_config;
                std::istringstream fields(overrides);
                std::string field;
                while (fields >> field) {
                    auto eq = field.find('=');
                    if (eq == std::string::npos) throw Error("bad override: " + field);
                    as_config += field.substr(0, eq) + " = " + field.substr(eq + 1) + "\n";
                }
                cell.config = SimConfig::from_config(KeyValueConfig::parse(as_config));
                cells.push_back(std::move(cell));
            }
            auto rows = sweep(cells);
            write_text(sweep_out, sweep_csv(rows));
            std::printf("wrote %zu sweep rows to %s\n", rows.size(), sweep_out.c_str());
        }
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "penrose-sim: %s\n", e.what());
        return 1;
    }
}
