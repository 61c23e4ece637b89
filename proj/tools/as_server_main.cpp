#include <csignal>
#include <cstdio>

#include "CLI11.hpp"
#include "penrose/config.hpp"
#include "penrose/server.hpp"
#include "penrose/transport.hpp"

using namespace penrose;

namespace {
AggregationServer* g_server = nullptr;
void handle_signal(int) {
    if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"penrose aggregation server: classifies anonymized snippet updates and "
                 "folds encrypted histograms it cannot read"};

    std::string bind_addr = "127.0.0.1:7400";
    std::string pubkey_path, state_dir;
    std::string report_interval = "1d";
    std::string mode = "windowed";
    uint16_t metrics_port = 0;
    size_t workers = 4;

    app.add_option("--bind", bind_addr, "listen address host:port");
    app.add_option("--pubkey", pubkey_path, "designer public key file")->required();
    app.add_option("--state-dir", state_dir, "directory for the SST/EST logs")->required();
    app.add_option("--report-interval", report_interval, "report period length (e.g. 1d, 12h)");
    app.add_option("--mode", mode, "windowed|cumulative")
        ->check(CLI::IsMember({"windowed", "cumulative"}));
    app.add_option("--metrics-port", metrics_port, "metrics port (default data port + 1)");
    app.add_option("--workers", workers, "connection worker threads");
    CLI11_PARSE(app, argc, argv);

    try {
        ServerConfig config;
        config.pk = paillier::read_public_key_file(pubkey_path);
        config.state_dir = state_dir;
        config.report_interval_s = parse_duration_s(report_interval);
        config.windowed = mode == "windowed";
        config.worker_threads = workers;

        AggregationServer server(config);
        g_server = &server;
        std::signal(SIGINT, handle_signal);
        std::signal(SIGTERM, handle_signal);

        auto hp = parse_host_port(bind_addr);
        uint16_t mport = metrics_port ? metrics_port : static_cast<uint16_t>(hp.port + 1);
        std::printf("listening on %s:%u (metrics on %u), %s mode\n", hp.host.c_str(), hp.port,
                    mport, mode.c_str());
        std::fflush(stdout);
        server.serve(hp.host, hp.port, mport);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "as-server: %s\n", e.what());
        return 1;
    }
}
