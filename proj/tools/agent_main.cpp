#include <unistd.h>

#include <cstdio>
#include <memory>

#include "CLI11.hpp"
#include "penrose/agent.hpp"
#include "penrose/config.hpp"
#include "penrose/paillier.hpp"
#include "penrose/trace.hpp"
#include "penrose/transport.hpp"

using namespace penrose;

namespace {

/// Wall-clock pacing wrapper: sleeps each kernel's (scaled) duration.
class PacedStream final : public KernelStream {
public:
    PacedStream(KernelStream& inner, double speedup) : inner_(inner), speedup_(speedup) {}
    std::optional<KernelRecord> next() override {
        auto rec = inner_.next();
        if (rec && speedup_ > 0) {
            auto us = static_cast<useconds_t>(static_cast<double>(rec->duration_ns) / 1000.0 / speedup_);
            if (us > 0) usleep(us);
        }
        return rec;
    }

private:
    KernelStream& inner_;
    double speedup_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"penrose telemetry agent: replays a kernel trace, samples counters, "
                 "and ships encrypted partial histograms"};

    std::string trace_path, config_path, pubkey_path, server_addr, socks5_addr, clock = "virtual";
    uint64_t seed = 0;
    double load_factor = -1.0;
    double speedup = 1.0;

    app.add_option("--trace", trace_path, "kernel trace file")->required();
    app.add_option("--config", config_path, "agent configuration file")->required();
    app.add_option("--pubkey", pubkey_path, "designer public key file")->required();
    app.add_option("--server", server_addr, "aggregation server host:port")->required();
    app.add_option("--socks5", socks5_addr, "SOCKS5 proxy host:port for anonymized egress");
    app.add_option("--seed", seed, "sampler seed (0 draws from the system RNG)");
    app.add_option("--load-factor", load_factor, "override the configured load factor");
    app.add_option("--clock", clock, "virtual|wall")->check(CLI::IsMember({"virtual", "wall"}));
    app.add_option("--speedup", speedup, "wall-clock replay speed multiplier");
    CLI11_PARSE(app, argc, argv);

    try {
        auto kv = KeyValueConfig::load(config_path);
        auto config = AgentConfig::from_config(kv, std::filesystem::path(config_path).parent_path());
        if (load_factor > 0) config.load_factor = load_factor;
        auto pk = paillier::read_public_key_file(pubkey_path);
        if (seed == 0) {
            SecureRng rng;
            seed = rng.next_u64();
        }

        auto hp = parse_host_port(server_addr);
        std::optional<Socks5Endpoint> socks5;
        if (!socks5_addr.empty()) {
            auto sp = parse_host_port(socks5_addr);
            socks5 = Socks5Endpoint{sp.host, sp.port};
        }
        TcpTransport transport(hp.host, hp.port, socks5);

        Agent agent(std::move(config), pk, transport, seed);
        TraceFileReader reader(trace_path);
        if (clock == "wall") {
            PacedStream paced(reader, speedup);
            agent.run(paced);
        } else {
            agent.run(reader);
        }

        for (const auto& d : reader.diagnostics()) std::fprintf(stderr, "%s\n", d.c_str());
        const auto& s = agent.stats();
        std::printf("kernels=%llu samples=%llu announces=%llu updates=%llu failures=%llu\n",
                    (unsigned long long)s.kernels_seen, (unsigned long long)s.samples_folded,
                    (unsigned long long)s.announces_sent, (unsigned long long)s.updates_sent,
                    (unsigned long long)s.send_failures);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "agent: %s\n", e.what());
        return 1;
    }
}
