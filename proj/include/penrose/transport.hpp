#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "penrose/error.hpp"

namespace penrose {

/// One-shot anonymized message channel. Every send_frame call uses a
/// fresh connection; connection reuse is forbidden by contract so the
/// receiving server cannot correlate messages from one client.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send_frame(std::span<const uint8_t> frame) = 0;
};

struct Socks5Endpoint {
    std::string host;
    uint16_t port = 0;
};

/// TCP transport with optional SOCKS5 egress (CONNECT, no auth).
class TcpTransport final : public Transport {
public:
    TcpTransport(std::string host, uint16_t port, std::optional<Socks5Endpoint> socks5 = {});
    void send_frame(std::span<const uint8_t> frame) override;

private:
    std::string host_;
    uint16_t port_;
    std::optional<Socks5Endpoint> socks5_;
};

/// Collects frames in memory; tests and the simulator inject this.
class CollectingTransport final : public Transport {
public:
    void send_frame(std::span<const uint8_t> frame) override {
        std::lock_guard lock(mu_);
        frames_.emplace_back(frame.begin(), frame.end());
    }
    std::vector<std::vector<uint8_t>> take() {
        std::lock_guard lock(mu_);
        return std::exchange(frames_, {});
    }
    size_t count() {
        std::lock_guard lock(mu_);
        return frames_.size();
    }

private:
    std::mutex mu_;
    std::vector<std::vector<uint8_t>> frames_;
};

// --- low-level socket helpers (shared by transports and servers) --------

int tcp_connect(const std::string& host, uint16_t port);
int socks5_connect(const Socks5Endpoint& proxy, const std::string& dest_host, uint16_t dest_port);
void write_all(int fd, std::span<const uint8_t> data);
// Reads one length-prefixed frame (prefix included in the result).
std::vector<uint8_t> read_frame(int fd);
void close_fd(int fd);

// Opens a fresh connection, sends one frame, reads one frame back.
std::vector<uint8_t> tcp_request(const std::string& host, uint16_t port,
                                 std::span<const uint8_t> frame);

struct HostPort {
    std::string host;
    uint16_t port = 0;
};
// "host:port"; bare "port" binds 127.0.0.1.
HostPort parse_host_port(const std::string& text);

}  // namespace penrose
