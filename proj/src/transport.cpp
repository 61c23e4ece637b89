#include "penrose/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace penrose {

namespace {
constexpr size_t kMaxFrame = 64u << 20;
}

int tcp_connect(const std::string& host, uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string portstr = std::to_string(port);
    if (getaddrinfo(host.c_str(), portstr.c_str(), &hints, &res) != 0)
        throw Error("cannot resolve " + host);
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd = socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        close(fd);
        fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) throw Error("cannot connect to " + host + ":" + portstr);
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return fd;
}

void write_all(int fd, std::span<const uint8_t> data) {
    size_t off = 0;
    while (off < data.size()) {
        ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n <= 0) throw Error("socket write failed");
        off += static_cast<size_t>(n);
    }
}

namespace {

void read_exact(int fd, uint8_t* out, size_t n) {
    size_t off = 0;
    while (off < n) {
        ssize_t r = ::recv(fd, out + off, n - off, 0);
        if (r <= 0) throw Error("socket read failed (peer closed?)");
        off += static_cast<size_t>(r);
    }
}

}  // namespace

std::vector<uint8_t> read_frame(int fd) {
    uint8_t len_bytes[4];
    read_exact(fd, len_bytes, 4);
    uint32_t len = 0;
    for (int i = 3; i >= 0; --i) len = (len << 8) | len_bytes[i];
    if (len < 8 || len > kMaxFrame) throw Error("bad frame length");
    std::vector<uint8_t> frame(len);
    std::memcpy(frame.data(), len_bytes, 4);
    read_exact(fd, frame.data() + 4, len - 4);
    return frame;
}

void close_fd(int fd) {
    if (fd >= 0) close(fd);
}

int socks5_connect(const Socks5Endpoint& proxy, const std::string& dest_host, uint16_t dest_port) {
    int fd = tcp_connect(proxy.host, proxy.port);
    try {
        // greeting: version 5, one method, no-auth
        uint8_t greet[3] = {0x05, 0x01, 0x00};
        write_all(fd, greet);
        uint8_t resp[2];
        read_exact(fd, resp, 2);
        if (resp[0] != 0x05 || resp[1] != 0x00) throw Error("socks5: no acceptable auth method");

        // CONNECT with a domain-name address
        if (dest_host.size() > 255) throw Error("socks5: host name too long");
        std::vector<uint8_t> req = {0x05, 0x01, 0x00, 0x03, static_cast<uint8_t>(dest_host.size())};
        req.insert(req.end(), dest_host.begin(), dest_host.end());
        req.push_back(static_cast<uint8_t>(dest_port >> 8));
        req.push_back(static_cast<uint8_t>(dest_port & 0xFF));
        write_all(fd, req);

        uint8_t head[4];
        read_exact(fd, head, 4);
        if (head[0] != 0x05 || head[1] != 0x00) throw Error("socks5: connect refused");
        size_t addr_len = 0;
        if (head[3] == 0x01) addr_len = 4;
        else if (head[3] == 0x04) addr_len = 16;
        else if (head[3] == 0x03) {
            uint8_t n;
            read_exact(fd, &n, 1);
            addr_len = n;
        } else {
            throw Error("socks5: bad address type in reply");
        }
        std::vector<uint8_t> skip(addr_len + 2);
        read_exact(fd, skip.data(), skip.size());
        return fd;
    } catch (...) {
        close(fd);
        throw;
    }
}

TcpTransport::TcpTransport(std::string host, uint16_t port, std::optional<Socks5Endpoint> socks5)
    : host_(std::move(host)), port_(port), socks5_(std::move(socks5)) {}

void TcpTransport::send_frame(std::span<const uint8_t> frame) {
    int fd = socks5_ ? socks5_connect(*socks5_, host_, port_) : tcp_connect(host_, port_);
    try {
        write_all(fd, frame);
        // Half-close and wait for the server to drain before tearing down.
        shutdown(fd, SHUT_WR);
        uint8_t ack;
        recv(fd, &ack, 1, 0);  // EOF or one ack byte; either ends the exchange
    } catch (...) {
        close(fd);
        throw;
    }
    close(fd);
}

std::vector<uint8_t> tcp_request(const std::string& host, uint16_t port,
                                 std::span<const uint8_t> frame) {
    int fd = tcp_connect(host, port);
    try {
        write_all(fd, frame);
        shutdown(fd, SHUT_WR);
        auto reply = read_frame(fd);
        close(fd);
        return reply;
    } catch (...) {
        close(fd);
        throw;
    }
}

HostPort parse_host_port(const std::string& text) {
    HostPort hp;
    auto colon = text.rfind(':');
    if (colon == std::string::npos) {
        hp.host = "127.0.0.1";
        hp.port = static_cast<uint16_t>(std::stoul(text));
    } else {
        hp.host = text.substr(0, colon);
        if (hp.host.empty()) hp.host = "127.0.0.1";
        hp.port = static_cast<uint16_t>(std::stoul(text.substr(colon + 1)));
    }
    return hp;
}

}  // namespace penrose
