#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "hpfp/types.hpp"

typedef struct ssl_st SSL;
typedef struct ssl_ctx_st SSL_CTX;

namespace hpfp::net {

using Millis = std::chrono::milliseconds;

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.release()) {}
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { reset(); }

    int fd() const { return fd_; }
    int release();
    void reset();
    explicit operator bool() const { return fd_ >= 0; }

private:
    int fd_ = -1;
};

struct ReadOptions {
    std::size_t max_bytes = 4096;
    Millis first{10000};  // wait this long for the first byte
    Millis idle{10000};   // then give up after this long without new bytes
    Millis total{10000};  // hard deadline for the whole read
    // Returns true once the buffered bytes form a complete reply.
    std::function<bool(std::string_view)> complete;
};

struct ReadResult {
    Bytes data;
    bool peer_closed = false;
    bool reset = false;
    bool timed_out = false;
    bool truncated = false;
};

// A connected byte stream, optionally wrapped in TLS.
class Conn {
public:
    Conn() = default;
    explicit Conn(Socket s);
    Conn(Conn&&) noexcept;
    Conn& operator=(Conn&&) noexcept;
    ~Conn();

    int fd() const { return sock_.fd(); }
    bool is_tls() const { return ssl_ != nullptr; }
    SSL* ssl() const { return ssl_; }

    // Client side TLS, no certificate validation. Returns an error text or "".
    std::string tls_connect(Millis timeout, const std::string& sni = {});
    std::string tls_accept(SSL_CTX* ctx, Millis timeout);

    bool send(std::string_view data, Millis timeout = Millis(10000));
    ReadResult read(const ReadOptions& opts);
    // Reads exactly n bytes or fails.
    std::optional<Bytes> read_exact(std::size_t n, Millis timeout);
    // Waits until the peer closes. Returns false on timeout.
    bool wait_closed(Millis timeout, Bytes* trailing = nullptr);

    // Closes with RST instead of FIN.
    void abort();
    void shutdown_write();

private:
    // One read attempt after poll readiness: >0 bytes, 0 closed, -1 would block, -2 reset.
    long read_once(char* buf, std::size_t n);
    bool wait_io(bool want_write, std::chrono::steady_clock::time_point deadline);

    Socket sock_;
    SSL* ssl_ = nullptr;
};

struct ConnectResult {
    Conn conn;
    std::string error;  // "" on success; refused, timeout, unreachable, ...
    std::int64_t latency_ms = 0;
    bool ok() const { return error.empty(); }
};

ConnectResult connect_tcp(Ipv4 addr, std::uint16_t port, Millis timeout,
                          std::optional<Ipv4> source = std::nullopt);

// Peer's advertised receive window as seen by the local stack.
std::optional<std::uint32_t> peer_window(int fd);

// Listening socket bound to addr:port. Throws std::system_error.
Socket listen_tcp(Ipv4 addr, std::uint16_t port, int backlog = 128,
                  std::optional<int> window_clamp = std::nullopt);
std::uint16_t local_port(int fd);
std::optional<Ipv4> peer_address(int fd);

bool is_loopback(Ipv4 addr);

}  // namespace hpfp::net
