#include "hpfp/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <linux/tcp.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/err.h>
#include <openssl/ssl.h>

#include <cerrno>
#include <cstring>
#include <system_error>

namespace hpfp::net {

using Clock = std::chrono::steady_clock;

namespace {

sockaddr_in make_addr(Ipv4 addr, std::uint16_t port) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    sa.sin_addr.s_addr = htonl(addr.value());
    return sa;
}

void set_nonblocking(int fd) {
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

int remaining_ms(Clock::time_point deadline) {
    auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
    return left < 0 ? 0 : static_cast<int>(left);
}

std::string errno_tag(int err) {
    switch (err) {
        case ECONNREFUSED: return "refused";
        case ETIMEDOUT: return "timeout";
        case EHOSTUNREACH:
        case ENETUNREACH: return "unreachable";
        case ECONNRESET: return "reset";
        case EADDRNOTAVAIL: return "source_unavailable";
        default: return std::string("connect:") + std::strerror(err);
    }
}

SSL_CTX* client_ctx() {
    static SSL_CTX* ctx = [] {
        SSL_CTX* c = SSL_CTX_new(TLS_client_method());
        SSL_CTX_set_verify(c, SSL_VERIFY_NONE, nullptr);
        SSL_CTX_set_min_proto_version(c, TLS1_VERSION);
        SSL_CTX_set_security_level(c, 0);
        return c;
    }();
    return ctx;
}

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
    if (this != &o) {
        reset();
        fd_ = o.release();
    }
    return *this;
}

int Socket::release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
}

void Socket::reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

Conn::Conn(Socket s) : sock_(std::move(s)) {
    // OpenSSL writes through plain write(); a peer that already left must not kill us.
    static const bool sigpipe_ignored = [] { return ::signal(SIGPIPE, SIG_IGN) != SIG_ERR; }();
    (void)sigpipe_ignored;
    if (sock_) set_nonblocking(sock_.fd());
}

Conn::Conn(Conn&& o) noexcept : sock_(std::move(o.sock_)), ssl_(o.ssl_) { o.ssl_ = nullptr; }

Conn& Conn::operator=(Conn&& o) noexcept {
    if (this != &o) {
        if (ssl_) SSL_free(ssl_);
        sock_ = std::move(o.sock_);
        ssl_ = o.ssl_;
        o.ssl_ = nullptr;
    }
    return *this;
}

Conn::~Conn() {
    if (ssl_) {
        SSL_free(ssl_);
        ssl_ = nullptr;
    }
}

bool Conn::wait_io(bool want_write, Clock::time_point deadline) {
    pollfd p{sock_.fd(), static_cast<short>(want_write ? POLLOUT : POLLIN), 0};
    for (;;) {
        int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc > 0) return true;
        if (rc == 0) return false;
        if (errno != EINTR) return false;
    }
}

static std::string tls_handshake(SSL* ssl, int fd, bool server, Clock::time_point deadline) {
    for (;;) {
        int rc = server ? SSL_accept(ssl) : SSL_connect(ssl);
        if (rc == 1) return "";
        int err = SSL_get_error(ssl, rc);
        short ev = 0;
        if (err == SSL_ERROR_WANT_READ) ev = POLLIN;
        else if (err == SSL_ERROR_WANT_WRITE) ev = POLLOUT;
        else {
            ERR_clear_error();
            return "tls";
        }
        pollfd p{fd, ev, 0};
        if (::poll(&p, 1, remaining_ms(deadline)) <= 0) return "timeout";
    }
}

std::string Conn::tls_connect(Millis timeout, const std::string& sni) {
    ssl_ = SSL_new(client_ctx());
    SSL_set_fd(ssl_, sock_.fd());
    if (!sni.empty()) SSL_set_tlsext_host_name(ssl_, sni.c_str());
    return tls_handshake(ssl_, sock_.fd(), false, Clock::now() + timeout);
}

std::string Conn::tls_accept(SSL_CTX* ctx, Millis timeout) {
    ssl_ = SSL_new(ctx);
    SSL_set_fd(ssl_, sock_.fd());
    return tls_handshake(ssl_, sock_.fd(), true, Clock::now() + timeout);
}

bool Conn::send(std::string_view data, Millis timeout) {
    auto deadline = Clock::now() + timeout;
    std::size_t off = 0;
    while (off < data.size()) {
        long n;
        if (ssl_) {
            n = SSL_write(ssl_, data.data() + off, static_cast<int>(data.size() - off));
            if (n <= 0) {
                int err = SSL_get_error(ssl_, static_cast<int>(n));
                if (err == SSL_ERROR_WANT_WRITE || err == SSL_ERROR_WANT_READ) {
                    if (!wait_io(err == SSL_ERROR_WANT_WRITE, deadline)) return false;
                    continue;
                }
                ERR_clear_error();
                return false;
            }
        } else {
            n = ::send(sock_.fd(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EAGAIN || errno == EINTR) {
                    if (!wait_io(true, deadline)) return false;
                    continue;
                }
                return false;
            }
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

long Conn::read_once(char* buf, std::size_t n) {
    if (ssl_) {
        int rc = SSL_read(ssl_, buf, static_cast<int>(n));
        if (rc > 0) return rc;
        int err = SSL_get_error(ssl_, rc);
        if (err == SSL_ERROR_WANT_READ || err == SSL_ERROR_WANT_WRITE) return -1;
        ERR_clear_error();
        if (err == SSL_ERROR_ZERO_RETURN) return 0;
        if (err == SSL_ERROR_SYSCALL && errno == ECONNRESET) return -2;
        return 0;
    }
    long rc = ::recv(sock_.fd(), buf, n, 0);
    if (rc >= 0) return rc;
    if (errno == EAGAIN || errno == EINTR) return -1;
    if (errno == ECONNRESET) return -2;
    return 0;
}

ReadResult Conn::read(const ReadOptions& opts) {
    ReadResult out;
    auto start = Clock::now();
    auto hard = start + opts.total;
    auto idle_deadline = start + opts.first;
    char buf[16384];
    while (out.data.size() < opts.max_bytes) {
        if (opts.complete && !out.data.empty() && opts.complete(out.data)) return out;
        bool buffered = ssl_ && SSL_pending(ssl_) > 0;
        if (!buffered) {
            auto deadline = std::min(hard, idle_deadline);
            if (!wait_io(false, deadline)) {
                out.timed_out = true;
                return out;
            }
        }
        std::size_t want = std::min(sizeof buf, opts.max_bytes - out.data.size());
        long n = read_once(buf, want);
        if (n == -1) continue;
        if (n == -2) {
            out.reset = true;
            out.peer_closed = true;
            return out;
        }
        if (n == 0) {
            out.peer_closed = true;
            return out;
        }
        out.data.append(buf, static_cast<std::size_t>(n));
        idle_deadline = Clock::now() + opts.idle;
    }
    out.truncated = true;
    return out;
}

std::optional<Bytes> Conn::read_exact(std::size_t n, Millis timeout) {
    Bytes out;
    auto deadline = Clock::now() + timeout;
    char buf[16384];
    while (out.size() < n) {
        bool buffered = ssl_ && SSL_pending(ssl_) > 0;
        if (!buffered && !wait_io(false, deadline)) return std::nullopt;
        long got = read_once(buf, std::min(sizeof buf, n - out.size()));
        if (got == -1) continue;
        if (got <= 0) return std::nullopt;
        out.append(buf, static_cast<std::size_t>(got));
    }
    return out;
}

bool Conn::wait_closed(Millis timeout, Bytes* trailing) {
    auto deadline = Clock::now() + timeout;
    char buf[4096];
    for (;;) {
        if (!wait_io(false, deadline)) return false;
        long n = read_once(buf, sizeof buf);
        if (n == -1) continue;
        if (n <= 0) return true;
        if (trailing && trailing->size() < 65536) trailing->append(buf, static_cast<std::size_t>(n));
    }
}

void Conn::abort() {
    if (!sock_) return;
    linger l{1, 0};
    setsockopt(sock_.fd(), SOL_SOCKET, SO_LINGER, &l, sizeof l);
    if (ssl_) {
        SSL_free(ssl_);
        ssl_ = nullptr;
    }
    sock_.reset();
}

void Conn::shutdown_write() {
    if (!sock_) return;
    if (ssl_) SSL_shutdown(ssl_);
    ::shutdown(sock_.fd(), SHUT_WR);
}

ConnectResult connect_tcp(Ipv4 addr, std::uint16_t port, Millis timeout,
                          std::optional<Ipv4> source) {
    ConnectResult res;
    auto start = Clock::now();
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s) {
        res.error = "socket";
        return res;
    }
    if (source) {
        auto sa = make_addr(*source, 0);
        if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
            res.error = errno_tag(errno);
            return res;
        }
    }
    set_nonblocking(s.fd());
    auto sa = make_addr(addr, port);
    int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa);
    if (rc != 0 && errno != EINPROGRESS) {
        res.error = errno_tag(errno);
        return res;
    }
    if (rc != 0) {
        pollfd p{s.fd(), POLLOUT, 0};
        int prc;
        do {
            prc = ::poll(&p, 1, remaining_ms(start + timeout));
        } while (prc < 0 && errno == EINTR);
        if (prc == 0) {
            res.error = "timeout";
            return res;
        }
        int err = 0;
        socklen_t len = sizeof err;
        getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            res.error = errno_tag(err);
            return res;
        }
    }
    int one = 1;
    setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    res.latency_ms =
        std::chrono::duration_cast<Millis>(Clock::now() - start).count();
    res.conn = Conn(std::move(s));
    return res;
}

std::optional<std::uint32_t> peer_window(int fd) {
    tcp_info info{};
    socklen_t len = sizeof info;
    if (getsockopt(fd, IPPROTO_TCP, TCP_INFO, &info, &len) != 0) return std::nullopt;
    if (len < offsetof(tcp_info, tcpi_snd_wnd) + sizeof info.tcpi_snd_wnd) return std::nullopt;
    return info.tcpi_snd_wnd;
}

Socket listen_tcp(Ipv4 addr, std::uint16_t port, int backlog, std::optional<int> window_clamp) {
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s) throw std::system_error(errno, std::generic_category(), "socket");
    int one = 1;
    setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (window_clamp) {
        // Inherited by accepted sockets, so the SYN-ACK already carries it.
        int clamp = *window_clamp;
        setsockopt(s.fd(), IPPROTO_TCP, TCP_WINDOW_CLAMP, &clamp, sizeof clamp);
    }
    auto sa = make_addr(addr, port);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0)
        throw std::system_error(errno, std::generic_category(),
                                "bind " + addr.str() + ":" + std::to_string(port));
    if (::listen(s.fd(), backlog) != 0)
        throw std::system_error(errno, std::generic_category(), "listen");
    set_nonblocking(s.fd());
    return s;
}

std::uint16_t local_port(int fd) {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
    return ntohs(sa.sin_port);
}

std::optional<Ipv4> peer_address(int fd) {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    if (getpeername(fd, reinterpret_cast<sockaddr*>(&sa), &len) != 0) return std::nullopt;
    return Ipv4(ntohl(sa.sin_addr.s_addr));
}

bool is_loopback(Ipv4 addr) { return (addr.value() >> 24) == 127; }

}  // namespace hpfp::net
