#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hpfp/net.hpp"
#include "hpfp/rate_limiter.hpp"
#include "hpfp/signature_store.hpp"
#include "hpfp/tls.hpp"
#include "hpfp/types.hpp"

namespace hpfp {

struct ProbeTranscript {
    TranscriptId id = 0;
    Endpoint endpoint;
    Stage stage = Stage::Banner;
    std::string step;  // which exchange within the stage, e.g. "ssh_malformed" or "exec vi"
    Bytes request;
    Bytes response;
    // What the matchers saw. Usually the response, sometimes a field of it
    // (Server header, rendered KEXINIT, certificate summary).
    Bytes subject;
    std::int64_t connect_latency_ms = 0;
    bool disconnected_by_peer = false;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::optional<std::string> error;
    std::string note;

    // Connection never established (refused, unreachable, connect timeout, TLS).
    bool unreachable() const;
    bool operator==(const ProbeTranscript&) const = default;
};

// Append-only, shared by all workers of a session.
class TranscriptSink {
public:
    TranscriptId append(ProbeTranscript t);
    std::optional<ProbeTranscript> get(TranscriptId id) const;
    std::vector<ProbeTranscript> snapshot() const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::vector<ProbeTranscript> items_;
};

struct ProbeConfig {
    net::Millis connect_timeout{5000};
    net::Millis read_timeout{10000};
    net::Millis banner_idle{10000};
    // Quiet period that ends a capture once the peer has started talking.
    net::Millis settle{600};
    net::Millis ftp_window{50000};
    double ftp_idle_min_s = 44.0;
    double ftp_idle_max_s = 46.5;
    std::uint32_t ftp_tcp_window = 4096;
    std::optional<Ipv4> source;
    bool credential_probe = false;
    std::string ssh_client_version = "SSH-2.0-OpenSSH_8.9p1";
};

struct HttpResponse {
    std::string status_line;
    int status = 0;
    std::vector<std::pair<std::string, std::string>> headers;
    Bytes body;
    std::optional<std::string> header(std::string_view name) const;
};
std::optional<HttpResponse> parse_http_response(std::string_view raw);

struct CertificateResult {
    std::optional<CertificateSummary> summary;
    ProbeTranscript transcript;
};

struct HandshakeOutcome {
    Endpoint endpoint;
    bool is_deviated = false;
    std::optional<std::string> matched_rule;
    // The last exchange; earlier attempts of the same branch are in `attempts`.
    ProbeTranscript transcript;
    std::vector<ProbeTranscript> attempts;
    std::optional<std::string> error;
};

struct LibraryOutcome {
    ProbeTranscript transcript;
    bool matched = false;
    std::vector<std::string> signatures;
};

struct StaticOutcome {
    std::vector<ProbeTranscript> transcripts;
    bool matched = false;
    std::vector<std::string> signatures;
    std::optional<std::string> error;
};

struct CredentialOutcome {
    std::optional<Credential> accepted;
    std::vector<ProbeTranscript> transcripts;
    bool banned = false;
    std::optional<std::string> error;
};

// Default credential lists for the opt-in credential sweep.
const std::vector<Credential>& default_ssh_credentials();
const std::vector<Credential>& default_ftp_credentials();

// Handshake requests, one per branch, exactly as they go on the wire.
namespace requests {
inline constexpr std::string_view ssh_malformed = "SSH-2.0-OpenSSH\n\n\n\n\n\n\n\n\n\n";
inline constexpr std::string_view ssh_version_line = "SSH-2.0-OpenSSH_6.0p1 Debian-4+deb7u2\n";
inline constexpr std::string_view smtp_pass = "PASS:Test\r\n";
inline constexpr std::string_view imap_rcpt = "RCPT TO:TEST\r\n";
inline constexpr std::string_view http_malformed = "GET /HTTP/1.0\r\n\r\n";
inline constexpr std::string_view http_fallback = "GET HTTP/1.1\r\n\r\n";
inline constexpr std::string_view http_options = "OPTIONS / HTTP/1.0\r\n\r\n";
}  // namespace requests

// Server tokens that mark a deviated HTTP handshake.
const std::vector<std::string>& deviated_http_servers();

// All network I/O of the probe pipeline. Every exchange is appended to the
// sink and holds a rate limiter permit for the lifetime of its connection.
class ProbeEngine {
public:
    ProbeEngine(const SignatureSet& set, ProbeConfig config, TranscriptSink& sink,
                RateLimiter& limiter);

    const ProbeConfig& config() const { return cfg_; }
    const SignatureSet& signatures() const { return set_; }
    TranscriptSink& sink() { return sink_; }

    // Whether a banner grab can produce anything a signature looks at.
    bool has_banner_signatures(Protocol p) const;

    ProbeTranscript grab_banner(const Endpoint& ep);
    ProbeTranscript http_get(const Endpoint& ep, std::string_view path, Stage stage = Stage::HttpBody);
    ProbeTranscript http_request(const Endpoint& ep, std::string_view request, Stage stage,
                                 std::string step);
    CertificateResult fetch_certificate(const Endpoint& ep);
    HandshakeOutcome handshake_probe(const Endpoint& ep);
    LibraryOutcome library_dependency_probe(const Endpoint& ep, const HoneypotType& candidate);
    StaticOutcome static_command_probe(const Endpoint& ep, const HoneypotType& candidate);
    // Refuses to run unless ProbeConfig::credential_probe is set.
    CredentialOutcome credential_probe(const Endpoint& ep, const std::vector<Credential>& creds);

private:
    struct Session;
    Session open(const Endpoint& ep, Stage stage, std::string step, bool tls_for_https = true);
    ProbeTranscript finish(Session& s);

    HandshakeOutcome handshake_ssh(const Endpoint& ep);
    HandshakeOutcome handshake_line(const Endpoint& ep, std::string_view request,
                                    std::string_view expected, const char* rule);
    HandshakeOutcome handshake_ftp(const Endpoint& ep);
    HandshakeOutcome handshake_telnet(const Endpoint& ep);
    HandshakeOutcome handshake_http(const Endpoint& ep);
    HandshakeOutcome handshake_s7(const Endpoint& ep);
    HandshakeOutcome handshake_modbus(const Endpoint& ep);
    HandshakeOutcome handshake_atg(const Endpoint& ep);

    StaticOutcome static_ssh(const Endpoint& ep, const HoneypotType& c,
                             const std::vector<const Signature*>& sigs);
    StaticOutcome static_s7(const Endpoint& ep, const HoneypotType& c,
                            const std::vector<const Signature*>& sigs);
    StaticOutcome static_line(const Endpoint& ep, const HoneypotType& c,
                              const std::vector<const Signature*>& sigs);

    const SignatureSet& set_;
    ProbeConfig cfg_;
    TranscriptSink& sink_;
    RateLimiter& limiter_;
};

// Fixed-size worker pool over an index range; fn(i) runs once per index.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct PortScanError {
    Ipv4 address;
    std::uint16_t port = 0;
    std::string error;
};

struct PortScanResult {
    std::vector<Endpoint> endpoints;  // sorted
    std::vector<PortScanError> errors;
};

struct PortScanOptions {
    net::Millis connect_timeout{5000};
    std::size_t workers = 64;
    // Protocol for ports outside the built-in map (or to override it).
    std::map<std::uint16_t, Protocol> overrides;
    std::optional<Ipv4> source;
};

// TCP connect scan. Ports with no known protocol are skipped and reported.
PortScanResult port_scan(const std::vector<Ipv4>& targets, const std::vector<std::uint16_t>& ports,
                         RateLimiter& limiter, const PortScanOptions& opts = {});

}  // namespace hpfp
