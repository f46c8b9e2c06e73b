#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hpfp {

// Raw byte strings travel as std::string; nothing here assumes UTF-8.
using Bytes = std::string;
using HoneypotType = std::string;
using TranscriptId = std::uint64_t;

enum class Protocol { SSH, Telnet, HTTP, HTTPS, FTP, SMTP, IMAP, Modbus, S7, ATG };

// The first seven are signature stages. The rest only appear in metascan traces.
enum class Stage {
    Banner,
    HttpBody,
    Certificate,
    Handshake,
    Library,
    StaticCommand,
    Keyword,
    Fqdn,
    AsIsp,
    Cloud,
};

enum class MatchKind { Exact, Prefix, Substring, Regex };

std::string_view to_string(Protocol p);
std::string_view to_string(Stage s);
std::string_view to_string(MatchKind k);
std::optional<Protocol> parse_protocol(std::string_view text);
std::optional<Stage> parse_stage(std::string_view text);
std::optional<MatchKind> parse_match_kind(std::string_view text);

bool is_signature_stage(Stage s);
bool is_http_family(Protocol p);
// A signature written for `sig` applies to an endpoint speaking `endpoint`.
// HTTP signatures also cover HTTPS since the payload is the same.
bool protocol_covers(Protocol sig, Protocol endpoint);

class Ipv4 {
public:
    constexpr Ipv4() = default;
    constexpr explicit Ipv4(std::uint32_t v) : value_(v) {}
    static std::optional<Ipv4> parse(std::string_view text);
    std::string str() const;
    constexpr std::uint32_t value() const { return value_; }
    // Same /24 network.
    bool same_subnet24(Ipv4 other) const { return (value_ >> 8) == (other.value_ >> 8); }
    auto operator<=>(const Ipv4&) const = default;

private:
    std::uint32_t value_ = 0;
};

struct Endpoint {
    Ipv4 address;
    std::uint16_t port = 0;
    Protocol protocol = Protocol::SSH;

    std::string str() const;
    auto operator<=>(const Endpoint&) const = default;
};

std::optional<Protocol> protocol_for_port(std::uint16_t port);
const std::vector<std::uint16_t>& default_ports();

struct Credential {
    std::string user;
    std::string password;
    auto operator<=>(const Credential&) const = default;
};

std::int64_t now_ms();

}  // namespace hpfp
