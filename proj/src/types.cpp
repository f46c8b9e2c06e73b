#include "hpfp/types.hpp"

#include <arpa/inet.h>

#include <array>
#include <chrono>
#include <utility>

namespace hpfp {

namespace {

constexpr std::array<std::pair<Protocol, std::string_view>, 10> kProtocols{{
    {Protocol::SSH, "SSH"},
    {Protocol::Telnet, "Telnet"},
    {Protocol::HTTP, "HTTP"},
    {Protocol::HTTPS, "HTTPS"},
    {Protocol::FTP, "FTP"},
    {Protocol::SMTP, "SMTP"},
    {Protocol::IMAP, "IMAP"},
    {Protocol::Modbus, "Modbus"},
    {Protocol::S7, "S7"},
    {Protocol::ATG, "ATG"},
}};

constexpr std::array<std::pair<Stage, std::string_view>, 10> kStages{{
    {Stage::Banner, "banner"},
    {Stage::HttpBody, "http_body"},
    {Stage::Certificate, "certificate"},
    {Stage::Handshake, "handshake"},
    {Stage::Library, "library"},
    {Stage::StaticCommand, "static_command"},
    {Stage::Keyword, "keyword"},
    {Stage::Fqdn, "fqdn"},
    {Stage::AsIsp, "as_isp"},
    {Stage::Cloud, "cloud"},
}};

constexpr std::array<std::pair<MatchKind, std::string_view>, 4> kKinds{{
    {MatchKind::Exact, "exact"},
    {MatchKind::Prefix, "prefix"},
    {MatchKind::Substring, "substring"},
    {MatchKind::Regex, "regex"},
}};

template <typename E, std::size_t N>
std::string_view lookup_name(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
    for (const auto& [e, name] : table)
        if (e == v) return name;
    return "?";
}

template <typename E, std::size_t N>
std::optional<E> lookup_value(const std::array<std::pair<E, std::string_view>, N>& table,
                              std::string_view text) {
    for (const auto& [e, name] : table)
        if (name == text) return e;
    return std::nullopt;
}

}  // namespace

std::string_view to_string(Protocol p) { return lookup_name(kProtocols, p); }
std::string_view to_string(Stage s) { return lookup_name(kStages, s); }
std::string_view to_string(MatchKind k) { return lookup_name(kKinds, k); }
std::optional<Protocol> parse_protocol(std::string_view t) { return lookup_value(kProtocols, t); }
std::optional<Stage> parse_stage(std::string_view t) { return lookup_value(kStages, t); }
std::optional<MatchKind> parse_match_kind(std::string_view t) { return lookup_value(kKinds, t); }

bool is_signature_stage(Stage s) {
    switch (s) {
        case Stage::Fqdn:
        case Stage::AsIsp:
        case Stage::Cloud:
            return false;
        default:
            return true;
    }
}

bool is_http_family(Protocol p) { return p == Protocol::HTTP || p == Protocol::HTTPS; }

bool protocol_covers(Protocol sig, Protocol endpoint) {
    return sig == endpoint || (sig == Protocol::HTTP && endpoint == Protocol::HTTPS);
}

std::optional<Ipv4> Ipv4::parse(std::string_view text) {
    std::string s(text);
    in_addr a{};
    if (inet_pton(AF_INET, s.c_str(), &a) != 1) return std::nullopt;
    return Ipv4(ntohl(a.s_addr));
}

std::string Ipv4::str() const {
    in_addr a{};
    a.s_addr = htonl(value_);
    char buf[INET_ADDRSTRLEN];
    inet_ntop(AF_INET, &a, buf, sizeof buf);
    return buf;
}

std::string Endpoint::str() const {
    return address.str() + ":" + std::to_string(port) + "/" + std::string(to_string(protocol));
}

std::optional<Protocol> protocol_for_port(std::uint16_t port) {
    switch (port) {
        case 22:
        case 2222:
            return Protocol::SSH;
        case 23:
        case 2323:
            return Protocol::Telnet;
        case 21:
            return Protocol::FTP;
        case 25:
            return Protocol::SMTP;
        case 143:
            return Protocol::IMAP;
        case 80:
        case 8080:
        case 8888:
            return Protocol::HTTP;
        case 443:
        case 8443:
            return Protocol::HTTPS;
        case 102:
            return Protocol::S7;
        case 502:
            return Protocol::Modbus;
        case 10001:
            return Protocol::ATG;
        default:
            return std::nullopt;
    }
}

const std::vector<std::uint16_t>& default_ports() {
    static const std::vector<std::uint16_t> ports{21,   22,   23,   25,   80,   102,  143,  443,
                                                  502,  2222, 2323, 8080, 8443, 8888, 10001};
    return ports;
}

std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace hpfp
