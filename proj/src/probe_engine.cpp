#include "hpfp/probe_engine.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include "hpfp/bytes.hpp"
#include "hpfp/frames.hpp"
#include "hpfp/ssh.hpp"

namespace hpfp {

using Clock = std::chrono::steady_clock;
using net::Millis;

bool ProbeTranscript::unreachable() const {
    return error && (error->rfind("connect:", 0) == 0 || *error == "tls" || *error == "no_tls");
}

TranscriptId TranscriptSink::append(ProbeTranscript t) {
    std::lock_guard lock(mu_);
    t.id = items_.size() + 1;
    items_.push_back(std::move(t));
    return items_.back().id;
}

std::optional<ProbeTranscript> TranscriptSink::get(TranscriptId id) const {
    std::lock_guard lock(mu_);
    if (id == 0 || id > items_.size()) return std::nullopt;
    return items_[id - 1];
}

std::vector<ProbeTranscript> TranscriptSink::snapshot() const {
    std::lock_guard lock(mu_);
    return items_;
}

std::size_t TranscriptSink::size() const {
    std::lock_guard lock(mu_);
    return items_.size();
}

std::optional<std::string> HttpResponse::header(std::string_view name) const {
    for (const auto& [k, v] : headers)
        if (to_lower(k) == to_lower(name)) return v;
    return std::nullopt;
}

namespace {

// Offset of the first byte after the header block, or npos.
std::size_t header_end(std::string_view raw) {
    auto crlf = raw.find("\r\n\r\n");
    auto lf = raw.find("\n\n");
    if (crlf == std::string_view::npos && lf == std::string_view::npos) return std::string_view::npos;
    if (lf == std::string_view::npos || (crlf != std::string_view::npos && crlf < lf)) return crlf + 4;
    return lf + 2;
}

}  // namespace

std::optional<HttpResponse> parse_http_response(std::string_view raw) {
    if (!raw.starts_with("HTTP/")) return std::nullopt;
    HttpResponse r;
    auto end = header_end(raw);
    std::string_view head = end == std::string_view::npos ? raw : raw.substr(0, end);
    auto lines = split_lines(head);
    if (lines.empty()) return std::nullopt;
    r.status_line = std::string(lines[0]);
    auto sp = r.status_line.find(' ');
    if (sp != std::string::npos) r.status = std::atoi(r.status_line.c_str() + sp + 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto colon = lines[i].find(':');
        if (colon == std::string_view::npos) continue;
        r.headers.emplace_back(std::string(trim(lines[i].substr(0, colon))),
                               std::string(trim(lines[i].substr(colon + 1))));
    }
    if (end != std::string_view::npos) r.body = Bytes(raw.substr(end));
    return r;
}

const std::vector<Credential>& default_ssh_credentials() {
    static const std::vector<Credential> v{{"root", "root"},   {"admin", "admin"}, {"root", "1234"},
                                           {"admin", "1234"},  {"root", "123456"}, {"root", ""},
                                           {"admin", ""}};
    return v;
}

const std::vector<Credential>& default_ftp_credentials() {
    static const std::vector<Credential> v{
        {"root", "root"}, {"admin", "admin"}, {"root", "1234"}, {"admin", "1234"}};
    return v;
}

const std::vector<std::string>& deviated_http_servers() {
    static const std::vector<std::string> v{"nginx", "Apache/1.3.29", "BaseHTTP/0.3 Python/2.5.1",
                                            "Microsoft-IIS/5.0"};
    return v;
}

struct ProbeEngine::Session {
    RateLimiter::Permit permit;
    net::Conn conn;
    ProbeTranscript t;
    bool ok = false;

    void send(std::string_view data) {
        t.request += data;
        conn.send(data);
    }

    net::ReadResult read(const net::ReadOptions& o) {
        auto r = conn.read(o);
        t.response += r.data;
        if (r.peer_closed) t.disconnected_by_peer = true;
        return r;
    }
};

ProbeEngine::ProbeEngine(const SignatureSet& set, ProbeConfig config, TranscriptSink& sink,
                         RateLimiter& limiter)
    : set_(set), cfg_(std::move(config)), sink_(sink), limiter_(limiter) {}

ProbeEngine::Session ProbeEngine::open(const Endpoint& ep, Stage stage, std::string step,
                                       bool tls_for_https) {
    Session s;
    s.t.endpoint = ep;
    s.t.stage = stage;
    s.t.step = std::move(step);
    s.permit = limiter_.acquire(ep.address);
    s.t.start_ms = now_ms();
    auto c = net::connect_tcp(ep.address, ep.port, cfg_.connect_timeout, cfg_.source);
    s.t.connect_latency_ms = c.latency_ms;
    if (!c.ok()) {
        s.t.error = "connect:" + c.error;
        return s;
    }
    s.conn = std::move(c.conn);
    if (tls_for_https && ep.protocol == Protocol::HTTPS) {
        auto err = s.conn.tls_connect(cfg_.read_timeout);
        if (!err.empty()) {
            s.t.error = "tls";
            s.t.note = err;
            return s;
        }
    }
    s.ok = true;
    return s;
}

ProbeTranscript ProbeEngine::finish(Session& s) {
    s.t.end_ms = std::max(now_ms(), s.t.start_ms);
    // Let the peer see our FIN and hang up before the permit frees up, so the
    // per-host limit holds on its side of the connection too.
    if (s.conn.fd() >= 0 && !s.t.disconnected_by_peer) {
        s.conn.shutdown_write();
        s.conn.wait_closed(std::min<Millis>(cfg_.settle, Millis(500)));
    }
    s.conn = net::Conn();
    s.permit.release();
    s.t.id = sink_.append(s.t);
    return s.t;
}

namespace {

net::ReadOptions quiet_read(Millis first, Millis settle, std::size_t max = 4096) {
    net::ReadOptions o;
    o.max_bytes = max;
    o.first = first;
    o.idle = settle;
    o.total = first + Millis(5000);
    return o;
}

bool http_complete(std::string_view data) {
    auto end = header_end(data);
    if (end == std::string_view::npos) return false;
    auto r = parse_http_response(data.substr(0, end));
    if (!r) return false;
    auto cl = r->header("Content-Length");
    if (!cl) return false;
    return data.size() - end >= static_cast<std::size_t>(std::atoll(cl->c_str()));
}

bool has_ssh_version_line(std::string_view data) {
    for (std::size_t at = 0; at < data.size();) {
        auto nl = data.find('\n', at);
        if (nl == std::string_view::npos) return false;
        if (data.substr(at).starts_with("SSH-")) return true;
        at = nl + 1;
    }
    return false;
}

Bytes cut_after_ssh_version(std::string_view data) {
    for (std::size_t at = 0; at < data.size();) {
        auto nl = data.find('\n', at);
        if (nl == std::string_view::npos) break;
        if (data.substr(at).starts_with("SSH-")) return Bytes(data.substr(0, nl + 1));
        at = nl + 1;
    }
    return Bytes(data);
}

void mark_timeout(ProbeTranscript& t) {
    if (!t.error && t.response.empty() && !t.disconnected_by_peer) t.error = "timeout";
}

std::string server_header(std::string_view response) {
    auto r = parse_http_response(response);
    if (!r) return {};
    return r->header("Server").value_or("");
}

}  // namespace

bool ProbeEngine::has_banner_signatures(Protocol p) const {
    for (const auto& s : set_.signatures())
        if (!s.is_marker() && s.stage == Stage::Banner && protocol_covers(s.protocol, p)) return true;
    return false;
}

ProbeTranscript ProbeEngine::grab_banner(const Endpoint& ep) {
    if (is_http_family(ep.protocol)) {
        auto t = http_get(ep, "/", Stage::Banner);
        return t;
    }
    auto s = open(ep, Stage::Banner, "banner");
    if (s.ok) {
        if (ep.protocol == Protocol::ATG) s.send(frames::atg_request("I20100"));
        auto o = quiet_read(cfg_.banner_idle, cfg_.settle);
        if (ep.protocol == Protocol::SSH) o.complete = has_ssh_version_line;
        auto r = s.read(o);
        if (r.truncated) s.t.note = "truncated";
        if (ep.protocol == Protocol::SSH) s.t.response = cut_after_ssh_version(s.t.response);
        s.t.subject = s.t.response;
        mark_timeout(s.t);
    }
    return finish(s);
}

ProbeTranscript ProbeEngine::http_get(const Endpoint& ep, std::string_view path, Stage stage) {
    std::string req = "GET " + std::string(path) + " HTTP/1.0\r\n\r\n";
    return http_request(ep, req, stage, "GET " + std::string(path));
}

ProbeTranscript ProbeEngine::http_request(const Endpoint& ep, std::string_view request, Stage stage,
                                          std::string step) {
    auto s = open(ep, stage, std::move(step));
    if (s.ok) {
        s.send(request);
        auto o = quiet_read(cfg_.read_timeout, cfg_.settle, 1u << 20);
        o.complete = http_complete;
        auto r = s.read(o);
        if (r.truncated) s.t.note = "truncated";
        // Entry and library stages look at the Server token; the rest at the whole reply.
        s.t.subject = (stage == Stage::Banner || stage == Stage::Library) ? server_header(s.t.response)
                                                                          : s.t.response;
        mark_timeout(s.t);
    }
    return finish(s);
}

CertificateResult ProbeEngine::fetch_certificate(const Endpoint& ep) {
    CertificateResult out;
    auto s = open(ep, Stage::Certificate, "tls", false);
    if (s.ok) {
        auto err = s.conn.tls_connect(cfg_.read_timeout);
        if (!err.empty()) {
            s.t.error = "no_tls";
            s.t.note = err;
        } else if (auto summary = peer_certificate(s.conn)) {
            out.summary = *summary;
            s.t.response = summary->render();
            s.t.subject = s.t.response;
        } else {
            s.t.error = "no_certificate";
        }
    }
    out.transcript = finish(s);
    return out;
}

// ---- handshake

HandshakeOutcome ProbeEngine::handshake_probe(const Endpoint& ep) {
    HandshakeOutcome out;
    switch (ep.protocol) {
        case Protocol::SSH: out = handshake_ssh(ep); break;
        case Protocol::S7: out = handshake_s7(ep); break;
        case Protocol::Modbus: out = handshake_modbus(ep); break;
        case Protocol::SMTP:
            out = handshake_line(ep, requests::smtp_pass, "220 OK", "smtp_pass");
            break;
        case Protocol::IMAP:
            out = handshake_line(ep, requests::imap_rcpt, "221 Bye Bye", "imap_rcpt");
            break;
        case Protocol::FTP: out = handshake_ftp(ep); break;
        case Protocol::Telnet: out = handshake_telnet(ep); break;
        case Protocol::HTTP:
        case Protocol::HTTPS: out = handshake_http(ep); break;
        case Protocol::ATG: out = handshake_atg(ep); break;
    }
    out.endpoint = ep;
    if (!out.error && out.transcript.unreachable()) out.error = out.transcript.error;
    return out;
}

HandshakeOutcome ProbeEngine::handshake_ssh(const Endpoint& ep) {
    HandshakeOutcome out;
    auto s = open(ep, Stage::Handshake, "ssh_malformed");
    if (s.ok) {
        s.send(requests::ssh_malformed);
        s.read(quiet_read(cfg_.read_timeout, cfg_.settle));
        s.t.subject = s.t.response;
    }
    auto first = finish(s);
    out.transcript = first;
    if (first.unreachable()) return out;
    if (first.response.find("bad packet length") != Bytes::npos ||
        first.response.find("protocol mismatch") != Bytes::npos) {
        out.is_deviated = true;
        out.matched_rule = "ssh_malformed";
        return out;
    }
    out.attempts.push_back(first);
    auto s2 = open(ep, Stage::Handshake, "ssh_double_version");
    if (s2.ok) {
        s2.send(requests::ssh_version_line);
        s2.send(requests::ssh_version_line);
        s2.read(quiet_read(cfg_.read_timeout, cfg_.settle));
        s2.t.subject = s2.t.response;
    }
    out.transcript = finish(s2);
    if (out.transcript.response.find("protocol mismatch\n") != Bytes::npos) {
        out.is_deviated = true;
        out.matched_rule = "ssh_double_version";
    }
    return out;
}

HandshakeOutcome ProbeEngine::handshake_line(const Endpoint& ep, std::string_view request,
                                             std::string_view expected, const char* rule) {
    HandshakeOutcome out;
    auto s = open(ep, Stage::Handshake, rule);
    if (s.ok) {
        s.read(quiet_read(cfg_.banner_idle, cfg_.settle));
        auto greeting = s.t.response.size();
        s.send(request);
        s.read(quiet_read(cfg_.read_timeout, cfg_.settle));
        s.t.subject = s.t.response.substr(greeting);
        s.t.note = "greeting=" + std::to_string(greeting) + " bytes";
        if (trim(s.t.subject) == expected) {
            out.is_deviated = true;
            out.matched_rule = rule;
        }
    }
    out.transcript = finish(s);
    return out;
}

HandshakeOutcome ProbeEngine::handshake_ftp(const Endpoint& ep) {
    HandshakeOutcome out;
    auto s = open(ep, Stage::Handshake, "ftp_window_idle");
    if (s.ok) {
        auto connected = Clock::now();
        auto window = net::peer_window(s.conn.fd());
        if (window && *window != cfg_.ftp_tcp_window) {
            s.read(quiet_read(cfg_.banner_idle, cfg_.settle));
            s.t.subject = "window=" + std::to_string(*window);
            s.t.note = "window mismatch, idle check not run";
        } else {
            Bytes trailing;
            bool closed = s.conn.wait_closed(cfg_.ftp_window, &trailing);
            double secs = std::chrono::duration<double>(Clock::now() - connected).count();
            s.t.response = trailing;
            s.t.disconnected_by_peer = closed;
            std::string w = window ? std::to_string(*window) : "unavailable";
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", secs);
            s.t.subject = "window=" + w + " idle_s=" + (closed ? std::string(buf) : "none");
            if (!window) s.t.note = "window not evaluated";
            if (closed && secs >= cfg_.ftp_idle_min_s && secs <= cfg_.ftp_idle_max_s) {
                out.is_deviated = true;
                out.matched_rule = "ftp_window_idle";
            }
        }
    }
    out.transcript = finish(s);
    return out;
}

HandshakeOutcome ProbeEngine::handshake_telnet(const Endpoint& ep) {
    HandshakeOutcome out;
    auto s = open(ep, Stage::Handshake, "telnet_greeting");
    if (s.ok) {
        s.read(quiet_read(cfg_.banner_idle, cfg_.settle));
        auto text = frames::parse_telnet(s.t.response).text;
        if (trim(text) == "You have connected to the telnet server") {
            s.t.subject = s.t.response;
            out.is_deviated = true;
            out.matched_rule = "telnet_greeting";
        } else if (!s.t.disconnected_by_peer) {
            auto greeting = s.t.response.size();
            s.t.step = "telnet_linemode";
            s.send(frames::telnet_cmd(frames::WILL, frames::OPT_LINEMODE));
            s.read(quiet_read(cfg_.read_timeout, cfg_.settle));
            s.t.subject = s.t.response.substr(greeting);
            for (auto [verb, opt] : frames::parse_telnet(s.t.subject).options) {
                if (verb == frames::WONT && opt == frames::OPT_LINEMODE) {
                    out.is_deviated = true;
                    out.matched_rule = "telnet_linemode";
                }
            }
        }
    }
    out.transcript = finish(s);
    return out;
}

HandshakeOutcome ProbeEngine::handshake_http(const Endpoint& ep) {
    HandshakeOutcome out;
    auto t = http_request(ep, requests::http_malformed, Stage::Handshake, "http_malformed");
    auto server = parse_http_response(t.response);
    if (!t.unreachable() && (!server || !server->header("Server"))) {
        out.attempts.push_back(t);
        t = http_request(ep, requests::http_fallback, Stage::Handshake, "http_fallback");
        server = parse_http_response(t.response);
    }
    out.transcript = t;
    if (server) {
        auto token = server->header("Server");
        auto& dev = deviated_http_servers();
        if (token && std::find(dev.begin(), dev.end(), *token) != dev.end()) {
            out.is_deviated = true;
            out.matched_rule = "http_server";
        }
    }
    return out;
}

HandshakeOutcome ProbeEngine::handshake_s7(const Endpoint& ep) {
    HandshakeOutcome out;
    auto s = open(ep, Stage::Handshake, "s7_protocol_id");
    if (s.ok) {
        s.send(frames::s7_handshake_probe());
        s.read(quiet_read(cfg_.read_timeout, cfg_.settle));
        if (frames::s7_answers_protocol_id(s.t.response)) {
            s.t.subject = s.t.response.substr(7, 1);
            out.is_deviated = true;
            out.matched_rule = "s7_protocol_id";
        }
        mark_timeout(s.t);
    }
    out.transcript = finish(s);
    return out;
}

HandshakeOutcome ProbeEngine::handshake_modbus(const Endpoint& ep) {
    HandshakeOutcome out;
    auto s = open(ep, Stage::Handshake, "modbus_disconnect");
    if (s.ok) {
        s.send(frames::modbus_malformed_probe());
        s.read(quiet_read(cfg_.read_timeout, cfg_.settle));
        if (s.t.disconnected_by_peer && s.t.response.empty()) {
            s.t.subject = "Disconnection";
            out.is_deviated = true;
            out.matched_rule = "modbus_disconnect";
        } else {
            s.t.subject = s.t.response;
            mark_timeout(s.t);
        }
    }
    out.transcript = finish(s);
    return out;
}

HandshakeOutcome ProbeEngine::handshake_atg(const Endpoint& ep) {
    HandshakeOutcome out;
    auto s = open(ep, Stage::Handshake, "atg_i30100");
    if (s.ok) {
        s.send(frames::atg_request("I30100"));
        s.read(quiet_read(cfg_.read_timeout, cfg_.settle));
        s.t.subject = Bytes(trim(s.t.response));
        if (s.t.subject == "9999FF1B") {
            out.is_deviated = true;
            out.matched_rule = "atg_i30100";
        }
        mark_timeout(s.t);
    }
    out.transcript = finish(s);
    return out;
}

// ---- library

LibraryOutcome ProbeEngine::library_dependency_probe(const Endpoint& ep, const HoneypotType& candidate) {
    LibraryOutcome out;
    if (is_http_family(ep.protocol)) {
        out.transcript = http_request(ep, requests::http_options, Stage::Library, "http_options");
    } else {
        auto s = open(ep, Stage::Library, ep.protocol == Protocol::SSH ? "ssh_kexinit" : "greeting");
        if (s.ok && ep.protocol == Protocol::SSH) {
            auto hello = ssh::read_server_hello(s.conn, cfg_.ssh_client_version, cfg_.read_timeout);
            s.t.request = cfg_.ssh_client_version + "\r\n";
            s.t.response = hello.raw;
            if (hello.kexinit) s.t.subject = hello.kexinit->render();
            else s.t.error = "no_kexinit";
        } else if (s.ok) {
            s.read(quiet_read(cfg_.banner_idle, cfg_.settle));
            s.t.subject = s.t.response;
            mark_timeout(s.t);
        }
        out.transcript = finish(s);
    }
    for (const auto& h : match_stage(Stage::Library, ep.protocol, out.transcript.subject, set_, &candidate))
        out.signatures.push_back(h.signature->id);
    out.matched = !out.signatures.empty();
    return out;
}

// ---- static commands

namespace {

std::vector<const Signature*> static_signatures(const SignatureSet& set, const HoneypotType& c,
                                                Protocol p) {
    std::vector<const Signature*> out;
    std::set<Bytes> seen;
    for (const auto& s : set.signatures()) {
        if (s.is_marker() || s.stage != Stage::StaticCommand || s.honeypot != c) continue;
        if (!protocol_covers(s.protocol, p) || !s.command) continue;
        if (seen.insert(*s.command).second) out.push_back(&s);
    }
    return out;
}

void record_match(StaticOutcome& out, const HoneypotType& c, const ProbeTranscript& t,
                  const SignatureSet& set, bool& all) {
    auto m = match_static_command(c, t.request, t.subject, set);
    if (m.matched()) out.signatures.push_back(m.signature->id);
    else all = false;
}

}  // namespace

StaticOutcome ProbeEngine::static_command_probe(const Endpoint& ep, const HoneypotType& candidate) {
    auto sigs = static_signatures(set_, candidate, ep.protocol);
    if (sigs.empty()) {
        StaticOutcome out;
        out.error = "no_signature";
        return out;
    }
    switch (ep.protocol) {
        case Protocol::SSH: return static_ssh(ep, candidate, sigs);
        case Protocol::S7: return static_s7(ep, candidate, sigs);
        default: return static_line(ep, candidate, sigs);
    }
}

StaticOutcome ProbeEngine::static_ssh(const Endpoint& ep, const HoneypotType& c,
                                      const std::vector<const Signature*>& sigs) {
    StaticOutcome out;
    auto cred = set_.session_credential(c, Protocol::SSH);
    auto s = open(ep, Stage::StaticCommand, "ssh_login");
    if (!s.ok) {
        out.transcripts.push_back(finish(s));
        out.error = out.transcripts.back().error;
        return out;
    }
    if (!cred) {
        s.t.error = "no_session_credential";
        out.transcripts.push_back(finish(s));
        out.error = "no_session_credential";
        return out;
    }
    std::string err;
    auto client = ssh::Client::connect(s.conn, cfg_.read_timeout, &err);
    s.t.request = cred->user + ":" + cred->password;
    if (!client) {
        s.t.error = "ssh:" + err;
    } else {
        s.t.response = client->server_version();
        auto auth = client->auth_password(*cred);
        if (auth != ssh::AuthResult::Accepted)
            s.t.error = auth == ssh::AuthResult::Rejected ? "auth_rejected" : "auth_error";
    }
    // The login transcript stays open while commands run on the same connection.
    ProbeTranscript login = s.t;
    bool all = !login.error.has_value();
    std::vector<ProbeTranscript> cmds;
    if (all) {
        for (const auto* sig : sigs) {
            ProbeTranscript t;
            t.endpoint = ep;
            t.stage = Stage::StaticCommand;
            t.step = "exec " + *sig->command;
            t.request = *sig->command;
            t.connect_latency_ms = login.connect_latency_ms;
            t.start_ms = now_ms();
            auto output = client->exec(*sig->command);
            t.end_ms = std::max(now_ms(), t.start_ms);
            if (!output) {
                t.error = "exec_failed";
                t.disconnected_by_peer = client->disconnected();
            } else {
                t.response = *output;
                t.subject = *output;
            }
            cmds.push_back(std::move(t));
        }
    }
    client.reset();
    out.transcripts.push_back(finish(s));
    for (auto& t : cmds) {
        t.id = sink_.append(t);
        if (t.error) all = false;
        else record_match(out, c, t, set_, all);
        out.transcripts.push_back(std::move(t));
    }
    if (login.error) out.error = login.error;
    out.matched = all;
    return out;
}

StaticOutcome ProbeEngine::static_s7(const Endpoint& ep, const HoneypotType& c,
                                     const std::vector<const Signature*>& sigs) {
    StaticOutcome out;
    auto s = open(ep, Stage::StaticCommand, "s7_negotiate");
    auto tpkt_read = quiet_read(cfg_.read_timeout, cfg_.settle);
    tpkt_read.complete = [](std::string_view d) {
        if (d.size() < 4) return false;
        std::size_t len = (static_cast<unsigned char>(d[2]) << 8) | static_cast<unsigned char>(d[3]);
        return d.size() >= len;
    };
    bool all = false;
    std::vector<ProbeTranscript> cmds;
    if (s.ok) {
        s.send(frames::cotp_connect_request());
        auto cc = s.read(tpkt_read);
        s.send(frames::s7_setup_communication(1));
        auto ack = s.read(tpkt_read);
        if (cc.data.empty() || ack.data.empty()) {
            s.t.error = "s7_negotiation";
        } else {
            all = true;
            std::uint16_t ref = 2;
            for (const auto* sig : sigs) {
                ProbeTranscript t;
                t.endpoint = ep;
                t.stage = Stage::StaticCommand;
                t.step = "szl " + *sig->command;
                t.request = *sig->command;
                t.connect_latency_ms = s.t.connect_latency_ms;
                t.start_ms = now_ms();
                auto index = frames::s7_component_index(*sig->command);
                if (!index) {
                    t.error = "unknown_component";
                } else {
                    s.conn.send(frames::s7_szl_request(0x001C, *index, ref++));
                    auto r = s.conn.read(tpkt_read);
                    t.response = r.data;
                    t.disconnected_by_peer = r.peer_closed;
                    if (auto recs = frames::parse_szl_response(r.data)) {
                        for (const auto& rec : *recs)
                            if (rec.index == *index) t.subject = rec.text;
                    } else {
                        t.error = r.data.empty() ? "timeout" : "bad_szl_response";
                    }
                }
                t.end_ms = std::max(now_ms(), t.start_ms);
                cmds.push_back(std::move(t));
            }
        }
    }
    out.transcripts.push_back(finish(s));
    if (out.transcripts.back().error) out.error = out.transcripts.back().error;
    for (auto& t : cmds) {
        t.id = sink_.append(t);
        if (t.error) all = false;
        else record_match(out, c, t, set_, all);
        out.transcripts.push_back(std::move(t));
    }
    out.matched = all;
    return out;
}

StaticOutcome ProbeEngine::static_line(const Endpoint& ep, const HoneypotType& c,
                                       const std::vector<const Signature*>& sigs) {
    StaticOutcome out;
    bool all = true;
    bool speaks_first = ep.protocol != Protocol::ATG;
    for (const auto* sig : sigs) {
        auto s = open(ep, Stage::StaticCommand, "command " + *sig->command);
        if (s.ok) {
            if (speaks_first) s.read(quiet_read(cfg_.banner_idle, cfg_.settle));
            auto greeting = s.t.response.size();
            Bytes wire = ep.protocol == Protocol::ATG ? frames::atg_request(*sig->command)
                                                      : *sig->command + "\r\n";
            s.conn.send(wire);
            s.t.note = "sent " + escape(wire);
            s.t.request = *sig->command;
            s.read(quiet_read(cfg_.read_timeout, cfg_.settle));
            s.t.subject = s.t.response.substr(greeting);
            if (s.t.subject.empty()) mark_timeout(s.t);
        }
        auto t = finish(s);
        if (t.error) {
            all = false;
            if (!out.error) out.error = t.error;
        } else {
            record_match(out, c, t, set_, all);
        }
        out.transcripts.push_back(std::move(t));
    }
    out.matched = all;
    return out;
}

// ---- credentials

CredentialOutcome ProbeEngine::credential_probe(const Endpoint& ep, const std::vector<Credential>& creds) {
    CredentialOutcome out;
    if (!cfg_.credential_probe) {
        out.error = "disabled";
        return out;
    }
    if (ep.protocol != Protocol::SSH && ep.protocol != Protocol::FTP) {
        out.error = "unsupported_protocol";
        return out;
    }
    for (const auto& cred : creds) {
        bool first = out.transcripts.empty();
        auto s = open(ep, Stage::StaticCommand, "credential");
        s.t.request = cred.user + ":" + cred.password;
        bool stop = false;
        if (!s.ok) {
            if (!first) out.banned = true;
            else out.error = s.t.error;
            stop = true;
        } else if (ep.protocol == Protocol::SSH) {
            std::string err;
            auto client = ssh::Client::connect(s.conn, cfg_.read_timeout, &err);
            if (!client) {
                s.t.error = "ssh:" + err;
                if (!first) out.banned = true;
                else out.error = s.t.error;
                stop = true;
            } else {
                auto r = client->auth_password(cred);
                s.t.response = r == ssh::AuthResult::Accepted ? "accepted" : "rejected";
                if (r == ssh::AuthResult::Accepted) {
                    out.accepted = cred;
                    s.t.note = "accepted";
                    stop = true;
                } else if (r == ssh::AuthResult::Error) {
                    s.t.response = "error";
                    out.banned = !first;
                    stop = true;
                }
            }
        } else {
            s.read(quiet_read(cfg_.banner_idle, cfg_.settle));
            auto step = [&](const std::string& line) {
                auto before = s.t.response.size();
                s.send(line + "\r\n");
                s.read(quiet_read(cfg_.read_timeout, cfg_.settle));
                return s.t.response.substr(before);
            };
            if (s.t.response.starts_with("421")) {
                out.banned = true;
                stop = true;
            } else {
                auto user = step("USER " + cred.user);
                auto pass = user.starts_with("230") ? user : step("PASS " + cred.password);
                if (pass.starts_with("230")) {
                    out.accepted = cred;
                    s.t.note = "accepted";
                    stop = true;
                } else if (pass.starts_with("421") || user.starts_with("421")) {
                    out.banned = true;
                    stop = true;
                }
            }
        }
        out.transcripts.push_back(finish(s));
        if (stop) break;
    }
    return out;
}

}  // namespace hpfp
