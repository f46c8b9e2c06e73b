#include "hpfp/mimic_fleet.hpp"

#include <netinet/in.h>
#include <linux/tcp.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <functional>

#include <nlohmann/json.hpp>

#include "hpfp/bytes.hpp"
#include "hpfp/frames.hpp"
#include "hpfp/ssh.hpp"
#include "hpfp/tls.hpp"

namespace hpfp::mimic {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Fleet::Bound {
    const MimicProfile* profile = nullptr;
    MimicProfile owned;
    Listener listener;
    Ipv4 address;
    net::Socket sock;
    std::vector<Rule> rules;
    Rule fallback;
    std::shared_ptr<SSL_CTX> tls;
    ssh::ServerBehaviour ssh;
};

namespace {

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
        s.replace(pos, from.size(), to);
    return s;
}

std::vector<std::string> csv(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        auto piece = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
        if (!piece.empty()) out.emplace_back(piece);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

ssh::Reaction parse_reaction(const std::string& text) {
    auto f = split_fields(text);
    ssh::Reaction r;
    if (f[0] == "disconnect") r.kind = ssh::Reaction::Kind::Disconnect;
    else if (f[0] == "line") r.kind = ssh::Reaction::Kind::Line;
    else if (f[0] == "close") r.kind = ssh::Reaction::Kind::Close;
    else throw ProfileError("ssh", "unknown reaction '" + f[0] + "'");
    if (f.size() > 1) r.text = unescape(f[1]);
    return r;
}

bool credential_matches(const std::string& pattern, const Credential& c) {
    auto colon = pattern.find(':');
    if (colon == std::string::npos) return false;
    auto user = unescape(pattern.substr(0, colon));
    auto pass = unescape(pattern.substr(colon + 1));
    return (user == "*" || user == c.user) && (pass == "*" || pass == c.password);
}

ssh::ServerBehaviour build_ssh(const Listener& l, const std::string& profile_name) {
    ssh::ServerBehaviour b;
    b.version = unescape(l.get_or("version", b.version));
    for (const auto& pre : l.all("pre_banner")) b.pre_banner.push_back(unescape(pre));
    ssh::Kexinit k = ssh::openssh_kexinit();
    if (auto v = l.get("kex")) k.kex = csv(*v);
    if (auto v = l.get("hostkey")) k.hostkey = csv(*v);
    if (auto v = l.get("enc")) k.enc_cs = k.enc_sc = csv(*v);
    if (auto v = l.get("mac")) k.mac_cs = k.mac_sc = csv(*v);
    if (auto v = l.get("comp")) k.comp_cs = k.comp_sc = csv(*v);
    // A fixed cookie keeps transcripts byte-identical between runs.
    auto h = std::hash<std::string>{}(profile_name + "/" + l.name);
    k.cookie.clear();
    for (int i = 0; i < 16; ++i) k.cookie.push_back(static_cast<char>((h >> ((i % 8) * 8)) & 0xff));
    if (auto v = l.get("cookie")) k.cookie = from_hex(*v);
    b.advertised = k;
    if (auto v = l.get("on_bad_length")) b.on_bad_length = parse_reaction(*v);
    if (auto v = l.get("on_repeat_version")) b.on_repeat_version = parse_reaction(*v);
    auto accept = l.all("accept");
    b.accept = [accept](const Credential& c) {
        return std::any_of(accept.begin(), accept.end(),
                           [&](const std::string& p) { return credential_matches(p, c); });
    };
    std::vector<std::pair<Bytes, Bytes>> exec;
    for (const auto& e : l.all("exec")) {
        auto f = split_fields(e);
        exec.emplace_back(unescape(f[0]), f.size() > 1 ? unescape(f[1]) : Bytes());
    }
    Bytes fallback = unescape(l.get_or("exec_fallback", "bash: %s: command not found\\n"));
    b.exec = [exec, fallback](std::string_view cmd) -> Bytes {
        for (const auto& [c, out] : exec)
            if (c == cmd) return out;
        return replace_all(fallback, "%s", cmd);
    };
    return b;
}

CertSpec build_cert(const Listener& l) {
    CertSpec c;
    c.subject_cn = unescape(l.get_or("cert.subject_cn", ""));
    c.subject_o = unescape(l.get_or("cert.subject_o", ""));
    c.subject_c = unescape(l.get_or("cert.subject_c", ""));
    c.issuer_cn = unescape(l.get_or("cert.issuer_cn", c.subject_cn));
    c.issuer_o = unescape(l.get_or("cert.issuer_o", c.subject_o));
    c.issuer_c = unescape(l.get_or("cert.issuer_c", c.subject_c));
    return c;
}

struct Chunk {
    Bytes data;
    bool closed = false;
    bool timed_out = false;
};

Chunk recv_some(net::Conn& conn, net::Millis wait) {
    net::ReadOptions o;
    o.max_bytes = 65536;
    o.first = wait;
    o.idle = wait;
    o.total = wait;
    o.complete = [](std::string_view) { return true; };
    auto r = conn.read(o);
    Chunk c;
    c.data = std::move(r.data);
    c.closed = r.peer_closed && c.data.empty();
    c.timed_out = r.timed_out && c.data.empty();
    return c;
}

// Returns false once the connection should end.
bool perform(net::Conn& conn, const Rule& rule) {
    switch (rule.action) {
        case Action::Send:
            conn.send(rule.payload);
            return true;
        case Action::SendClose:
            conn.send(rule.payload);
            return false;
        case Action::Close:
            return false;
        case Action::Reset:
            conn.abort();
            return false;
        case Action::Silent:
            return true;
    }
    return true;
}

void run_line(net::Conn& conn, const Fleet::Bound& b) {
    const auto& l = b.listener;
    if (auto g = l.bytes("greeting"); g && !g->empty())
        if (!conn.send(*g)) return;
    net::Millis idle(l.get_int("idle_timeout_ms", 60000));
    bool reset_on_idle = l.get_or("on_idle", "close") == "reset";
    bool line_mode = l.engine == Engine::Line;
    Bytes buf;
    auto deadline = Clock::now() + idle;
    for (;;) {
        auto left = std::chrono::duration_cast<net::Millis>(deadline - Clock::now());
        if (left.count() <= 0) {
            if (reset_on_idle) conn.abort();
            return;
        }
        auto c = recv_some(conn, left);
        if (c.closed) return;
        if (c.timed_out) continue;
        if (!l.get_bool("idle_from_connect", false)) deadline = Clock::now() + idle;
        std::vector<Bytes> units;
        if (line_mode) {
            buf += c.data;
            std::size_t nl;
            while ((nl = buf.find('\n')) != Bytes::npos) {
                Bytes unit = buf.substr(0, nl);
                if (!unit.empty() && unit.back() == '\r') unit.pop_back();
                units.push_back(std::move(unit));
                buf.erase(0, nl + 1);
            }
            if (buf.size() >= 4096) {
                units.push_back(buf);
                buf.clear();
            }
        } else {
            units.push_back(std::move(c.data));
        }
        for (const auto& u : units)
            if (!perform(conn, script_step(b.rules, b.fallback, u))) return;
    }
}

void run_http(net::Conn& conn, const Fleet::Bound& b) {
    if (b.tls && !conn.tls_accept(b.tls.get(), net::Millis(5000)).empty()) return;
    net::ReadOptions o;
    o.max_bytes = 65536;
    o.first = net::Millis(10000);
    o.idle = net::Millis(3000);
    o.total = net::Millis(10000);
    o.complete = [](std::string_view d) {
        return d.find("\r\n\r\n") != std::string_view::npos || d.find("\n\n") != std::string_view::npos;
    };
    auto r = conn.read(o);
    if (r.data.empty()) return;
    auto eol = r.data.find('\n');
    Bytes line = r.data.substr(0, eol);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const Rule& rule = script_step(b.rules, b.fallback, line);
    if (rule.action == Action::Send || rule.action == Action::SendClose) {
        conn.send(rule.payload);
        if (conn.is_tls()) conn.shutdown_write();
        return;
    }
    perform(conn, rule);
}

void run_s7(net::Conn& conn, const Fleet::Bound& b) {
    const auto& l = b.listener;
    bool answer_early = l.get_or("pre_negotiation", "drop") == "answer";
    std::vector<frames::SzlRecord> records;
    for (const auto& s : l.all("szl")) {
        auto f = split_fields(s);
        if (f.size() != 2) throw ProfileError(l.name, "szl needs index | text");
        records.push_back({static_cast<std::uint16_t>(std::stoul(f[0])), unescape(f[1])});
    }
    bool cotp = false, negotiated = false;
    Bytes buf;
    for (;;) {
        auto c = recv_some(conn, net::Millis(l.get_int("idle_timeout_ms", 30000)));
        if (c.closed || c.timed_out) return;
        buf += c.data;
        while (auto frame = frames::take_tpkt(buf)) {
            auto req = frames::classify_s7(*frame);
            switch (req.kind) {
                case frames::S7Frame::CotpConnect:
                    conn.send(frames::cotp_connect_confirm());
                    cotp = true;
                    break;
                case frames::S7Frame::SetupCommunication:
                    if (!cotp && !answer_early) return;
                    conn.send(frames::s7_setup_ack(req.pdu_ref));
                    negotiated = true;
                    break;
                case frames::S7Frame::SzlRead: {
                    if (!negotiated && !answer_early) return;
                    std::vector<frames::SzlRecord> sel;
                    for (const auto& r : records)
                        if (req.szl_index == 0 || r.index == req.szl_index || req.szl_id != 0x001c)
                            sel.push_back(r);
                    conn.send(frames::s7_szl_response(req.pdu_ref, req.szl_id, req.szl_index, sel));
                    break;
                }
                case frames::S7Frame::Other:
                    return;
            }
        }
    }
}

Ipv4 nth_address(Ipv4 first, std::size_t i) {
    return Ipv4(first.value() + static_cast<std::uint32_t>(i));
}

std::string stage_list(const std::set<Stage>& s) {
    std::string out;
    for (auto st : s) {
        if (!out.empty()) out += ",";
        out += to_string(st);
    }
    return out;
}

}  // namespace

const Rule& script_step(const std::vector<Rule>& rules, const Rule& fallback,
                        std::string_view received) {
    for (const auto& r : rules)
        if (r.matches(received)) return r;
    return fallback;
}

std::vector<Endpoint> FleetManifest::endpoints() const {
    std::vector<Endpoint> out;
    for (const auto& e : entries) out.push_back(e.endpoint);
    return out;
}

std::vector<std::pair<std::uint16_t, Protocol>> FleetManifest::port_map() const {
    std::map<std::uint16_t, Protocol> m;
    for (const auto& e : entries) m.emplace(e.endpoint.port, e.endpoint.protocol);
    return {m.begin(), m.end()};
}

std::vector<Ipv4> FleetManifest::addresses() const {
    std::vector<Ipv4> out;
    for (const auto& e : entries)
        if (std::find(out.begin(), out.end(), e.endpoint.address) == out.end())
            out.push_back(e.endpoint.address);
    return out;
}

const ManifestEntry* FleetManifest::at(Ipv4 address) const {
    for (const auto& e : entries)
        if (e.endpoint.address == address) return &e;
    return nullptr;
}

const ManifestEntry* FleetManifest::at(const Endpoint& ep) const {
    for (const auto& e : entries)
        if (e.endpoint.address == ep.address && e.endpoint.port == ep.port) return &e;
    return nullptr;
}

std::vector<const ManifestEntry*> FleetManifest::by_profile(const std::string& name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.profile == name) out.push_back(&e);
    return out;
}

std::string FleetManifest::to_json() const {
    json j;
    j["pid"] = pid;
    j["entries"] = json::array();
    for (const auto& e : entries) {
        json x;
        x["profile"] = e.profile;
        x["base"] = e.base;
        x["kind"] = std::string(to_string(e.kind));
        x["honeypot"] = e.honeypot ? json(*e.honeypot) : json(nullptr);
        x["version"] = e.version ? json(*e.version) : json(nullptr);
        x["default_config"] = e.default_config;
        x["mutated_stage"] = e.mutated_stage ? json(std::string(to_string(*e.mutated_stage))) : json(nullptr);
        x["coupled_stages"] = stage_list(e.coupled_stages);
        x["listener"] = e.listener;
        x["address"] = e.endpoint.address.str();
        x["port"] = e.endpoint.port;
        x["protocol"] = std::string(to_string(e.endpoint.protocol));
        x["canonical_port"] = e.canonical_port;
        x["window_clamp"] = e.window_clamp ? json(*e.window_clamp) : json(nullptr);
        j["entries"].push_back(std::move(x));
    }
    return j.dump(2);
}

FleetManifest FleetManifest::from_json(std::string_view text) {
    auto j = json::parse(text);
    FleetManifest m;
    m.pid = j.value("pid", 0L);
    for (const auto& x : j.at("entries")) {
        ManifestEntry e;
        e.profile = x.at("profile").get<std::string>();
        e.base = x.value("base", e.profile);
        auto kind = x.at("kind").get<std::string>();
        e.kind = kind == "genuine" ? ProfileKind::Genuine
                 : kind == "stub"  ? ProfileKind::Stub
                                   : ProfileKind::Honeypot;
        if (!x.at("honeypot").is_null()) e.honeypot = x.at("honeypot").get<std::string>();
        if (!x.at("version").is_null()) e.version = x.at("version").get<std::string>();
        e.default_config = x.value("default_config", true);
        if (!x.at("mutated_stage").is_null())
            e.mutated_stage = parse_stage(x.at("mutated_stage").get<std::string>());
        for (const auto& s : csv(x.value("coupled_stages", std::string())))
            if (auto st = parse_stage(s)) e.coupled_stages.insert(*st);
        e.listener = x.at("listener").get<std::string>();
        auto addr = Ipv4::parse(x.at("address").get<std::string>());
        auto proto = parse_protocol(x.at("protocol").get<std::string>());
        if (!addr || !proto) throw FleetError("bad manifest entry");
        e.endpoint = {*addr, x.at("port").get<std::uint16_t>(), *proto};
        e.canonical_port = x.at("canonical_port").get<std::uint16_t>();
        if (!x.at("window_clamp").is_null()) e.window_clamp = x.at("window_clamp").get<std::uint32_t>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

std::unique_ptr<Fleet> Fleet::spawn(const std::vector<MimicProfile>& profiles, FleetOptions opts) {
    std::unique_ptr<Fleet> f(new Fleet());
    f->opts_ = opts;
    f->manifest_.pid = static_cast<long>(::getpid());
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        Ipv4 addr = nth_address(opts.first_address, i);
        if (!net::is_loopback(addr) && !opts.allow_non_loopback)
            throw FleetError("refusing to bind non-loopback address " + addr.str());
        const auto& p = profiles[i];
        for (const auto& l : p.listeners) {
            auto b = std::make_unique<Bound>();
            b->owned = p;
            b->listener = l;
            b->address = addr;
            std::uint32_t port = static_cast<std::uint32_t>(opts.base_port) + l.port;
            if (port > 65535)
                throw FleetError("port " + std::to_string(port) + " out of range for " + p.name);
            std::optional<int> clamp;
            if (auto c = l.get("window_clamp")) clamp = std::stoi(*c);
            try {
                b->sock = net::listen_tcp(addr, static_cast<std::uint16_t>(port), 128, clamp);
            } catch (const std::system_error& e) {
                throw FleetError("cannot listen on " + addr.str() + ":" + std::to_string(port) +
                                 " (" + p.name + "/" + l.name + "): " + e.code().message());
            }
            b->rules = l.rules();
            b->fallback = l.fallback();
            if (l.get_bool("tls", false)) b->tls = make_server_context(build_cert(l));
            if (l.engine == Engine::Ssh) b->ssh = build_ssh(l, p.name);

            ManifestEntry e;
            e.profile = p.name;
            e.base = p.base.empty() ? p.name : p.base;
            e.kind = p.kind;
            e.honeypot = p.honeypot;
            e.version = p.version;
            e.default_config = p.default_config;
            e.mutated_stage = p.mutated_stage;
            e.coupled_stages = p.coupled_stages;
            e.listener = l.name;
            e.endpoint = {addr, static_cast<std::uint16_t>(port), l.protocol};
            e.canonical_port = l.port;
            if (clamp) {
                int v = 0;
                socklen_t len = sizeof v;
                if (getsockopt(b->sock.fd(), IPPROTO_TCP, TCP_WINDOW_CLAMP, &v, &len) == 0 && v > 0)
                    e.window_clamp = static_cast<std::uint32_t>(v);
            }
            f->manifest_.entries.push_back(std::move(e));
            f->bound_.push_back(std::move(b));
        }
    }
    for (auto& b : f->bound_) b->profile = &b->owned;
    f->wake_fd_ = ::eventfd(0, EFD_CLOEXEC | EFD_NONBLOCK);
    f->acceptor_ = std::thread([fp = f.get()] { fp->accept_loop(); });
    return f;
}

Fleet::~Fleet() { stop(); }

void Fleet::stop() {
    if (stopping_.exchange(true)) return;
    std::uint64_t one = 1;
    if (wake_fd_ >= 0) (void)!::write(wake_fd_, &one, sizeof one);
    if (acceptor_.joinable()) acceptor_.join();
    std::map<int, std::thread> workers;
    std::vector<std::thread> finished;
    {
        std::lock_guard lock(mu_);
        for (auto& [fd, t] : workers_) ::shutdown(fd, SHUT_RDWR);
        workers = std::move(workers_);
        finished = std::move(finished_);
    }
    for (auto& [fd, t] : workers)
        if (t.joinable()) t.join();
    for (auto& t : finished)
        if (t.joinable()) t.join();
    {
        // Workers that finished during the joins above moved themselves here.
        std::lock_guard lock(mu_);
        finished = std::move(finished_);
    }
    for (auto& t : finished)
        if (t.joinable()) t.join();
    bound_.clear();
    if (wake_fd_ >= 0) ::close(wake_fd_);
    wake_fd_ = -1;
}

void Fleet::accept_loop() {
    std::vector<pollfd> fds;
    fds.push_back({wake_fd_, POLLIN, 0});
    for (const auto& b : bound_) fds.push_back({b->sock.fd(), POLLIN, 0});
    while (!stopping_) {
        for (auto& p : fds) p.revents = 0;
        int rc = ::poll(fds.data(), fds.size(), 500);
        {
            std::vector<std::thread> done;
            {
                std::lock_guard lock(mu_);
                done = std::move(finished_);
                finished_.clear();
            }
            for (auto& t : done)
                if (t.joinable()) t.join();
        }
        if (rc <= 0) continue;
        if (fds[0].revents) break;
        for (std::size_t i = 1; i < fds.size(); ++i) {
            if (!(fds[i].revents & POLLIN)) continue;
            for (;;) {
                sockaddr_in sa{};
                socklen_t len = sizeof sa;
                int fd = ::accept4(fds[i].fd, reinterpret_cast<sockaddr*>(&sa), &len, SOCK_CLOEXEC);
                if (fd < 0) break;
                Ipv4 peer(ntohl(sa.sin_addr.s_addr));
                std::lock_guard lock(mu_);
                if (stopping_) {
                    ::close(fd);
                    break;
                }
                auto& active = active_[bound_[i - 1]->address];
                ++active;
                ++active_total_;
                peak_addr_ = std::max(peak_addr_, active);
                peak_total_ = std::max(peak_total_, active_total_);
                workers_.emplace(fd, std::thread([this, i, fd, peer] {
                    handle(i - 1, net::Socket(fd), peer);
                }));
            }
        }
    }
}

void Fleet::handle(std::size_t index, net::Socket sock, Ipv4 peer) {
    const Bound& b = *bound_[index];
    int fd = sock.fd();
    {
        net::Conn conn(std::move(sock));
        bool banned = std::find(b.profile->ban.begin(), b.profile->ban.end(), peer) != b.profile->ban.end();
        try {
            if (banned) {
                conn.abort();
            } else {
                switch (b.listener.engine) {
                    case Engine::Line:
                    case Engine::Raw: run_line(conn, b); break;
                    case Engine::Http: run_http(conn, b); break;
                    case Engine::Ssh: ssh::serve(conn, b.ssh, opts_.ssh_idle); break;
                    case Engine::S7: run_s7(conn, b); break;
                }
            }
        } catch (const std::exception& e) {
            std::fprintf(stderr, "mimic %s/%s: %s\n", b.profile->name.c_str(), b.listener.name.c_str(),
                         e.what());
        }
        // Deregister while the fd is still open so accept() cannot reuse its number yet.
        std::lock_guard lock(mu_);
        --active_[b.address];
        --active_total_;
        ++served_;
        auto it = workers_.find(fd);
        if (it != workers_.end()) {
            finished_.push_back(std::move(it->second));
            workers_.erase(it);
        }
    }
}

int Fleet::peak_per_address() const {
    std::lock_guard lock(mu_);
    return peak_addr_;
}

int Fleet::peak_total() const {
    std::lock_guard lock(mu_);
    return peak_total_;
}

}  // namespace hpfp::mimic
