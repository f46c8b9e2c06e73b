#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "hpfp/bytes.hpp"
#include "hpfp/frames.hpp"
#include "hpfp/mimic_fleet.hpp"
#include "hpfp/net.hpp"

using namespace hpfp;
using namespace hpfp::mimic;
using namespace std::chrono_literals;

namespace {

const ProfileLibrary& library() {
    static ProfileLibrary lib = ProfileLibrary::load_dir(default_profile_dir());
    return lib;
}

FleetOptions opts(std::uint32_t third_octet) {
    FleetOptions o;
    o.first_address = Ipv4(0x7f000001u | (third_octet << 8) | (0x21u << 16));
    return o;
}

Bytes exchange(const Endpoint& ep, std::string_view request, bool* closed = nullptr) {
    auto c = net::connect_tcp(ep.address, ep.port, 2000ms);
    EXPECT_TRUE(c.ok()) << c.error;
    if (!request.empty()) c.conn.send(request);
    net::ReadOptions o;
    o.first = 2000ms;
    o.idle = 300ms;
    o.total = 3000ms;
    auto r = c.conn.read(o);
    if (closed) *closed = r.peer_closed;
    return r.data;
}

}  // namespace

TEST(MimicProfile, ParsesSectionsVariablesAndAppends) {
    auto src = parse_profile_source(R"(
[profile]
name = demo
honeypot = Demo
var.who = world
var.msg = hello ${who}

[listener echo]
port = 7
protocol = Telnet
engine = line
greeting = ${msg}\r\n
greeting += !
rule = static_command | exact | ping | send | pong\n
rule = - | regex | ^q(uit)?$ | send_close | bye\n
fallback = send | what?\n

[variant demo-2]
var.who = moon
echo.rule = - | exact | ping | send | PONG\n

[mutation static_command]
echo.fallback = close
)");
    ProfileLibrary lib;
    lib.add(src);
    const auto& p = lib.at("demo");
    ASSERT_EQ(p.listeners.size(), 1u);
    EXPECT_EQ(*p.listeners[0].bytes("greeting"), "hello world\r\n!");
    auto rules = p.listeners[0].rules();
    ASSERT_EQ(rules.size(), 2u);
    EXPECT_EQ(script_step(rules, p.listeners[0].fallback(), "ping").payload, "pong\n");
    EXPECT_EQ(script_step(rules, p.listeners[0].fallback(), "q").payload, "bye\n");
    EXPECT_EQ(script_step(rules, p.listeners[0].fallback(), "zzz").payload, "what?\n");

    const auto& v = lib.at("demo-2");
    EXPECT_TRUE(v.is_variant);
    EXPECT_EQ(v.base, "demo");
    EXPECT_EQ(*v.listeners[0].bytes("greeting"), "hello moon\r\n!");
    auto vr = v.listeners[0].rules();
    ASSERT_EQ(vr.size(), 3u);
    EXPECT_EQ(script_step(vr, v.listeners[0].fallback(), "ping").payload, "PONG\n");

    auto m = lib.mutate("demo", Stage::StaticCommand);
    EXPECT_EQ(m.name, "demo~static_command");
    EXPECT_EQ(m.mutated_stage, Stage::StaticCommand);
    auto mr = m.listeners[0].rules();
    ASSERT_EQ(mr.size(), 1u);
    EXPECT_EQ(script_step(mr, m.listeners[0].fallback(), "ping").action, Action::Close);
}

TEST(MimicProfile, RejectsMalformedInput) {
    EXPECT_THROW(parse_profile_source("name = x\n"), ProfileError);
    EXPECT_THROW(parse_profile_source("[profile]\nname x\n"), ProfileError);
    EXPECT_THROW(parse_profile_source("[weird]\n"), ProfileError);
    EXPECT_THROW(parse_profile_source("[mutation cloud]\n"), ProfileError);
    ProfileLibrary lib;
    EXPECT_THROW(lib.add(parse_profile_source(
                     "[profile]\nname = a\nhoneypot = A\n[listener l]\nport = 1\nprotocol = FTP\n"
                     "engine = line\nrule = - | regex | ( | send | x\n")),
                 ProfileError);
    EXPECT_THROW(lib.add(parse_profile_source(
                     "[profile]\nname = a\nhoneypot = A\n[listener l]\nport = 1\nprotocol = FTP\n"
                     "engine = line\ngreeting = ${nope}\n")),
                 ProfileError);
    EXPECT_THROW(lib.add(parse_profile_source("[profile]\nname = a\n")), ProfileError)
        << "honeypot kind needs a honeypot type";
}

TEST(MimicProfile, BundledRosterHasTwelveHoneypots) {
    auto hp = library().select(ProfileKind::Honeypot);
    std::set<std::string> types;
    for (const auto& p : hp) types.insert(*p.honeypot);
    EXPECT_EQ(hp.size(), 12u);
    EXPECT_EQ(types, (std::set<std::string>{"Kippo", "Cowrie", "Glastopf", "Dionaea", "Nepenthes",
                                            "Amun(FTP)", "Amun(SMTP)", "Amun(IMAP)", "Amun(HTTP)",
                                            "Conpot", "Gaspot", "MTPot"}));
    EXPECT_GE(library().select(ProfileKind::Genuine).size(), 6u);
    EXPECT_TRUE(library().find("cowrie-1.5.1"));
    EXPECT_TRUE(library().find("kippo-banner-17"));
    EXPECT_TRUE(library().find("dionaea-0.6.0"));
}

TEST(MimicProfile, EveryMutationCompiles) {
    for (const auto& p : library().select(ProfileKind::Honeypot)) {
        auto stages = library().mutation_stages(p.name);
        EXPECT_FALSE(stages.empty()) << p.name;
        for (auto st : stages) EXPECT_NO_THROW(library().mutate(p.name, st)) << p.name;
    }
}

TEST(MimicFleet, EmptyFleetHasValidManifest) {
    auto f = Fleet::spawn({}, opts(1));
    EXPECT_TRUE(f->manifest().entries.empty());
    auto round = FleetManifest::from_json(f->manifest().to_json());
    EXPECT_TRUE(round.entries.empty());
}

TEST(MimicFleet, RefusesNonLoopbackAndPortConflicts) {
    FleetOptions o;
    o.first_address = *Ipv4::parse("192.0.2.10");
    EXPECT_THROW(Fleet::spawn({library().at("gaspot-default")}, o), FleetError);

    auto a = Fleet::spawn({library().at("gaspot-default")}, opts(2));
    try {
        Fleet::spawn({library().at("gaspot-default")}, opts(2));
        FAIL() << "expected a port conflict";
    } catch (const FleetError& e) {
        EXPECT_NE(std::string(e.what()).find("30001"), std::string::npos) << e.what();
    }
}

TEST(MimicFleet, ManifestRoundTripsAndMapsPorts) {
    auto f = Fleet::spawn({library().at("conpot-default"), library().at("gaspot-default")}, opts(3));
    const auto& m = f->manifest();
    EXPECT_EQ(m.entries.size(), 6u);
    EXPECT_EQ(m.addresses().size(), 2u);
    auto round = FleetManifest::from_json(m.to_json());
    ASSERT_EQ(round.entries.size(), m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        EXPECT_EQ(round.entries[i].endpoint, m.entries[i].endpoint);
        EXPECT_EQ(round.entries[i].profile, m.entries[i].profile);
    }
    auto gas = m.by_profile("gaspot-default");
    ASSERT_EQ(gas.size(), 1u);
    EXPECT_EQ(gas[0]->endpoint.port, 30001);
    EXPECT_EQ(gas[0]->endpoint.protocol, Protocol::ATG);
}

TEST(MimicFleet, ScriptedExchanges) {
    auto f = Fleet::spawn({library().at("gaspot-default"), library().at("conpot-default"),
                           library().at("mtpot-default")},
                          opts(4));
    const auto& m = f->manifest();
    auto ep = [&](const char* profile, Protocol p) {
        for (auto* e : m.by_profile(profile))
            if (e->endpoint.protocol == p) return e->endpoint;
        throw std::runtime_error("no endpoint");
    };
    EXPECT_EQ(exchange(ep("gaspot-default", Protocol::ATG), "\x01I30100\n"), "9999FF1B\n");
    bool closed = false;
    auto modbus = exchange(ep("conpot-default", Protocol::Modbus), frames::modbus_malformed_probe(), &closed);
    EXPECT_TRUE(modbus.empty());
    EXPECT_TRUE(closed);

    auto c = net::connect_tcp(ep("mtpot-default", Protocol::Telnet).address,
                              ep("mtpot-default", Protocol::Telnet).port, 2000ms);
    ASSERT_TRUE(c.ok());
    net::ReadOptions o;
    o.first = 2000ms;
    o.idle = 300ms;
    auto greet = c.conn.read(o);
    EXPECT_EQ(to_hex(greet.data), "fffb01fffb03fffc27fffe01fffd03fffe22fffd27fffd18fffe1f");
    c.conn.send(frames::telnet_cmd(frames::WILL, frames::OPT_LINEMODE));
    auto reply = c.conn.read(o);
    EXPECT_EQ(to_hex(reply.data), "fffc22");
}

TEST(MimicFleet, BanListResetsNamedSource) {
    ProfileLibrary lib;
    lib.add(parse_profile_source(
        "[profile]\nname = banner\nkind = stub\nban = 127.0.0.1\n"
        "[listener ftp]\nport = 21\nprotocol = FTP\nengine = line\ngreeting = 220 hi\\r\\n\n"));
    auto f = Fleet::spawn({lib.at("banner")}, opts(5));
    auto ep = f->manifest().entries[0].endpoint;
    auto read_from = [&](const char* src) {
        auto c = net::connect_tcp(ep.address, ep.port, 2000ms, Ipv4::parse(src));
        EXPECT_TRUE(c.ok()) << c.error;
        net::ReadOptions o;
        o.first = 2000ms;
        o.idle = 200ms;
        return c.conn.read(o);
    };
    auto banned = read_from("127.0.0.1");
    EXPECT_TRUE(banned.data.empty());
    EXPECT_TRUE(banned.reset);
    auto other = read_from("127.0.0.2");
    EXPECT_EQ(other.data, "220 hi\r\n");
}

TEST(MimicFleet, ClampedWindowIsVisibleToTheClient) {
    auto f = Fleet::spawn({library().at("nepenthes-default")}, opts(6));
    const auto& e = f->manifest().entries[0];
    ASSERT_TRUE(e.window_clamp.has_value());
    auto c = net::connect_tcp(e.endpoint.address, e.endpoint.port, 2000ms);
    ASSERT_TRUE(c.ok());
    auto w = net::peer_window(c.conn.fd());
    ASSERT_TRUE(w.has_value());
    EXPECT_EQ(*w, 4096u);
}

TEST(MimicFleet, TracksPeakConnections) {
    auto f = Fleet::spawn({library().at("genuine-ftp")}, opts(7));
    auto ep = f->manifest().entries[0].endpoint;
    std::vector<net::ConnectResult> conns;
    for (int i = 0; i < 3; ++i) conns.push_back(net::connect_tcp(ep.address, ep.port, 2000ms));
    std::this_thread::sleep_for(300ms);
    EXPECT_EQ(f->peak_per_address(), 3);
    conns.clear();
    f->stop();
    EXPECT_EQ(f->connections_served(), 3u);
}
