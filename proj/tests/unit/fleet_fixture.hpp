#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpfp/mimic_fleet.hpp"
#include "hpfp/orchestrator.hpp"
#include "hpfp/probe_engine.hpp"
#include "hpfp/signature_store.hpp"

namespace hpfp::testing {

inline const mimic::ProfileLibrary& profile_library() {
    static mimic::ProfileLibrary lib = mimic::ProfileLibrary::load_dir(mimic::default_profile_dir());
    return lib;
}

inline const SignatureSet& bundled_signatures() {
    static SignatureSet set = load_signature_file(default_signature_path());
    return set;
}

// Each test binary region gets its own 127.x.0.0/16 so fleets never collide.
inline mimic::FleetOptions fleet_options(std::uint8_t second_octet, std::uint8_t third_octet = 0) {
    mimic::FleetOptions o;
    o.first_address = Ipv4((127u << 24) | (std::uint32_t(second_octet) << 16) |
                           (std::uint32_t(third_octet) << 8) | 1u);
    return o;
}

inline Endpoint endpoint_of(const mimic::FleetManifest& m, const std::string& profile, Protocol p) {
    for (const auto* e : m.by_profile(profile))
        if (e->endpoint.protocol == p) return e->endpoint;
    throw std::runtime_error("no " + std::string(to_string(p)) + " endpoint for " + profile);
}

inline std::unique_ptr<mimic::Fleet> spawn_named(std::uint8_t second_octet, std::uint8_t third_octet,
                                                const std::vector<std::string>& names) {
    std::vector<mimic::MimicProfile> ps;
    for (const auto& n : names) ps.push_back(profile_library().at(n));
    return mimic::Fleet::spawn(ps, fleet_options(second_octet, third_octet));
}

// Every endpoint a profile listens on, in manifest order.
inline std::vector<Endpoint> host_of(const mimic::FleetManifest& m, const std::string& profile) {
    std::vector<Endpoint> out;
    for (const auto* e : m.by_profile(profile)) out.push_back(e->endpoint);
    return out;
}

inline mimic::MimicProfile inline_profile(const std::string& text) {
    mimic::ProfileLibrary lib;
    lib.add(mimic::parse_profile_source(text, "inline"));
    return lib.profiles().front();
}

// Fast settings for loopback mimics.
inline ProbeConfig quick_config() {
    ProbeConfig c;
    c.connect_timeout = std::chrono::milliseconds(2000);
    c.read_timeout = std::chrono::milliseconds(3000);
    c.banner_idle = std::chrono::milliseconds(3000);
    c.settle = std::chrono::milliseconds(300);
    return c;
}

struct EngineRig {
    TranscriptSink sink;
    RateLimiter limiter{RateLimits{512, 2, std::chrono::milliseconds(0)}};
    ProbeEngine engine;
    explicit EngineRig(ProbeConfig cfg = quick_config())
        : engine(bundled_signatures(), cfg, sink, limiter) {}
};

// A session config that finds every listener of the fleet.
inline ScanConfig scan_config_for(const mimic::FleetManifest& m) {
    ScanConfig c;
    c.ports.clear();
    for (const auto& [port, proto] : m.port_map()) {
        c.ports.push_back(port);
        c.port_protocols[port] = proto;
    }
    c.probe = quick_config();
    c.rate = RateLimits{512, 2, std::chrono::milliseconds(0)};
    c.scan_connect_timeout = std::chrono::milliseconds(1000);
    return c;
}

inline TargetSpec spec_for(const mimic::FleetManifest& m) {
    TargetSpec s;
    for (auto a : m.addresses()) s.targets.push_back(a.str());
    return s;
}

}  // namespace hpfp::testing
