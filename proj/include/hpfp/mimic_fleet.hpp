#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "hpfp/mimic_profile.hpp"
#include "hpfp/net.hpp"

namespace hpfp::mimic {

struct FleetOptions {
    // Listener port p is bound at base_port + p.
    std::uint16_t base_port = 20000;
    // Profile i gets first_address + i.
    Ipv4 first_address{0x7f0a0001u};  // 127.10.0.1
    bool allow_non_loopback = false;
    net::Millis ssh_idle{10000};
};

struct ManifestEntry {
    std::string profile;
    std::string base;
    ProfileKind kind = ProfileKind::Honeypot;
    std::optional<HoneypotType> honeypot;
    std::optional<std::string> version;
    bool default_config = true;
    std::optional<Stage> mutated_stage;
    std::set<Stage> coupled_stages;
    std::string listener;
    Endpoint endpoint;
    std::uint16_t canonical_port = 0;
    std::optional<std::uint32_t> window_clamp;  // set only when the socket accepted it
};

struct FleetManifest {
    std::vector<ManifestEntry> entries;
    long pid = 0;

    std::vector<Endpoint> endpoints() const;
    // (port, protocol) pairs a scan needs to find every listener.
    std::vector<std::pair<std::uint16_t, Protocol>> port_map() const;
    std::vector<Ipv4> addresses() const;
    const ManifestEntry* at(Ipv4 address) const;
    const ManifestEntry* at(const Endpoint& ep) const;
    std::vector<const ManifestEntry*> by_profile(const std::string& name) const;

    std::string to_json() const;
    static FleetManifest from_json(std::string_view text);
};

class FleetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Fleet {
public:
    // Binds every listener before returning. Throws FleetError naming the port on conflict.
    static std::unique_ptr<Fleet> spawn(const std::vector<MimicProfile>& profiles,
                                        FleetOptions opts = {});
    ~Fleet();
    Fleet(const Fleet&) = delete;
    Fleet& operator=(const Fleet&) = delete;

    const FleetManifest& manifest() const { return manifest_; }
    void stop();

    // Highest number of simultaneously open connections seen on one profile
    // address, and across the fleet.
    int peak_per_address() const;
    int peak_total() const;
    std::uint64_t connections_served() const { return served_.load(); }

    struct Bound;

private:
    Fleet() = default;
    void accept_loop();
    void handle(std::size_t listener, net::Socket sock, Ipv4 peer);

    FleetManifest manifest_;
    FleetOptions opts_;
    std::vector<std::unique_ptr<Bound>> bound_;
    int wake_fd_ = -1;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;

    mutable std::mutex mu_;
    std::map<int, std::thread> workers_;  // keyed by connection fd
    std::vector<std::thread> finished_;
    std::map<Ipv4, int> active_;
    int active_total_ = 0;
    int peak_addr_ = 0;
    int peak_total_ = 0;
    std::atomic<std::uint64_t> served_{0};
};

// The scripted reaction to one unit of input. First matching rule wins,
// otherwise the fallback applies.
const Rule& script_step(const std::vector<Rule>& rules, const Rule& fallback,
                        std::string_view received);

}  // namespace hpfp::mimic
