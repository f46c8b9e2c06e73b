#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hpfp/enrichment.hpp"
#include "hpfp/metascan.hpp"
#include "hpfp/probe_engine.hpp"
#include "hpfp/probe_pipeline.hpp"
#include "hpfp/rate_limiter.hpp"
#include "hpfp/records.hpp"
#include "hpfp/targets.hpp"

namespace hpfp {

class ScopeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScanConfig {
    std::vector<std::uint16_t> ports = default_ports();
    // Protocol for ports outside the built-in map, or overriding it.
    std::map<std::uint16_t, Protocol> port_protocols;
    ProbeConfig probe;
    RateLimits rate;
    PipelineConfig pipeline;
    std::size_t host_workers = 32;
    net::Millis scan_connect_timeout{3000};

    // Metascan runs when providers are given; `metascan_mode` is recorded as is.
    std::string metascan_mode = "off";
    std::vector<ProviderClient*> providers;
    Enrichment* enrichment = nullptr;
    SearchOptions search;

    // Required when probe.credential_probe is set: target syntax naming the
    // networks the operator is authorised to test. Every target must fall inside.
    std::string credential_scope;

    std::string session_id;  // generated when empty
    std::string scanner_identity = "default";
    std::function<void(const std::string&)> log;
};

// Throws ScopeError unless `scope` parses and covers every target address.
void check_credential_scope(const TargetSet& targets, const std::string& scope);

// Port scan, host grouping, probe pipeline per host (concurrent), optional
// credential sweep over failed hosts, optional metascan. Never touches an
// excluded address. Per-host failures become error verdicts.
ScanSession run_scan_session(const TargetSpec& spec, const TargetSet& targets, const SignatureSet& set,
                             const ScanConfig& config);

struct BlockCheck {
    Endpoint endpoint;
    bool reachable_first = false;
    bool reachable_second = false;
    bool blocked_by_first_identity = false;
    bool offline = false;
    std::vector<TranscriptId> evidence;
};

// Connects to each endpoint from two source identities. Reachable means the
// connection was established and not reset before the peer sent anything.
std::vector<BlockCheck> recheck_blocked(const std::vector<Endpoint>& candidates, Ipv4 first_identity,
                                        Ipv4 second_identity, const SignatureSet& set, TranscriptSink& sink,
                                        ProbeConfig base = {});

}  // namespace hpfp
