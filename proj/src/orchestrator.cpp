#include "hpfp/orchestrator.hpp"

#include <algorithm>

#include "hpfp/session_store.hpp"

namespace hpfp {

namespace {

void say(const ScanConfig& c, const std::string& msg) {
    if (c.log) c.log(msg);
}

Verdict error_verdict(const std::vector<Endpoint>& host, const std::string& what) {
    Verdict v;
    v.endpoint = host.front();
    v.endpoints = host;
    StageOutcome o;
    o.stage = Stage::Banner;
    o.status = StageStatus::Error;
    o.notes.push_back(what);
    v.stage_trace.push_back(o);
    v.error = what;
    return v;
}

const std::vector<Credential>* credentials_for(Protocol p) {
    if (p == Protocol::SSH) return &default_ssh_credentials();
    if (p == Protocol::FTP) return &default_ftp_credentials();
    return nullptr;
}

}  // namespace

void check_credential_scope(const TargetSet& targets, const std::string& scope) {
    if (scope.empty()) throw ScopeError("credential probing needs --i-understand-scope naming the target networks");
    TargetSet s;
    try {
        s = ingest_targets(TargetSpec{split_list(scope), {}});
    } catch (const std::exception& e) {
        throw ScopeError(std::string("credential scope: ") + e.what());
    }
    for (const auto& [lo, hi] : targets.addresses.ranges()) {
        AddressSet r;
        r.add(lo, hi);
        r.subtract(s.addresses);
        if (!r.empty())
            throw ScopeError("credential scope " + scope + " does not cover target " + Ipv4(r.ranges().front().first).str());
    }
}

ScanSession run_scan_session(const TargetSpec& spec, const TargetSet& targets, const SignatureSet& set,
                             const ScanConfig& config) {
    if (targets.addresses.empty()) throw TargetError("targets", "empty target set");
    if (config.probe.credential_probe) check_credential_scope(targets, config.credential_scope);
    if (!config.providers.empty() && !config.enrichment)
        throw std::invalid_argument("metascan needs enrichment services");

    ScanSession s;
    s.session_id = config.session_id.empty() ? generate_session_id() : config.session_id;
    s.started_ms = now_ms();
    s.targets = spec.targets;
    s.exclusions = spec.exclusions;
    s.ports = config.ports;
    s.scanner_identity = config.probe.source ? config.probe.source->str() : config.scanner_identity;
    s.credential_probe = config.probe.credential_probe;
    if (s.credential_probe) s.credential_scope = config.credential_scope;
    s.metascan = config.providers.empty() ? "off" : config.metascan_mode;
    s.warnings = targets.warnings;

    TranscriptSink sink;
    RateLimiter limiter(config.rate);
    ProbeEngine engine(set, config.probe, sink, limiter);

    PortScanOptions po;
    po.connect_timeout = config.scan_connect_timeout;
    po.overrides = config.port_protocols;
    po.source = config.probe.source;
    auto addresses = targets.addresses.expand();
    say(config, "port scan: " + std::to_string(addresses.size()) + " addresses x " +
                    std::to_string(config.ports.size()) + " ports");
    auto scan = port_scan(addresses, config.ports, limiter, po);
    std::map<std::string, int> closed;
    for (const auto& e : scan.errors) ++closed[e.error];
    for (const auto& [why, n] : closed)
        if (why != "refused") s.warnings.push_back("port scan: " + std::to_string(n) + " x " + why);

    auto hosts = group_by_host(scan.endpoints);
    say(config, "probing " + std::to_string(hosts.size()) + " hosts, " + std::to_string(scan.endpoints.size()) +
                    " endpoints");
    std::vector<Verdict> verdicts(hosts.size());
    parallel_for(hosts.size(), std::max<std::size_t>(1, config.host_workers), [&](std::size_t i) {
        try {
            verdicts[i] = run_probe_pipeline(hosts[i], engine, config.pipeline);
        } catch (const std::exception& e) {
            verdicts[i] = error_verdict(hosts[i], e.what());
        }
        if (config.probe.credential_probe && !verdicts[i].is_honeypot) {
            for (const auto& ep : hosts[i])
                if (const auto* creds = credentials_for(ep.protocol)) engine.credential_probe(ep, *creds);
        }
    });

    if (!config.providers.empty()) {
        say(config, "metascan over " + std::to_string(config.providers.size()) + " providers");
        auto found = metascan_search(config.ports, config.providers, config.search);
        s.metascan_incomplete = found.incomplete;
        for (const auto& e : found.errors) s.warnings.push_back("metascan: " + e);
        // Provider data outside the operator's targets is not ours to classify.
        std::vector<ProviderRecord> in_scope;
        for (auto& r : found.records)
            if (targets.addresses.contains(r.address)) in_scope.push_back(std::move(r));
        for (auto& v : run_metascan_pipeline(in_scope, set, *config.enrichment)) verdicts.push_back(std::move(v));
    }

    for (auto& v : verdicts) v.session_id = s.session_id;
    s.verdicts = std::move(verdicts);
    s.transcripts = sink.snapshot();
    for (const auto& t : s.transcripts)
        if (!targets.addresses.contains(t.endpoint.address) || targets.excluded.contains(t.endpoint.address))
            throw std::logic_error("transcript " + std::to_string(t.id) + " touches out-of-scope address " +
                                   t.endpoint.address.str());
    s.finished_ms = now_ms();
    return s;
}

// ---- blocked recheck

namespace {

bool reachable(const ProbeTranscript& t) {
    if (t.unreachable()) return false;
    return !(t.response.empty() && t.disconnected_by_peer);
}

}  // namespace

std::vector<BlockCheck> recheck_blocked(const std::vector<Endpoint>& candidates, Ipv4 first_identity,
                                        Ipv4 second_identity, const SignatureSet& set, TranscriptSink& sink,
                                        ProbeConfig base) {
    if (first_identity == second_identity) throw std::invalid_argument("recheck needs two distinct identities");
    RateLimiter limiter;
    auto a_cfg = base, b_cfg = base;
    a_cfg.source = first_identity;
    b_cfg.source = second_identity;
    a_cfg.credential_probe = b_cfg.credential_probe = false;
    ProbeEngine a(set, a_cfg, sink, limiter), b(set, b_cfg, sink, limiter);

    std::vector<BlockCheck> out(candidates.size());
    parallel_for(candidates.size(), 16, [&](std::size_t i) {
        auto& c = out[i];
        c.endpoint = candidates[i];
        auto ta = a.grab_banner(c.endpoint);
        auto tb = b.grab_banner(c.endpoint);
        c.evidence = {ta.id, tb.id};
        c.reachable_first = reachable(ta);
        c.reachable_second = reachable(tb);
        c.blocked_by_first_identity = !c.reachable_first && c.reachable_second;
        c.offline = !c.reachable_first && !c.reachable_second;
    });
    return out;
}

}  // namespace hpfp
