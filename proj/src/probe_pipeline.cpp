#include "hpfp/probe_pipeline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace hpfp {

std::string_view to_string(StageStatus s) {
    switch (s) {
        case StageStatus::Pass: return "pass";
        case StageStatus::Fail: return "fail";
        case StageStatus::NotApplicable: return "not_applicable";
        case StageStatus::Error: return "error";
        case StageStatus::Skipped: return "skipped";
    }
    return "?";
}

std::optional<StageStatus> parse_stage_status(std::string_view text) {
    for (auto s : {StageStatus::Pass, StageStatus::Fail, StageStatus::NotApplicable, StageStatus::Error,
                   StageStatus::Skipped})
        if (to_string(s) == text) return s;
    return std::nullopt;
}

std::string_view to_string(PipelineKind k) { return k == PipelineKind::Probe ? "probe" : "metascan"; }

std::optional<PipelineKind> parse_pipeline_kind(std::string_view text) {
    if (text == "probe") return PipelineKind::Probe;
    if (text == "metascan") return PipelineKind::Metascan;
    return std::nullopt;
}

bool combine_stage_outcomes(std::span<const StageOutcome> trace) {
    bool any_pass = false;
    for (const auto& o : trace) {
        if (o.status == StageStatus::Pass) any_pass = true;
        else if (o.status != StageStatus::NotApplicable) return false;
    }
    return any_pass;
}

bool certificate_check(const CertificateSummary& summary) {
    return summary.subject_organization == "dionaea.carnivore.it" ||
           summary.subject_common_name == "Nepenthes Development Team";
}

bool stage_applicable(const HoneypotType& candidate, Stage stage, const SignatureSet& set) {
    auto it = set.stage_applicability().find(candidate);
    if (it == set.stage_applicability().end())
        throw std::out_of_range("unknown honeypot type: " + candidate);
    return it->second.count(stage) > 0;
}

namespace {

Verdict without_evidence(Verdict v) {
    v.session_id.clear();
    auto strip = [](std::vector<StageOutcome>& trace) {
        for (auto& o : trace) o.evidence.clear();
    };
    strip(v.stage_trace);
    for (auto& c : v.candidates) strip(c.trace);
    return v;
}

}  // namespace

bool equivalent(const Verdict& a, const Verdict& b) { return without_evidence(a) == without_evidence(b); }

const std::vector<Stage>& probe_stages() {
    static const std::vector<Stage> stages{Stage::Banner,    Stage::HttpBody, Stage::Certificate,
                                           Stage::Handshake, Stage::Library,  Stage::StaticCommand};
    return stages;
}

std::vector<std::vector<Endpoint>> group_by_host(std::span<const Endpoint> endpoints) {
    std::vector<std::vector<Endpoint>> hosts;
    std::map<Ipv4, std::size_t> index;
    for (const auto& ep : endpoints) {
        auto [it, fresh] = index.emplace(ep.address, hosts.size());
        if (fresh) hosts.emplace_back();
        auto& h = hosts[it->second];
        if (std::find(h.begin(), h.end(), ep) == h.end()) h.push_back(ep);
    }
    return hosts;
}

namespace {

std::vector<const Signature*> stage_signatures(const SignatureSet& set, const HoneypotType& c, Stage st) {
    std::vector<const Signature*> out;
    for (const auto& s : set.signatures())
        if (!s.is_marker() && s.honeypot == c && s.stage == st) out.push_back(&s);
    return out;
}

bool covered(const std::vector<const Signature*>& sigs, Protocol p) {
    return std::any_of(sigs.begin(), sigs.end(), [&](const Signature* s) { return protocol_covers(s->protocol, p); });
}

void add_unique(std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

void add_evidence(StageOutcome& o, const ProbeTranscript& t) {
    if (t.id != 0 && std::find(o.evidence.begin(), o.evidence.end(), t.id) == o.evidence.end())
        o.evidence.push_back(t.id);
}

// One host, one pipeline run. Network results that do not depend on the
// candidate are cached so several candidate tracks share them.
class HostRun {
public:
    HostRun(std::span<const Endpoint> host, ProbeEngine& engine, const PipelineConfig& cfg)
        : host_(host.begin(), host.end()), engine_(engine), set_(engine.signatures()), cfg_(cfg) {}

    Verdict run();

private:
    const ProbeTranscript& banner(const Endpoint& ep) {
        auto it = banners_.find(ep);
        if (it == banners_.end()) it = banners_.emplace(ep, engine_.grab_banner(ep)).first;
        return it->second;
    }
    const HandshakeOutcome& handshake(const Endpoint& ep) {
        auto it = handshakes_.find(ep);
        if (it == handshakes_.end()) it = handshakes_.emplace(ep, engine_.handshake_probe(ep)).first;
        return it->second;
    }
    const CertificateResult& certificate(const Endpoint& ep) {
        auto it = certs_.find(ep);
        if (it == certs_.end()) it = certs_.emplace(ep, engine_.fetch_certificate(ep)).first;
        return it->second;
    }
    const LibraryOutcome& library(const Endpoint& ep, const HoneypotType& c) {
        auto it = libraries_.find(ep);
        if (it == libraries_.end()) it = libraries_.emplace(ep, engine_.library_dependency_probe(ep, c)).first;
        return it->second;
    }
    void forget(Stage st) {
        switch (st) {
            case Stage::Banner:
            case Stage::HttpBody: banners_.clear(); break;
            case Stage::Certificate: certs_.clear(); break;
            case Stage::Handshake: handshakes_.clear(); break;
            case Stage::Library: libraries_.clear(); break;
            default: break;
        }
    }

    bool probes_banner(const Endpoint& ep) const {
        return is_http_family(ep.protocol) || engine_.has_banner_signatures(ep.protocol);
    }

    std::vector<Endpoint> routes(const HoneypotType& c, Stage st) const;
    StageOutcome evaluate(const HoneypotType& c, Stage st);
    StageOutcome evaluate_once(const HoneypotType& c, Stage st);
    CandidateTrace track(const HoneypotType& c);

    std::vector<Endpoint> host_;
    ProbeEngine& engine_;
    const SignatureSet& set_;
    const PipelineConfig& cfg_;
    std::map<Endpoint, ProbeTranscript> banners_;
    std::map<Endpoint, HandshakeOutcome> handshakes_;
    std::map<Endpoint, CertificateResult> certs_;
    std::map<Endpoint, LibraryOutcome> libraries_;
};

std::vector<Endpoint> HostRun::routes(const HoneypotType& c, Stage st) const {
    auto sigs = stage_signatures(set_, c, st);
    if (st == Stage::Handshake && sigs.empty()) {
        // Rules built into the handshake probe (SMTP, IMAP, FTP) have no
        // signature rows; route them to the ports the candidate was seen on.
        sigs = stage_signatures(set_, c, Stage::Banner);
        auto body = stage_signatures(set_, c, Stage::HttpBody);
        sigs.insert(sigs.end(), body.begin(), body.end());
    }
    std::vector<Endpoint> out;
    for (const auto& ep : host_) {
        if (!covered(sigs, ep.protocol)) continue;
        if (st == Stage::HttpBody && !is_http_family(ep.protocol)) continue;
        if (st == Stage::Certificate && ep.protocol != Protocol::HTTPS) continue;
        out.push_back(ep);
    }
    return out;
}

StageOutcome HostRun::evaluate(const HoneypotType& c, Stage st) {
    auto o = evaluate_once(c, st);
    if (o.status == StageStatus::Error && cfg_.error_policy == ErrorPolicy::RetryOnce) {
        forget(st);
        auto again = evaluate_once(c, st);
        again.notes.insert(again.notes.begin(), "retried");
        for (auto id : o.evidence)
            if (std::find(again.evidence.begin(), again.evidence.end(), id) == again.evidence.end())
                again.evidence.insert(again.evidence.begin(), id);
        o = std::move(again);
    }
    return o;
}

StageOutcome HostRun::evaluate_once(const HoneypotType& c, Stage st) {
    StageOutcome o;
    o.stage = st;
    if (!stage_applicable(c, st, set_)) {
        o.status = StageStatus::NotApplicable;
        return o;
    }
    auto eps = routes(c, st);
    if (eps.empty()) {
        o.status = StageStatus::Fail;
        o.notes.push_back("no route");
        return o;
    }
    bool all = true;
    bool unreachable = false;
    auto mark = [&](const ProbeTranscript& t) {
        add_evidence(o, t);
        if (t.unreachable()) unreachable = true;
    };
    for (const auto& ep : eps) {
        bool hit = false;
        switch (st) {
            case Stage::Banner: {
                const auto& t = banner(ep);
                mark(t);
                for (const auto& h : match_stage(Stage::Banner, ep.protocol, t.subject, set_, &c)) {
                    add_unique(o.matched_signatures, h.signature->id);
                    hit = true;
                }
                break;
            }
            case Stage::HttpBody: {
                const auto& t = banner(ep);
                mark(t);
                for (const auto& h : match_http_body(t.response, set_)) {
                    if (h.honeypot != c) continue;
                    add_unique(o.matched_signatures, h.signature->id);
                    hit = true;
                }
                break;
            }
            case Stage::Certificate: {
                const auto& r = certificate(ep);
                mark(r.transcript);
                if (r.summary && certificate_check(*r.summary)) {
                    hit = true;
                    o.notes.push_back("dionaea_certificate");
                    for (const auto& h : match_stage(Stage::Certificate, ep.protocol, r.transcript.subject, set_, &c))
                        add_unique(o.matched_signatures, h.signature->id);
                }
                break;
            }
            case Stage::Handshake: {
                const auto& h = handshake(ep);
                for (const auto& a : h.attempts) mark(a);
                mark(h.transcript);
                if (!h.is_deviated) break;
                auto sigs = stage_signatures(set_, c, Stage::Handshake);
                if (!covered(sigs, ep.protocol)) {
                    hit = true;
                } else {
                    std::vector<const ProbeTranscript*> seen{&h.transcript};
                    for (const auto& a : h.attempts) seen.push_back(&a);
                    for (const auto* t : seen)
                        for (const auto& m : match_stage(Stage::Handshake, ep.protocol, t->subject, set_, &c)) {
                            add_unique(o.matched_signatures, m.signature->id);
                            hit = true;
                        }
                }
                if (hit && h.matched_rule) add_unique(o.notes, *h.matched_rule);
                break;
            }
            case Stage::Library: {
                const auto& l = library(ep, c);
                mark(l.transcript);
                for (const auto& m : match_stage(Stage::Library, ep.protocol, l.transcript.subject, set_, &c)) {
                    add_unique(o.matched_signatures, m.signature->id);
                    hit = true;
                }
                break;
            }
            case Stage::StaticCommand: {
                auto s = engine_.static_command_probe(ep, c);
                for (const auto& t : s.transcripts) mark(t);
                hit = s.matched && !s.signatures.empty();
                for (const auto& id : s.signatures) add_unique(o.matched_signatures, id);
                if (s.error && !hit) add_unique(o.notes, *s.error);
                break;
            }
            default: break;
        }
        if (!hit) all = false;
    }
    if (all) o.status = StageStatus::Pass;
    else o.status = unreachable ? StageStatus::Error : StageStatus::Fail;
    return o;
}

CandidateTrace HostRun::track(const HoneypotType& c) {
    CandidateTrace ct;
    ct.honeypot = c;
    bool failed = false;
    for (auto st : probe_stages()) {
        if (failed && !cfg_.full_trace) {
            StageOutcome o;
            o.stage = st;
            o.status = stage_applicable(c, st, set_) ? StageStatus::Skipped : StageStatus::NotApplicable;
            ct.trace.push_back(std::move(o));
            continue;
        }
        auto o = evaluate(c, st);
        if (o.status == StageStatus::Fail || o.status == StageStatus::Error) failed = true;
        ct.trace.push_back(std::move(o));
    }
    ct.passed = combine_stage_outcomes(ct.trace);
    return ct;
}

Verdict HostRun::run() {
    Verdict v;
    v.pipeline = PipelineKind::Probe;
    v.endpoints = host_;
    if (host_.empty()) {
        v.error = "no endpoints";
        return v;
    }

    // Entry: banners everywhere they can say something, plus the HTTP body
    // that comes along with the GET used as the HTTP banner.
    std::map<std::size_t, const Signature*> hits;  // by position in the set
    std::map<HoneypotType, Endpoint> first_seen;
    const Signature* base = set_.signatures().data();
    StageOutcome entry;
    entry.stage = Stage::Banner;
    bool any_reached = false;
    for (const auto& ep : host_) {
        if (!probes_banner(ep)) continue;
        const auto& t = banner(ep);
        add_evidence(entry, t);
        if (!t.unreachable()) any_reached = true;
        auto found = match_banner(t.subject, ep.protocol, set_);
        if (is_http_family(ep.protocol)) {
            auto body = match_http_body(t.response, set_);
            found.insert(found.end(), body.begin(), body.end());
        }
        for (const auto& h : found) {
            hits.emplace(static_cast<std::size_t>(h.signature - base), h.signature);
            first_seen.emplace(h.honeypot, ep);
        }
    }

    std::vector<HoneypotType> candidates;
    for (const auto& [pos, sig] : hits) {
        v.entry_hits.push_back(sig->id);
        if (std::find(candidates.begin(), candidates.end(), sig->honeypot) == candidates.end())
            candidates.push_back(sig->honeypot);
    }

    if (candidates.empty()) {
        v.endpoint = host_.front();
        bool probed = !entry.evidence.empty();
        entry.status = probed && !any_reached ? StageStatus::Error : StageStatus::Fail;
        entry.notes.push_back(probed ? "no signature hit" : "no banner-capable port");
        if (probed && !any_reached) v.error = "unreachable";
        v.stage_trace.push_back(std::move(entry));
        return v;
    }

    for (const auto& c : candidates) {
        v.candidates.push_back(track(c));
        if (v.candidates.back().passed) break;
    }
    auto winner = std::find_if(v.candidates.begin(), v.candidates.end(),
                               [](const CandidateTrace& t) { return t.passed; });
    const CandidateTrace& reported = winner != v.candidates.end() ? *winner : v.candidates.front();
    v.is_honeypot = reported.passed;
    v.honeypot = reported.honeypot;
    v.stage_trace = reported.trace;
    v.endpoint = first_seen.at(reported.honeypot);
    return v;
}

}  // namespace

Verdict run_probe_pipeline(std::span<const Endpoint> host, ProbeEngine& engine, const PipelineConfig& config) {
    return HostRun(host, engine, config).run();
}

Verdict run_probe_pipeline(const Endpoint& endpoint, ProbeEngine& engine, const PipelineConfig& config) {
    return run_probe_pipeline(std::span<const Endpoint>(&endpoint, 1), engine, config);
}

}  // namespace hpfp
