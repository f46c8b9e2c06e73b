#include "hpfp/records.hpp"

#include <set>

#include "hpfp/bytes.hpp"

namespace hpfp {

using json = nlohmann::json;

namespace {

template <class T, class Parse>
T parsed(const json& j, const char* key, Parse parse) {
    auto text = j.at(key).get<std::string>();
    auto v = parse(text);
    if (!v) throw std::runtime_error(std::string("bad ") + key + ": " + text);
    return *v;
}

json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

json trace_json(const std::vector<StageOutcome>& t) {
    json a = json::array();
    for (const auto& o : t) a.push_back(to_json(o));
    return a;
}

std::vector<StageOutcome> trace_from(const json& j) {
    std::vector<StageOutcome> out;
    for (const auto& o : j) out.push_back(stage_outcome_from_json(o));
    return out;
}

}  // namespace

const ProbeTranscript* ScanSession::transcript(TranscriptId id) const {
    if (id >= 1 && id <= transcripts.size() && transcripts[id - 1].id == id) return &transcripts[id - 1];
    for (const auto& t : transcripts)
        if (t.id == id) return &t;
    return nullptr;
}

SessionSummary summarize(const ScanSession& s) {
    SessionSummary out;
    std::set<Ipv4> hosts;
    std::set<Endpoint> endpoints;
    for (const auto& v : s.verdicts) {
        if (v.pipeline == PipelineKind::Probe) {
            hosts.insert(v.endpoint.address);
            endpoints.insert(v.endpoints.begin(), v.endpoints.end());
        }
        if (v.error) ++out.errors;
        if (!v.is_honeypot || !v.honeypot) {
            ++out.negatives;
            continue;
        }
        auto& m = v.pipeline == PipelineKind::Probe ? out.probe : out.metascan;
        ++m[*v.honeypot];
    }
    out.hosts = static_cast<int>(hosts.size());
    out.endpoints = static_cast<int>(endpoints.size());
    return out;
}

json to_json(const Endpoint& e) {
    return {{"address", e.address.str()}, {"port", e.port}, {"protocol", to_string(e.protocol)}};
}

Endpoint endpoint_from_json(const json& j) {
    Endpoint e;
    e.address = parsed<Ipv4>(j, "address", [](std::string_view t) { return Ipv4::parse(t); });
    e.port = j.at("port").get<std::uint16_t>();
    e.protocol = parsed<Protocol>(j, "protocol", [](std::string_view t) { return parse_protocol(t); });
    return e;
}

json to_json(const StageOutcome& o) {
    return {{"stage", to_string(o.stage)},
            {"status", to_string(o.status)},
            {"evidence", o.evidence},
            {"matched_signatures", o.matched_signatures},
            {"notes", o.notes}};
}

StageOutcome stage_outcome_from_json(const json& j) {
    StageOutcome o;
    o.stage = parsed<Stage>(j, "stage", [](std::string_view t) { return parse_stage(t); });
    o.status = parsed<StageStatus>(j, "status", [](std::string_view t) { return parse_stage_status(t); });
    o.evidence = j.value("evidence", std::vector<TranscriptId>{});
    o.matched_signatures = j.value("matched_signatures", std::vector<std::string>{});
    o.notes = j.value("notes", std::vector<std::string>{});
    return o;
}

json to_json(const Verdict& v) {
    json eps = json::array();
    for (const auto& e : v.endpoints) eps.push_back(to_json(e));
    json cands = json::array();
    for (const auto& c : v.candidates)
        cands.push_back({{"honeypot", c.honeypot}, {"passed", c.passed}, {"trace", trace_json(c.trace)}});
    return {{"session_id", v.session_id},
            {"pipeline", to_string(v.pipeline)},
            {"endpoint", to_json(v.endpoint)},
            {"is_honeypot", v.is_honeypot},
            {"honeypot", opt(v.honeypot)},
            {"research", v.research},
            {"stage_trace", trace_json(v.stage_trace)},
            {"endpoints", eps},
            {"entry_hits", v.entry_hits},
            {"candidates", cands},
            {"error", opt(v.error)}};
}

Verdict verdict_from_json(const json& j) {
    Verdict v;
    v.session_id = j.value("session_id", "");
    v.pipeline = parsed<PipelineKind>(j, "pipeline", [](std::string_view t) { return parse_pipeline_kind(t); });
    v.endpoint = endpoint_from_json(j.at("endpoint"));
    v.is_honeypot = j.at("is_honeypot").get<bool>();
    v.honeypot = opt_string(j, "honeypot");
    v.research = j.value("research", false);
    v.stage_trace = trace_from(j.at("stage_trace"));
    for (const auto& e : j.value("endpoints", json::array())) v.endpoints.push_back(endpoint_from_json(e));
    v.entry_hits = j.value("entry_hits", std::vector<std::string>{});
    for (const auto& c : j.value("candidates", json::array()))
        v.candidates.push_back({c.at("honeypot").get<std::string>(), trace_from(c.at("trace")),
                                c.at("passed").get<bool>()});
    v.error = opt_string(j, "error");
    return v;
}

json to_json(const ProbeTranscript& t) {
    return {{"id", t.id},
            {"endpoint", to_json(t.endpoint)},
            {"stage", to_string(t.stage)},
            {"step", t.step},
            {"request", escape(t.request)},
            {"response", escape(t.response)},
            {"subject", escape(t.subject)},
            {"connect_latency_ms", t.connect_latency_ms},
            {"disconnected_by_peer", t.disconnected_by_peer},
            {"start_ms", t.start_ms},
            {"end_ms", t.end_ms},
            {"error", opt(t.error)},
            {"note", t.note}};
}

ProbeTranscript transcript_from_json(const json& j) {
    ProbeTranscript t;
    t.id = j.at("id").get<TranscriptId>();
    t.endpoint = endpoint_from_json(j.at("endpoint"));
    t.stage = parsed<Stage>(j, "stage", [](std::string_view s) { return parse_stage(s); });
    t.step = j.value("step", "");
    t.request = unescape(j.value("request", ""));
    t.response = unescape(j.value("response", ""));
    t.subject = unescape(j.value("subject", ""));
    t.connect_latency_ms = j.value("connect_latency_ms", std::int64_t(0));
    t.disconnected_by_peer = j.value("disconnected_by_peer", false);
    t.start_ms = j.value("start_ms", std::int64_t(0));
    t.end_ms = j.value("end_ms", std::int64_t(0));
    t.error = opt_string(j, "error");
    t.note = j.value("note", "");
    return t;
}

json to_json(const HoneyscoreRecord& h) {
    return {{"address", h.address.str()}, {"score", h.score ? json(*h.score) : json(nullptr)}};
}

HoneyscoreRecord honeyscore_from_json(const json& j) {
    HoneyscoreRecord h;
    h.address = parsed<Ipv4>(j, "address", [](std::string_view t) { return Ipv4::parse(t); });
    if (j.contains("score") && !j.at("score").is_null()) h.score = checked_honeyscore(j.at("score").get<double>());
    return h;
}

json session_header(const ScanSession& s) {
    return {{"session_id", s.session_id},
            {"started_ms", s.started_ms},
            {"finished_ms", s.finished_ms},
            {"targets", s.targets},
            {"exclusions", s.exclusions},
            {"ports", s.ports},
            {"scanner_identity", s.scanner_identity},
            {"credential_probe", s.credential_probe},
            {"credential_scope", s.credential_scope},
            {"metascan", s.metascan},
            {"metascan_incomplete", s.metascan_incomplete},
            {"warnings", s.warnings}};
}

ScanSession session_from_header(const json& j) {
    ScanSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.started_ms = j.value("started_ms", std::int64_t(0));
    s.finished_ms = j.value("finished_ms", std::int64_t(0));
    s.targets = j.value("targets", std::vector<std::string>{});
    s.exclusions = j.value("exclusions", std::vector<std::string>{});
    s.ports = j.value("ports", std::vector<std::uint16_t>{});
    s.scanner_identity = j.value("scanner_identity", "default");
    s.credential_probe = j.value("credential_probe", false);
    s.credential_scope = j.value("credential_scope", "");
    s.metascan = j.value("metascan", "off");
    s.metascan_incomplete = j.value("metascan_incomplete", false);
    s.warnings = j.value("warnings", std::vector<std::string>{});
    return s;
}

std::string to_lines(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

std::vector<json> parse_lines(std::string_view text) {
    std::vector<json> out;
    std::size_t n = 0;
    for (auto line : split_lines(text)) {
        ++n;
        auto t = trim(line);
        if (t.empty()) continue;
        auto j = json::parse(t, nullptr, false);
        if (j.is_discarded()) throw std::runtime_error("line " + std::to_string(n) + ": malformed JSON");
        out.push_back(std::move(j));
    }
    return out;
}

}  // namespace hpfp
