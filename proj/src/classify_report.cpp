#include "hpfp/classify_report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hpfp/bytes.hpp"
#include "hpfp/targets.hpp"

namespace hpfp {

using json = nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<TranscriptId, const ProbeTranscript*> index_of(const std::vector<ProbeTranscript>& ts) {
    std::map<TranscriptId, const ProbeTranscript*> out;
    for (const auto& t : ts) out[t.id] = &t;
    return out;
}

// Stages whose transcripts a marker of `marker_stage` may read.
bool marker_reads(Stage marker_stage, const ProbeTranscript& t) {
    if (t.stage == marker_stage) return true;
    return marker_stage == Stage::HttpBody && t.stage == Stage::Banner && is_http_family(t.endpoint.protocol);
}

}  // namespace

VersionResult detect_version(const Verdict& v, const std::vector<ProbeTranscript>& transcripts,
                             const SignatureSet& set) {
    VersionResult out;
    if (!v.honeypot) return out;
    auto idx = index_of(transcripts);
    std::set<TranscriptId> evidence;
    for (const auto& o : v.stage_trace) evidence.insert(o.evidence.begin(), o.evidence.end());

    std::set<std::string> versions;
    for (const auto& s : set.signatures()) {
        if (!s.is_marker() || s.honeypot != *v.honeypot) continue;
        for (auto id : evidence) {
            auto it = idx.find(id);
            if (it == idx.end()) continue;
            const auto& t = *it->second;
            if (!marker_reads(s.stage, t) || !protocol_covers(s.protocol, t.endpoint.protocol)) continue;
            const auto& subject = s.stage == Stage::HttpBody ? t.response : t.subject;
            if (set.matches(s, subject)) {
                out.markers.push_back(s.id);
                versions.insert(*s.version_marker);
                break;
            }
        }
    }
    out.candidates.assign(versions.begin(), versions.end());
    if (out.candidates.size() == 1) out.version = out.candidates.front();
    return out;
}

bool detect_default_config(const Verdict& v, const SignatureSet& set) {
    for (const auto& o : v.stage_trace) {
        if (o.stage != Stage::HttpBody && o.stage != Stage::StaticCommand) continue;
        if (o.status == StageStatus::Fail || o.status == StageStatus::Error) return false;
        for (const auto& id : o.matched_signatures) {
            const auto* s = set.find(id);
            if (!s || !s->default_config) return false;
        }
    }
    return true;
}

// ---- side findings

std::string_view to_string(FindingKind k) {
    return k == FindingKind::DefaultPassword ? "default_password" : "vulnerable_banner";
}

std::vector<VulnerableBanner> load_vulnerable_banners(const std::filesystem::path& file) {
    std::vector<VulnerableBanner> out;
    std::size_t n = 0;
    const auto text = slurp(file);
    for (auto line : split_lines(text)) {
        ++n;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto f = split_fields(t);
        if (f.empty() || f[0].empty() || f.size() > 2)
            throw std::runtime_error(file.string() + ":" + std::to_string(n) + ": expected 'banner | advisories'");
        VulnerableBanner b;
        b.banner = unescape(f[0]);
        if (f.size() == 2)
            for (const auto& c : split_list(f[1])) b.cve_refs.push_back(c);
        out.push_back(std::move(b));
    }
    return out;
}

std::filesystem::path default_vulnerable_banners_path() {
    return std::filesystem::path(HPFP_DATA_ROOT) / "data" / "vulnerable_banners.txt";
}

std::vector<SideFinding> flag_vulnerable_nonhoneypot(const ScanSession& s,
                                                     const std::vector<VulnerableBanner>& banners) {
    std::set<Ipv4> honeypots;
    for (const auto& v : s.verdicts)
        if (v.is_honeypot) honeypots.insert(v.endpoint.address);
    std::set<Endpoint> failed;
    for (const auto& v : s.verdicts)
        if (!v.is_honeypot && v.pipeline == PipelineKind::Probe && !honeypots.count(v.endpoint.address))
            failed.insert(v.endpoints.begin(), v.endpoints.end());

    std::vector<SideFinding> out;
    std::set<std::tuple<Endpoint, FindingKind, std::string>> seen;
    auto emit = [&](SideFinding f, const Endpoint& ep) {
        if (seen.insert({ep, f.kind, f.detail}).second) out.push_back(std::move(f));
    };
    for (const auto& t : s.transcripts) {
        if (!failed.count(t.endpoint)) continue;
        if (t.stage == Stage::Banner && !t.response.empty()) {
            auto first = std::string(trim(split_lines(t.response).front()));
            for (const auto& b : banners) {
                if (first.rfind(b.banner, 0) != 0) continue;
                emit({t.endpoint.address, t.endpoint.port, FindingKind::VulnerableBanner, b.banner,
                      t.endpoint.protocol, b.cve_refs},
                     t.endpoint);
                break;
            }
        }
        if (s.credential_probe && t.step == "credential" && t.note == "accepted") {
            auto colon = t.request.find(':');
            auto detail = t.request.substr(0, colon) + "/" + (colon == std::string::npos ? "" : t.request.substr(colon + 1));
            emit({t.endpoint.address, t.endpoint.port, FindingKind::DefaultPassword, detail, t.endpoint.protocol, {}},
                 t.endpoint);
        }
    }
    std::sort(out.begin(), out.end(), [](const SideFinding& a, const SideFinding& b) {
        return std::tie(a.address, a.port, a.kind, a.detail) < std::tie(b.address, b.port, b.kind, b.detail);
    });
    return out;
}

// ---- ground truth

std::vector<std::string> parse_domain_list(std::string_view text) {
    std::vector<std::string> out;
    for (auto line : split_lines(text)) {
        auto t = trim(line);
        if (auto hash = t.find('#'); hash != std::string_view::npos) t = trim(t.substr(0, hash));
        if (t.empty()) continue;
        if (auto comma = t.find(','); comma != std::string_view::npos) t = trim(t.substr(comma + 1));
        if (!t.empty()) out.push_back(to_lower(t));
    }
    return out;
}

GroundTruthReport validate_ground_truth(const ScanSession& s, const std::vector<std::filesystem::path>& lists,
                                        Resolver& resolver) {
    GroundTruthReport r;
    std::set<Ipv4> honeypots;
    for (const auto& v : s.verdicts)
        if (v.is_honeypot) honeypots.insert(v.endpoint.address);
    if (lists.empty()) r.warnings.push_back("no domain lists given; nothing to compare");
    for (const auto& path : lists) {
        DomainListStats st;
        st.list = path.filename().string();
        auto domains = parse_domain_list(slurp(path));
        st.domains = domains.size();
        if (domains.empty()) r.warnings.push_back(st.list + ": empty domain list");
        for (const auto& d : domains) {
            auto a = resolver.forward(d);
            if (a.error || a.addresses.empty()) {
                ++st.unresolved;
                continue;
            }
            ++st.resolved;
            st.addresses += a.addresses.size();
            for (auto addr : a.addresses)
                if (honeypots.count(addr)) r.intersection.push_back({st.list, d, addr});
        }
        r.lists.push_back(st);
    }
    return r;
}

// ---- honeyscore

std::size_t honeyscore_bucket(const std::optional<double>& score) {
    if (!score) return 5;
    const auto& vals = honeyscore_values();
    for (std::size_t i = 0; i < vals.size(); ++i)
        if (vals[i] == checked_honeyscore(*score)) return i;
    return 5;
}

std::string histogram_row(const ScoreHistogram& h) {
    static const char* labels[] = {"0", "0.3", "0.5", "0.8", "1", "NA"};
    std::string out;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (i) out += ", ";
        out += std::string(labels[i]) + ":" + std::to_string(h[i]);
    }
    return out;
}

std::map<HoneypotType, ScoreHistogram> honeyscore_histogram(const ScanSession& s) {
    std::map<Ipv4, std::optional<double>> scores;
    for (const auto& h : s.honeyscores) scores[h.address] = h.score;
    std::map<HoneypotType, ScoreHistogram> out;
    std::set<Instance> counted;
    for (const auto& v : s.verdicts) {
        if (!v.is_honeypot || !v.honeypot) continue;
        auto it = scores.find(v.endpoint.address);
        if (it == scores.end() || !counted.insert({v.endpoint.address, *v.honeypot}).second) continue;
        auto& row = out[*v.honeypot];
        ++row[honeyscore_bucket(it->second)];
    }
    return out;
}

// ---- report

std::vector<Annotation> annotate(const ScanSession& s, const SignatureSet& set) {
    std::map<Ipv4, HoneyscoreRecord> scores;
    for (const auto& h : s.honeyscores) scores[h.address] = h;
    std::vector<Annotation> out;
    for (std::size_t i = 0; i < s.verdicts.size(); ++i) {
        const auto& v = s.verdicts[i];
        if (!v.is_honeypot || !v.honeypot) continue;
        Annotation a;
        a.verdict = i;
        a.endpoint = v.endpoint;
        a.honeypot = *v.honeypot;
        a.pipeline = v.pipeline;
        a.version = detect_version(v, s.transcripts, set);
        a.default_config = detect_default_config(v, set);
        a.research = v.research;
        if (auto it = scores.find(v.endpoint.address); it != scores.end()) a.honeyscore = it->second;
        out.push_back(std::move(a));
    }
    return out;
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "lines") return ReportFormat::Lines;
    if (text == "table") return ReportFormat::Table;
    if (text == "summary") return ReportFormat::Summary;
    throw UsageError("unknown report format '" + std::string(text) + "' (lines, table, summary)");
}

namespace {

class Table {
public:
    explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
    std::string str() const {
        std::vector<std::size_t> w;
        for (const auto& r : rows_)
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (w.size() <= i) w.push_back(0);
                w[i] = std::max(w[i], r[i].size());
            }
        std::ostringstream out;
        for (std::size_t n = 0; n < rows_.size(); ++n) {
            const auto& r = rows_[n];
            for (std::size_t i = 0; i < r.size(); ++i) {
                out << r[i];
                if (i + 1 < r.size()) out << std::string(w[i] - r[i].size() + 2, ' ');
            }
            out << "\n";
        }
        return out.str();
    }

private:
    std::vector<std::vector<std::string>> rows_;
};

std::string version_label(const VersionResult& v) {
    if (v.version) return *v.version;
    if (v.ambiguous()) {
        std::string s = "ambiguous(";
        for (std::size_t i = 0; i < v.candidates.size(); ++i) s += (i ? "|" : "") + v.candidates[i];
        return s + ")";
    }
    return "-";
}

std::string summary_table(const ScanSession& s) {
    auto sum = summarize(s);
    std::set<HoneypotType> types;
    for (const auto& [t, n] : sum.probe) types.insert(t);
    for (const auto& [t, n] : sum.metascan) types.insert(t);
    Table t({"honeypot", "probe", "metascan"});
    for (const auto& ty : types) {
        auto get = [&](const std::map<HoneypotType, int>& m) {
            auto it = m.find(ty);
            return std::to_string(it == m.end() ? 0 : it->second);
        };
        t.add({ty, get(sum.probe), get(sum.metascan)});
    }
    return t.str();
}

}  // namespace

std::string export_report(const ReportInput& in, ReportFormat format) {
    if (!in.session) throw UsageError("report needs a session");
    const auto& s = *in.session;
    std::ostringstream out;

    if (format == ReportFormat::Lines) {
        for (const auto& a : in.annotations) {
            json j = {{"record", "honeypot"},
                      {"session_id", s.session_id},
                      {"endpoint", to_json(a.endpoint)},
                      {"honeypot", a.honeypot},
                      {"pipeline", to_string(a.pipeline)},
                      {"version", a.version.version ? json(*a.version.version) : json(nullptr)},
                      {"version_candidates", a.version.candidates},
                      {"default_config", a.default_config},
                      {"research", a.research},
                      {"honeyscore", a.honeyscore ? json(honeyscore_label(a.honeyscore->score)) : json(nullptr)}};
            out << j.dump() << "\n";
        }
        for (const auto& f : in.findings) {
            json j = {{"record", "side_finding"},
                      {"address", f.address.str()},
                      {"port", f.port},
                      {"kind", to_string(f.kind)},
                      {"detail", escape(f.detail)},
                      {"protocol", to_string(f.protocol)},
                      {"cve_refs", f.cve_refs}};
            out << j.dump() << "\n";
        }
        if (in.churn) {
            for (const auto& i : in.churn->new_instances)
                out << json{{"record", "churn_new"}, {"address", i.address.str()}, {"honeypot", i.honeypot}}.dump()
                    << "\n";
            for (const auto& i : in.churn->blocked_or_offline)
                out << json{{"record", "churn_lost"}, {"address", i.address.str()}, {"honeypot", i.honeypot}}.dump()
                    << "\n";
            for (const auto& r : in.churn->rotation_inferences)
                out << json{{"record", "churn_rotation"},
                            {"old", r.old_address.str()},
                            {"new", r.new_address.str()},
                            {"as_number", r.as_number},
                            {"honeypot", r.honeypot}}
                           .dump()
                    << "\n";
        }
        for (const auto& [type, h] : honeyscore_histogram(s))
            out << json{{"record", "honeyscore_histogram"}, {"honeypot", type}, {"row", histogram_row(h)}}.dump()
                << "\n";
        return out.str();
    }

    out << "session " << s.session_id << "\n\n";
    out << summary_table(s);
    if (format == ReportFormat::Summary) return out.str();

    // Table: every section, headers printed even when empty.
    out << "\n";
    Table versions({"honeypot", "address", "version", "default_config"});
    for (const auto& a : in.annotations)
        versions.add({a.honeypot, a.endpoint.str(), version_label(a.version), a.default_config ? "yes" : "no"});
    out << versions.str() << "\n";

    std::map<HoneypotType, std::map<std::string, int>> by_version;
    std::map<HoneypotType, std::pair<int, int>> by_default;
    for (const auto& a : in.annotations) {
        ++by_version[a.honeypot][version_label(a.version)];
        auto& d = by_default[a.honeypot];
        ++(a.default_config ? d.first : d.second);
    }
    Table vb({"honeypot", "version", "count"});
    for (const auto& [ty, m] : by_version)
        for (const auto& [ver, n] : m) vb.add({ty, ver, std::to_string(n)});
    out << vb.str() << "\n";
    Table db({"honeypot", "default", "customised"});
    for (const auto& [ty, d] : by_default) db.add({ty, std::to_string(d.first), std::to_string(d.second)});
    out << db.str() << "\n";

    Table findings({"address", "port", "kind", "protocol", "detail", "advisories"});
    for (const auto& f : in.findings) {
        std::string refs;
        for (const auto& c : f.cve_refs) refs += (refs.empty() ? "" : ",") + c;
        findings.add({f.address.str(), std::to_string(f.port), std::string(to_string(f.kind)),
                      std::string(to_string(f.protocol)), escape(f.detail), refs.empty() ? "-" : refs});
    }
    out << findings.str() << "\n";

    Table churn({"honeypot", "new", "blocked_or_offline", "rotations"});
    if (in.churn)
        for (const auto& [ty, c] : in.churn->counts)
            churn.add({ty, std::to_string(c.new_instances), std::to_string(c.blocked_or_offline),
                       std::to_string(c.rotations)});
    out << churn.str() << "\n";

    Table hs({"honeypot", "honeyscore"});
    for (const auto& [ty, h] : honeyscore_histogram(s)) hs.add({ty, histogram_row(h)});
    out << hs.str();
    return out.str();
}

}  // namespace hpfp
