#include "hpfp/metascan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hpfp/bytes.hpp"

namespace hpfp {

using json = nlohmann::json;

const std::vector<double>& honeyscore_values() {
    static const std::vector<double> v{0.0, 0.3, 0.5, 0.8, 1.0};
    return v;
}

double checked_honeyscore(double v) {
    for (double s : honeyscore_values())
        if (std::fabs(v - s) < 1e-9) return s;
    std::ostringstream ss;
    ss << "honeyscore " << v << " is outside {0, 0.3, 0.5, 0.8, 1}";
    throw ProtocolError(ss.str());
}

std::optional<double> parse_honeyscore_text(std::string_view text) {
    auto t = trim(text);
    if (t.empty() || t == "NA" || t == "null") return std::nullopt;
    std::string s(t);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) throw ProtocolError("honeyscore answer is not a number: " + s);
    return v;
}

std::string honeyscore_label(const std::optional<double>& score) {
    if (!score) return "NA";
    std::ostringstream ss;
    ss << *score;
    return ss.str();
}

// ---- fixtures and record JSON

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<std::string> bytes_field(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return unescape(j.at(key).get<std::string>());
}

}  // namespace

std::vector<ProviderRecord> parse_provider_records(std::string_view text, const std::string& provider) {
    std::vector<ProviderRecord> out;
    std::size_t n = 0;
    for (auto line : split_lines(text)) {
        ++n;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        try {
            auto j = json::parse(t);
            ProviderRecord r;
            auto a = Ipv4::parse(j.at("address").get<std::string>());
            if (!a) throw std::runtime_error("bad address");
            r.address = *a;
            int port = j.at("port").get<int>();
            if (port < 1 || port > 65535) throw std::runtime_error("bad port");
            r.port = static_cast<std::uint16_t>(port);
            r.banner_text = bytes_field(j, "banner");
            r.http_body = bytes_field(j, "http_body");
            r.cert_common_name = bytes_field(j, "cert_common_name");
            r.product = bytes_field(j, "product");
            r.provider = j.value("provider", provider);
            r.raw.emplace_back(t);
            if (!r.has_evidence()) throw std::runtime_error("record has no evidence field");
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw std::runtime_error("record line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::string record_to_json_line(const ProviderRecord& r) {
    json j;
    j["address"] = r.address.str();
    j["port"] = r.port;
    auto put = [&](const char* k, const std::optional<std::string>& v) {
        if (v) j[k] = escape(*v);
    };
    put("banner", r.banner_text);
    put("http_body", r.http_body);
    put("cert_common_name", r.cert_common_name);
    put("product", r.product);
    j["provider"] = r.provider;
    return j.dump();
}

std::map<Ipv4, std::optional<double>> parse_honeyscore_fixture(std::string_view text) {
    std::map<Ipv4, std::optional<double>> out;
    std::size_t n = 0;
    for (auto line : split_lines(text)) {
        ++n;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto j = json::parse(t);
        auto a = Ipv4::parse(j.at("address").get<std::string>());
        if (!a) throw std::runtime_error("score line " + std::to_string(n) + ": bad address");
        std::optional<double> s;
        if (j.contains("score") && !j.at("score").is_null()) {
            const auto& v = j.at("score");
            if (v.is_string()) s = parse_honeyscore_text(v.get<std::string>());
            else s = v.get<double>();
        }
        out[*a] = s;
    }
    return out;
}

FixtureProvider::FixtureProvider(std::string name, std::size_t page_size)
    : name_(std::move(name)), page_size_(std::max<std::size_t>(1, page_size)) {}

std::unique_ptr<FixtureProvider> FixtureProvider::load(const std::string& name, const std::filesystem::path& records,
                                      const std::optional<std::filesystem::path>& scores) {
    auto p = std::make_unique<FixtureProvider>(name);
    for (auto& r : parse_provider_records(read_file(records), name)) p->add(std::move(r));
    if (scores)
        for (auto& [a, s] : parse_honeyscore_fixture(read_file(*scores))) p->set_score(a, s);
    return p;
}

void FixtureProvider::add(ProviderRecord r) {
    if (r.provider.empty()) r.provider = name_;
    if (r.raw.empty()) r.raw.push_back(record_to_json_line(r));
    records_.push_back(std::move(r));
}

SearchPage FixtureProvider::search(std::uint16_t port, int page) {
    std::lock_guard lock(mu_);
    ++calls_;
    SearchPage out;
    if (throttled_ > 0) {
        --throttled_;
        out.status = ProviderStatus::RateLimited;
        out.error = "429 rate limited";
        return out;
    }
    std::vector<const ProviderRecord*> hits;
    for (const auto& r : records_)
        if (r.port == port) hits.push_back(&r);
    std::size_t from = static_cast<std::size_t>(std::max(page - 1, 0)) * page_size_;
    for (std::size_t i = from; i < hits.size() && i < from + page_size_; ++i) out.records.push_back(*hits[i]);
    out.more = from + page_size_ < hits.size();
    return out;
}

HoneyscoreAnswer FixtureProvider::honeyscore(Ipv4 address) {
    HoneyscoreAnswer out;
    auto it = scores_.find(address);
    if (it != scores_.end()) out.value = it->second;
    return out;
}

// ---- search

std::vector<ProviderRecord> deduplicate(std::vector<ProviderRecord> records) {
    std::vector<ProviderRecord> out;
    std::map<std::pair<Ipv4, std::uint16_t>, std::size_t> index;
    for (auto& r : records) {
        auto key = std::make_pair(r.address, r.port);
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, out.size());
            out.push_back(std::move(r));
            continue;
        }
        auto& m = out[it->second];
        auto fill = [](std::optional<std::string>& dst, std::optional<std::string>& src) {
            if (!dst && src) dst = std::move(src);
        };
        fill(m.banner_text, r.banner_text);
        fill(m.http_body, r.http_body);
        fill(m.cert_common_name, r.cert_common_name);
        fill(m.product, r.product);
        auto names = "+" + m.provider + "+";
        if (names.find("+" + r.provider + "+") == std::string::npos) m.provider += "+" + r.provider;
        for (auto& raw : r.raw) m.raw.push_back(std::move(raw));
    }
    std::sort(out.begin(), out.end(), [](const ProviderRecord& a, const ProviderRecord& b) {
        return std::tie(a.address, a.port) < std::tie(b.address, b.port);
    });
    return out;
}

MetascanResult metascan_search(const std::vector<std::uint16_t>& ports,
                               const std::vector<ProviderClient*>& providers, const SearchOptions& opts) {
    struct Partial {
        std::vector<ProviderRecord> records;
        std::vector<std::string> errors;
        bool incomplete = false;
    };
    std::vector<Partial> parts(providers.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < providers.size(); ++i) {
        workers.emplace_back([&, i] {
            auto* p = providers[i];
            auto& part = parts[i];
            auto next = std::chrono::steady_clock::now();
            for (auto port : ports) {
                for (int page = 1; page <= opts.max_pages; ++page) {
                    SearchPage res;
                    auto wait = opts.backoff;
                    for (int attempt = 0;; ++attempt) {
                        std::this_thread::sleep_until(next);
                        next = std::chrono::steady_clock::now() + p->min_interval();
                        res = p->search(port, page);
                        if (res.status != ProviderStatus::RateLimited || attempt >= opts.max_retries) break;
                        std::this_thread::sleep_for(wait);
                        wait *= 2;
                    }
                    if (res.status != ProviderStatus::Ok) {
                        part.incomplete = true;
                        part.errors.push_back(p->name() + " port " + std::to_string(port) + " page " +
                                              std::to_string(page) + ": " + res.error);
                        break;
                    }
                    for (auto& r : res.records) part.records.push_back(std::move(r));
                    if (!res.more) break;
                    if (page == opts.max_pages) {
                        part.incomplete = true;
                        part.errors.push_back(p->name() + " port " + std::to_string(port) + ": page limit reached");
                    }
                }
            }
        });
    }
    for (auto& w : workers) w.join();

    MetascanResult out;
    std::vector<ProviderRecord> all;
    for (auto& part : parts) {
        for (auto& r : part.records) all.push_back(std::move(r));
        for (auto& e : part.errors) out.errors.push_back(std::move(e));
        out.incomplete = out.incomplete || part.incomplete;
    }
    out.records = deduplicate(std::move(all));
    return out;
}

// ---- keyword filter and the pipeline body

namespace {

const std::optional<std::string>* field_of(const ProviderRecord& r, std::string_view name) {
    if (name == "banner") return &r.banner_text;
    if (name == "http_body") return &r.http_body;
    if (name == "cert_common_name") return &r.cert_common_name;
    if (name == "product") return &r.product;
    return nullptr;
}

StageOutcome make(Stage st, StageStatus s) {
    StageOutcome o;
    o.stage = st;
    o.status = s;
    return o;
}

}  // namespace

std::vector<KeywordHit> keyword_filter(const std::vector<ProviderRecord>& records, const SignatureSet& set) {
    std::vector<KeywordHit> out;
    for (const auto& r : records) {
        std::vector<KeywordHit> hits;
        for (const auto& s : set.signatures()) {
            if (s.stage != Stage::Keyword || s.is_marker() || !s.command) continue;
            const auto* f = field_of(r, *s.command);
            if (!f || !*f || !set.matches(s, **f)) continue;
            auto it = std::find_if(hits.begin(), hits.end(), [&](const KeywordHit& h) { return h.honeypot == s.honeypot; });
            if (it == hits.end()) hits.push_back({r, s.honeypot, {s.id}});
            else it->signatures.push_back(s.id);
        }
        for (auto& h : hits) out.push_back(std::move(h));
    }
    return out;
}

bool is_ics_port(std::uint16_t port) { return port == 502 || port == 102; }

std::vector<Verdict> run_metascan_pipeline(const std::vector<ProviderRecord>& records, const SignatureSet& set,
                                           Enrichment& enrichment) {
    std::vector<Verdict> out;
    for (const auto& hit : keyword_filter(records, set)) {
        Verdict v;
        v.pipeline = PipelineKind::Metascan;
        v.honeypot = hit.honeypot;
        Protocol proto = Protocol::HTTP;
        if (auto p = protocol_for_port(hit.record.port)) proto = *p;
        else if (const auto* s = set.find(hit.signatures.front())) proto = s->protocol;
        v.endpoint = Endpoint{hit.record.address, hit.record.port, proto};
        v.endpoints = {v.endpoint};
        v.entry_hits = hit.signatures;

        auto kw = make(Stage::Keyword, StageStatus::Pass);
        kw.matched_signatures = hit.signatures;
        v.stage_trace.push_back(kw);

        auto e = enrichment.lookup(hit.record.address);
        auto failed = [&](std::string_view prefix) {
            for (const auto& err : e.errors)
                if (err.rfind(prefix, 0) == 0) return std::optional<std::string>(err);
            return std::optional<std::string>();
        };

        auto fq = make(Stage::Fqdn, StageStatus::Pass);
        if (auto err = failed("fqdn")) {
            fq.status = StageStatus::Error;
            fq.notes.push_back(*err);
        } else if (e.has_fqdn) {
            fq.status = StageStatus::Fail;
            fq.notes = e.fqdns;
        }
        v.stage_trace.push_back(fq);

        auto whois_err = failed("whois");
        auto cloud = make(Stage::Cloud, StageStatus::NotApplicable);
        if (is_ics_port(hit.record.port)) {
            if (whois_err) {
                cloud.status = StageStatus::Error;
                cloud.notes.push_back(*whois_err);
            } else {
                cloud.status = e.is_cloud ? StageStatus::Pass : StageStatus::Fail;
                if (e.as_name) cloud.notes.push_back(*e.as_name);
            }
        }
        v.stage_trace.push_back(cloud);

        auto as = make(Stage::AsIsp, StageStatus::Pass);
        if (whois_err) {
            as.status = StageStatus::Error;
            as.notes.push_back(*whois_err);
        } else {
            if (e.as_number) as.notes.push_back("AS" + std::to_string(*e.as_number));
            if (e.as_name) as.notes.push_back(*e.as_name);
            if (e.is_research) as.notes.push_back("research");
        }
        v.stage_trace.push_back(as);

        v.research = e.is_research;
        v.is_honeypot = combine_stage_outcomes(v.stage_trace);
        out.push_back(std::move(v));
    }
    return out;
}

HoneyscoreRecord fetch_honeyscore(Ipv4 address, ProviderClient& provider) {
    auto ans = provider.honeyscore(address);
    if (ans.status != ProviderStatus::Ok) throw std::runtime_error(provider.name() + " honeyscore: " + ans.error);
    HoneyscoreRecord r;
    r.address = address;
    if (ans.value) r.score = checked_honeyscore(*ans.value);
    return r;
}

// ---- corpus from transcripts

std::vector<ProviderRecord> records_from_transcripts(const std::vector<ProbeTranscript>& transcripts,
                                                     const std::function<std::uint16_t(const Endpoint&)>& canonical_port,
                                                     const std::string& provider) {
    std::vector<ProviderRecord> raw;
    for (const auto& t : transcripts) {
        if (t.error || t.response.empty()) continue;
        ProviderRecord r;
        r.address = t.endpoint.address;
        r.port = canonical_port(t.endpoint);
        r.provider = provider;
        if (t.stage == Stage::Banner) {
            if (is_http_family(t.endpoint.protocol)) {
                auto end = t.response.find("\r\n\r\n");
                r.banner_text = t.response.substr(0, end);
                r.http_body = t.response;
            } else {
                r.banner_text = t.response;
            }
        } else if (t.stage == Stage::Certificate) {
            for (auto line : split_lines(t.response))
                if (line.rfind("subject_cn=", 0) == 0) r.cert_common_name = std::string(line.substr(11));
            if (!r.cert_common_name) continue;
        } else {
            continue;
        }
        r.raw.push_back(record_to_json_line(r));
        raw.push_back(std::move(r));
    }
    return deduplicate(std::move(raw));
}

}  // namespace hpfp
