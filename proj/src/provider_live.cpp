#include "hpfp/provider_live.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace hpfp {

using json = nlohmann::json;

namespace {

struct Reply {
    int status = 0;
    std::string body;
    std::string error;
};

void pace(std::mutex& mu, std::chrono::steady_clock::time_point& next, std::chrono::milliseconds gap) {
    std::unique_lock lock(mu);
    auto now = std::chrono::steady_clock::now();
    auto at = std::max(now, next);
    next = at + gap;
    lock.unlock();
    std::this_thread::sleep_until(at);
}

Reply fetch(const LiveProviderOptions& opts, const std::string& path,
            const std::pair<std::string, std::string>* basic = nullptr) {
    Reply out;
    httplib::Client cli(opts.base_url);
    auto secs = opts.timeout.count() / 1000, usecs = (opts.timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    if (basic) cli.set_basic_auth(basic->first, basic->second);
    auto res = cli.Get(path);
    if (!res) {
        out.error = httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
}

const char* env(const char* name) {
    const char* v = std::getenv(name);
    return v && *v ? v : nullptr;
}

std::optional<std::string> string_at(const json& j, std::initializer_list<const char*> path) {
    const json* cur = &j;
    for (const char* k : path) {
        if (!cur->is_object() || !cur->contains(k)) return std::nullopt;
        cur = &cur->at(k);
    }
    if (cur->is_array() && !cur->empty()) cur = &cur->front();
    if (!cur->is_string()) return std::nullopt;
    return cur->get<std::string>();
}

template <class R, class Answer>
bool classify(const R& r, Answer& out) {
    if (r.status == 429) {
        out.status = ProviderStatus::RateLimited;
        out.error = "429 rate limited";
        return false;
    }
    if (r.status != 200) {
        out.status = ProviderStatus::Error;
        out.error = r.status ? "HTTP " + std::to_string(r.status) : r.error;
        return false;
    }
    return true;
}

}  // namespace

SearchPage parse_shodan_page(std::string_view body, int page, std::size_t page_size) {
    SearchPage out;
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        out.status = ProviderStatus::Error;
        out.error = "malformed search answer";
        return out;
    }
    for (const auto& m : j.value("matches", json::array())) {
        ProviderRecord r;
        auto a = Ipv4::parse(m.value("ip_str", ""));
        if (!a || !m.contains("port")) continue;
        r.address = *a;
        r.port = m.at("port").get<std::uint16_t>();
        r.banner_text = string_at(m, {"data"});
        r.http_body = string_at(m, {"http", "html"});
        r.cert_common_name = string_at(m, {"ssl", "cert", "subject", "CN"});
        r.product = string_at(m, {"product"});
        r.provider = "shodan";
        r.raw.push_back(m.dump());
        if (r.has_evidence()) out.records.push_back(std::move(r));
    }
    auto total = j.value("total", std::size_t(0));
    out.more = static_cast<std::size_t>(page) * page_size < total;
    return out;
}

HoneyscoreAnswer parse_shodan_honeyscore(std::string_view body) {
    HoneyscoreAnswer out;
    try {
        out.value = parse_honeyscore_text(body);
    } catch (const ProtocolError& e) {
        out.status = ProviderStatus::Error;
        out.error = e.what();
    }
    return out;
}

std::optional<ProviderRecord> parse_censys_host(std::string_view body, std::uint16_t port) {
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.contains("result")) return std::nullopt;
    const auto& res = j.at("result");
    auto a = Ipv4::parse(res.value("ip", ""));
    if (!a) return std::nullopt;
    for (const auto& s : res.value("services", json::array())) {
        if (s.value("port", 0) != port) continue;
        ProviderRecord r;
        r.address = *a;
        r.port = port;
        r.banner_text = string_at(s, {"banner"});
        r.http_body = string_at(s, {"http", "response", "body"});
        r.cert_common_name = string_at(s, {"tls", "certificates", "leaf_data", "subject", "common_name"});
        if (s.contains("software") && s.at("software").is_array())
            for (const auto& sw : s.at("software"))
                if (auto p = string_at(sw, {"product"})) {
                    r.product = p;
                    break;
                }
        r.provider = "censys";
        r.raw.push_back(s.dump());
        if (r.has_evidence()) return r;
    }
    return std::nullopt;
}

// ---- Shodan

LiveProviderOptions ShodanClient::defaults() {
    LiveProviderOptions o;
    o.base_url = "https://api.shodan.io";
    o.min_interval = std::chrono::milliseconds(1000);
    return o;
}

ShodanClient::ShodanClient(std::string key, LiveProviderOptions opts) : key_(std::move(key)), opts_(std::move(opts)) {}

std::unique_ptr<ShodanClient> ShodanClient::from_env() {
    const char* key = env("SHODAN_API_KEY");
    if (!key) return nullptr;
    return std::make_unique<ShodanClient>(key);
}

SearchPage ShodanClient::search(std::uint16_t port, int page) {
    pace(mu_, next_, opts_.min_interval);
    auto r = fetch(opts_, "/shodan/host/search?key=" + httplib::detail::encode_query_param(key_) +
                              "&query=port:" + std::to_string(port) + "&page=" + std::to_string(page));
    SearchPage out;
    if (!classify(r, out)) return out;
    return parse_shodan_page(r.body, page);
}

HoneyscoreAnswer ShodanClient::honeyscore(Ipv4 address) {
    pace(mu_, next_, opts_.min_interval);
    auto r = fetch(opts_, "/labs/honeyscore/" + address.str() + "?key=" + httplib::detail::encode_query_param(key_));
    HoneyscoreAnswer out;
    if (!classify(r, out)) return out;
    return parse_shodan_honeyscore(r.body);
}

// ---- Censys

LiveProviderOptions CensysClient::defaults() {
    LiveProviderOptions o;
    o.base_url = "https://search.censys.io";
    // Free tier allows 0.4 actions per second.
    o.min_interval = std::chrono::milliseconds(2500);
    return o;
}

CensysClient::CensysClient(std::string id, std::string secret, LiveProviderOptions opts)
    : id_(std::move(id)), secret_(std::move(secret)), opts_(std::move(opts)) {}

std::unique_ptr<CensysClient> CensysClient::from_env() {
    const char* id = env("CENSYS_API_ID");
    const char* secret = env("CENSYS_API_SECRET");
    if (!id || !secret) return nullptr;
    return std::make_unique<CensysClient>(id, secret);
}

CensysClient::Reply CensysClient::get(const std::string& path) {
    pace(mu_, next_, opts_.min_interval);
    std::pair<std::string, std::string> auth{id_, secret_};
    auto r = fetch(opts_, path, &auth);
    return {r.status, std::move(r.body), std::move(r.error)};
}

SearchPage CensysClient::search(std::uint16_t port, int page) {
    SearchPage out;
    std::string cursor;
    if (page > 1) {
        std::lock_guard lock(mu_);
        auto it = cursors_.find({port, page});
        if (it == cursors_.end()) {
            out.status = ProviderStatus::Error;
            out.error = "page " + std::to_string(page) + " requested before its predecessor";
            return out;
        }
        cursor = it->second;
    }
    std::string path = "/api/v2/hosts/search?q=" + httplib::detail::encode_query_param("services.port:" + std::to_string(port)) +
                       "&per_page=100";
    if (!cursor.empty()) path += "&cursor=" + httplib::detail::encode_query_param(cursor);
    auto r = get(path);
    if (!classify(r, out)) return out;
    auto j = json::parse(r.body, nullptr, false);
    if (j.is_discarded() || !j.contains("result")) {
        out.status = ProviderStatus::Error;
        out.error = "malformed search answer";
        return out;
    }
    const auto& res = j.at("result");
    std::vector<std::string> ips;
    for (const auto& h : res.value("hits", json::array()))
        if (h.contains("ip")) ips.push_back(h.at("ip").get<std::string>());
    auto next = string_at(res, {"links", "next"});
    out.more = next && !next->empty();
    if (out.more) {
        std::lock_guard lock(mu_);
        cursors_[{port, page + 1}] = *next;
    }
    for (const auto& ip : ips) {
        auto h = get("/api/v2/hosts/" + ip);
        if (h.status == 429) {
            // The whole page is retried; host views already fetched are cheap to repeat.
            out.status = ProviderStatus::RateLimited;
            out.error = "429 rate limited";
            out.records.clear();
            return out;
        }
        if (h.status != 200) continue;
        if (auto rec = parse_censys_host(h.body, port)) out.records.push_back(std::move(*rec));
    }
    return out;
}

HoneyscoreAnswer CensysClient::honeyscore(Ipv4) {
    HoneyscoreAnswer out;
    out.status = ProviderStatus::Error;
    out.error = "censys offers no honeyscore";
    return out;
}

}  // namespace hpfp
