#include "hpfp/enrichment.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hpfp/bytes.hpp"
#include "hpfp/net.hpp"
#include "hpfp/targets.hpp"

namespace hpfp {

using json = nlohmann::json;

std::string_view to_string(EnrichmentSource s) { return s == EnrichmentSource::Live ? "live" : "fixture"; }

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Fn>
void each_json_line(std::string_view text, Fn fn) {
    std::size_t n = 0;
    for (auto line : split_lines(text)) {
        ++n;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        json j;
        try {
            j = json::parse(t);
        } catch (const json::exception& e) {
            throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
        }
        fn(j, n);
    }
}

std::vector<std::string> word_lines(const std::filesystem::path& file) {
    std::vector<std::string> out;
    const auto text = read_file(file);
    for (auto line : split_lines(text)) {
        auto hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        auto t = trim(line);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

// ---- resolvers

FixtureResolver FixtureResolver::load(const std::filesystem::path& file) { return parse(read_file(file)); }

FixtureResolver FixtureResolver::parse(std::string_view text) {
    FixtureResolver r;
    each_json_line(text, [&](const json& j, std::size_t n) {
        if (j.contains("address")) {
            auto a = Ipv4::parse(j.at("address").get<std::string>());
            if (!a) throw std::runtime_error("line " + std::to_string(n) + ": bad address");
            ReverseAnswer ans;
            if (j.contains("error")) ans.error = j.at("error").get<std::string>();
            if (j.contains("ptr")) ans.names = j.at("ptr").get<std::vector<std::string>>();
            r.ptr_[*a] = std::move(ans);
        } else if (j.contains("domain")) {
            ForwardAnswer ans;
            if (j.contains("error")) ans.error = j.at("error").get<std::string>();
            for (const auto& s : j.value("a", std::vector<std::string>{})) {
                auto a = Ipv4::parse(s);
                if (!a) throw std::runtime_error("line " + std::to_string(n) + ": bad address " + s);
                ans.addresses.push_back(*a);
            }
            r.a_[to_lower(j.at("domain").get<std::string>())] = std::move(ans);
        } else {
            throw std::runtime_error("line " + std::to_string(n) + ": needs \"address\" or \"domain\"");
        }
    });
    return r;
}

void FixtureResolver::add_ptr(Ipv4 a, std::vector<std::string> names) { ptr_[a].names = std::move(names); }

void FixtureResolver::add_a(const std::string& domain, std::vector<Ipv4> addresses) {
    a_[to_lower(domain)].addresses = std::move(addresses);
}

ReverseAnswer FixtureResolver::reverse(Ipv4 address) {
    auto it = ptr_.find(address);
    return it == ptr_.end() ? ReverseAnswer{} : it->second;
}

ForwardAnswer FixtureResolver::forward(const std::string& domain) {
    auto it = a_.find(to_lower(domain));
    return it == a_.end() ? ForwardAnswer{} : it->second;
}

ReverseAnswer SystemResolver::reverse(Ipv4 address) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_addr.s_addr = htonl(address.value());
    char host[NI_MAXHOST];
    ReverseAnswer out;
    int rc = getnameinfo(reinterpret_cast<sockaddr*>(&sa), sizeof sa, host, sizeof host, nullptr, 0, NI_NAMEREQD);
    if (rc == 0) out.names.emplace_back(host);
    else if (rc != EAI_NONAME) out.error = gai_strerror(rc);
    return out;
}

ForwardAnswer SystemResolver::forward(const std::string& domain) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    ForwardAnswer out;
    int rc = getaddrinfo(domain.c_str(), nullptr, &hints, &res);
    if (rc != 0) {
        if (rc != EAI_NONAME && rc != EAI_NODATA) out.error = gai_strerror(rc);
        return out;
    }
    for (auto* p = res; p; p = p->ai_next) {
        Ipv4 a(ntohl(reinterpret_cast<sockaddr_in*>(p->ai_addr)->sin_addr.s_addr));
        if (std::find(out.addresses.begin(), out.addresses.end(), a) == out.addresses.end())
            out.addresses.push_back(a);
    }
    freeaddrinfo(res);
    return out;
}

// ---- registries

FixtureRegistry FixtureRegistry::load(const std::filesystem::path& file) { return parse(read_file(file)); }

FixtureRegistry FixtureRegistry::parse(std::string_view text) {
    FixtureRegistry r;
    each_json_line(text, [&](const json& j, std::size_t n) {
        std::optional<std::string> err;
        if (j.contains("error")) err = j.at("error").get<std::string>();
        try {
            r.add(j.at("prefix").get<std::string>(), j.value("answer", std::string()), err);
        } catch (const std::exception& e) {
            throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
        }
    });
    return r;
}

void FixtureRegistry::add(const std::string& prefix, std::string answer, std::optional<std::string> error) {
    auto c = Cidr::parse(prefix);
    if (!c) throw std::runtime_error("bad prefix " + prefix);
    rows_.push_back({c->first(), c->last(), c->prefix, std::move(answer), std::move(error)});
}

std::pair<std::string, std::optional<std::string>> FixtureRegistry::query(Ipv4 address) {
    const Row* best = nullptr;
    for (const auto& r : rows_)
        if (address.value() >= r.first && address.value() <= r.last && (!best || r.prefix > best->prefix))
            best = &r;
    if (!best) return {"", std::nullopt};
    return {best->answer, best->error};
}

WhoisRegistry::WhoisRegistry(std::string server, std::chrono::milliseconds timeout)
    : server_(std::move(server)), timeout_(timeout) {}

std::pair<std::string, std::optional<std::string>> WhoisRegistry::query(Ipv4 address) {
    {
        // Cymru asks for no more than a few queries per second from one client.
        std::unique_lock lock(mu_);
        auto now = std::chrono::steady_clock::now();
        auto start = std::max(now, next_);
        next_ = start + std::chrono::milliseconds(250);
        lock.unlock();
        std::this_thread::sleep_until(start);
    }
    SystemResolver dns;
    auto addrs = dns.forward(server_);
    if (addrs.addresses.empty()) return {"", "resolve " + server_ + ": " + addrs.error.value_or("no address")};
    auto c = net::connect_tcp(addrs.addresses.front(), 43, timeout_);
    if (!c.ok()) return {"", "connect: " + c.error};
    if (!c.conn.send(" -v " + address.str() + "\r\n", timeout_)) return {"", "send failed"};
    net::ReadOptions o;
    o.max_bytes = 65536;
    o.first = timeout_;
    o.idle = timeout_;
    o.total = timeout_;
    auto r = c.conn.read(o);
    if (r.data.empty()) return {"", r.timed_out ? "timeout" : "empty answer"};
    return {r.data, std::nullopt};
}

// ---- classifiers

ResearchClassifier::ResearchClassifier(std::vector<std::string> words) {
    for (auto& w : words) words_.push_back(to_lower(w));
}

ResearchClassifier ResearchClassifier::load(const std::filesystem::path& file) {
    return ResearchClassifier(word_lines(file));
}

std::filesystem::path ResearchClassifier::default_path() {
    return std::filesystem::path(HPFP_DATA_ROOT) / "data" / "research_words.txt";
}

bool ResearchClassifier::is_research(const std::optional<std::string>& as_name,
                                     const std::optional<std::string>& isp_name) const {
    for (const auto& w : words_) {
        if (as_name && icontains(*as_name, w)) return true;
        if (isp_name && icontains(*isp_name, w)) return true;
    }
    return false;
}

void CloudCatalog::add_name(std::string fragment) { names_.push_back(upper(fragment)); }

CloudCatalog CloudCatalog::load(const std::filesystem::path& file) {
    CloudCatalog c;
    for (const auto& line : word_lines(file)) {
        std::istringstream ss(line);
        std::string tok, name;
        while (ss >> tok) {
            std::uint32_t asn = 0;
            if ((tok.rfind("AS", 0) == 0 || tok.rfind("as", 0) == 0) && tok.size() > 2) {
                auto [p, ec] = std::from_chars(tok.data() + 2, tok.data() + tok.size(), asn);
                if (ec == std::errc() && p == tok.data() + tok.size()) {
                    c.add_number(asn);
                    continue;
                }
            }
            if (!name.empty()) name.push_back(' ');
            name += tok;
        }
        if (!name.empty()) c.add_name(name);
    }
    return c;
}

std::filesystem::path CloudCatalog::default_path() {
    return std::filesystem::path(HPFP_DATA_ROOT) / "data" / "cloud_catalog.txt";
}

bool CloudCatalog::contains(const std::optional<std::uint32_t>& asn, const std::optional<std::string>& as_name,
                            const std::optional<std::string>& isp_name) const {
    if (asn && numbers_.count(*asn)) return true;
    for (const auto& n : names_) {
        if (as_name && upper(*as_name).find(n) != std::string::npos) return true;
        if (isp_name && upper(*isp_name).find(n) != std::string::npos) return true;
    }
    return false;
}

// ---- checks

FqdnCheck fqdn_check(Ipv4 address, Resolver& resolver) {
    auto ans = resolver.reverse(address);
    FqdnCheck out;
    if (ans.error) {
        out.error = *ans.error;
        return out;
    }
    out.fqdns = ans.names;
    out.has_fqdn = !out.fqdns.empty();
    return out;
}

std::optional<AsIspInfo> parse_registry_answer(std::string_view answer) {
    for (auto line : split_lines(answer)) {
        auto fields = std::vector<std::string>();
        std::string_view rest = line;
        while (true) {
            auto bar = rest.find('|');
            fields.emplace_back(trim(rest.substr(0, bar)));
            if (bar == std::string_view::npos) break;
            rest = rest.substr(bar + 1);
        }
        if (fields.size() < 7) continue;
        if (fields[0] == "AS" || fields[6] == "AS Name") continue;  // header
        AsIspInfo info;
        std::uint32_t asn = 0;
        auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), asn);
        if (ec == std::errc() && p == fields[0].data() + fields[0].size()) info.as_number = asn;
        if (!fields[3].empty()) info.country = fields[3];
        std::string name = fields[6];
        // "NAME - Org, CC" or "NAME, CC"
        auto comma = name.rfind(", ");
        if (comma != std::string::npos && name.size() - comma == 4) name.resize(comma);
        auto dash = name.find(" - ");
        if (dash != std::string::npos) {
            info.as_name = name.substr(0, dash);
            info.isp_name = name.substr(dash + 3);
        } else if (!name.empty()) {
            info.as_name = name;
        }
        if (!info.as_number && !info.as_name) return std::nullopt;
        return info;
    }
    return std::nullopt;
}

AsIspInfo as_isp_lookup(Ipv4 address, Registry& registry, const ResearchClassifier& words) {
    auto [answer, err] = registry.query(address);
    AsIspInfo info;
    if (err) {
        info.error = *err;
        return info;
    }
    auto parsed = parse_registry_answer(answer);
    if (!parsed) {
        info.error = answer.empty() ? "empty answer" : "malformed answer";
        return info;
    }
    info = *parsed;
    info.is_research = words.is_research(info.as_name, info.isp_name);
    return info;
}

bool cloud_hosting_check(const EnrichmentRecord& record, const CloudCatalog& catalog) {
    return catalog.contains(record.as_number, record.as_name, record.isp_name);
}

Enrichment::Enrichment(std::shared_ptr<Resolver> resolver, std::shared_ptr<Registry> registry,
                       ResearchClassifier words, CloudCatalog catalog)
    : resolver_(std::move(resolver)), registry_(std::move(registry)), words_(std::move(words)),
      catalog_(std::move(catalog)) {}

EnrichmentRecord Enrichment::lookup(Ipv4 address) {
    {
        std::lock_guard lock(mu_);
        auto it = cache_.find(address);
        if (it != cache_.end()) return it->second;
    }
    EnrichmentRecord r;
    r.address = address;
    r.source = resolver_->source() == EnrichmentSource::Live || registry_->source() == EnrichmentSource::Live
                   ? EnrichmentSource::Live
                   : EnrichmentSource::Fixture;
    auto f = fqdn_check(address, *resolver_);
    if (f.error) r.errors.push_back("fqdn: " + *f.error);
    r.has_fqdn = f.has_fqdn;
    r.fqdns = f.fqdns;
    auto as = as_isp_lookup(address, *registry_, words_);
    if (as.error) r.errors.push_back("whois: " + *as.error);
    r.as_number = as.as_number;
    r.as_name = as.as_name;
    r.isp_name = as.isp_name;
    r.is_research = as.is_research;
    r.is_cloud = cloud_hosting_check(r, catalog_);
    std::lock_guard lock(mu_);
    return cache_.emplace(address, std::move(r)).first->second;
}

}  // namespace hpfp
