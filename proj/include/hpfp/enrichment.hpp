#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hpfp/types.hpp"

namespace hpfp {

enum class EnrichmentSource { Live, Fixture };
std::string_view to_string(EnrichmentSource s);

struct EnrichmentRecord {
    Ipv4 address;
    bool has_fqdn = false;
    std::vector<std::string> fqdns;
    std::optional<std::uint32_t> as_number;
    std::optional<std::string> as_name;
    std::optional<std::string> isp_name;
    bool is_research = false;
    bool is_cloud = false;
    EnrichmentSource source = EnrichmentSource::Fixture;
    // Which lookups failed ("fqdn: timeout", "whois: empty answer").
    std::vector<std::string> errors;
    bool operator==(const EnrichmentRecord&) const = default;
};

// ---- name resolution

struct ReverseAnswer {
    std::vector<std::string> names;  // empty = NXDOMAIN
    std::optional<std::string> error;
};

struct ForwardAnswer {
    std::vector<Ipv4> addresses;
    std::optional<std::string> error;
};

class Resolver {
public:
    virtual ~Resolver() = default;
    virtual ReverseAnswer reverse(Ipv4 address) = 0;
    virtual ForwardAnswer forward(const std::string& domain) = 0;
    virtual EnrichmentSource source() const = 0;
};

// Line-delimited JSON, one object per line:
//   {"address": "192.0.2.7", "ptr": ["mail.example.org"]}
//   {"address": "192.0.2.8", "error": "timeout"}
//   {"domain": "example.org", "a": ["192.0.2.7"]}
// Unlisted addresses and domains have no records.
class FixtureResolver : public Resolver {
public:
    static FixtureResolver load(const std::filesystem::path& file);
    static FixtureResolver parse(std::string_view text);
    void add_ptr(Ipv4 a, std::vector<std::string> names);
    void add_a(const std::string& domain, std::vector<Ipv4> addresses);

    ReverseAnswer reverse(Ipv4 address) override;
    ForwardAnswer forward(const std::string& domain) override;
    EnrichmentSource source() const override { return EnrichmentSource::Fixture; }

private:
    std::map<Ipv4, ReverseAnswer> ptr_;
    std::map<std::string, ForwardAnswer> a_;
};

// getnameinfo/getaddrinfo through the system resolver.
class SystemResolver : public Resolver {
public:
    ReverseAnswer reverse(Ipv4 address) override;
    ForwardAnswer forward(const std::string& domain) override;
    EnrichmentSource source() const override { return EnrichmentSource::Live; }
};

// ---- AS / ISP registry

// A registry answers with one line in the Team Cymru verbose whois layout:
//   AS | IP | BGP Prefix | CC | Registry | Allocated | AS Name
class Registry {
public:
    virtual ~Registry() = default;
    // The raw answer text or an error.
    virtual std::pair<std::string, std::optional<std::string>> query(Ipv4 address) = 0;
    virtual EnrichmentSource source() const = 0;
};

// Line-delimited JSON: {"prefix": "192.0.2.0/24", "answer": "64500 | ... | EXAMPLE-UNIVERSITY-NET - Example University, US"}
// or {"prefix": ..., "error": "timeout"}. Longest prefix wins.
class FixtureRegistry : public Registry {
public:
    static FixtureRegistry load(const std::filesystem::path& file);
    static FixtureRegistry parse(std::string_view text);
    void add(const std::string& prefix, std::string answer, std::optional<std::string> error = std::nullopt);

    std::pair<std::string, std::optional<std::string>> query(Ipv4 address) override;
    EnrichmentSource source() const override { return EnrichmentSource::Fixture; }

private:
    struct Row {
        std::uint32_t first = 0, last = 0;
        int prefix = 0;
        std::string answer;
        std::optional<std::string> error;
    };
    std::vector<Row> rows_;
};

// Live WHOIS over TCP/43 against whois.cymru.com.
class WhoisRegistry : public Registry {
public:
    explicit WhoisRegistry(std::string server = "whois.cymru.com",
                           std::chrono::milliseconds timeout = std::chrono::milliseconds(10000));
    std::pair<std::string, std::optional<std::string>> query(Ipv4 address) override;
    EnrichmentSource source() const override { return EnrichmentSource::Live; }

private:
    std::string server_;
    std::chrono::milliseconds timeout_;
    std::mutex mu_;
    std::chrono::steady_clock::time_point next_{};
};

// ---- classifiers

// Case-insensitive word list; an AS or ISP name containing any entry is a
// research network.
class ResearchClassifier {
public:
    static ResearchClassifier load(const std::filesystem::path& file);
    static std::filesystem::path default_path();
    explicit ResearchClassifier(std::vector<std::string> words = {});
    bool is_research(const std::optional<std::string>& as_name, const std::optional<std::string>& isp_name) const;
    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
};

// Cloud providers by AS number ("AS16509") or name fragment ("AMAZON").
class CloudCatalog {
public:
    static CloudCatalog load(const std::filesystem::path& file);
    static std::filesystem::path default_path();
    CloudCatalog() = default;
    void add_number(std::uint32_t asn) { numbers_.insert(asn); }
    void add_name(std::string fragment);
    bool empty() const { return numbers_.empty() && names_.empty(); }
    bool contains(const std::optional<std::uint32_t>& asn, const std::optional<std::string>& as_name,
                  const std::optional<std::string>& isp_name) const;

private:
    std::set<std::uint32_t> numbers_;
    std::vector<std::string> names_;  // upper-cased
};

// ---- checks

struct FqdnCheck {
    bool has_fqdn = false;
    std::vector<std::string> fqdns;
    std::optional<std::string> error;  // set: unknown, the check fails closed
};
FqdnCheck fqdn_check(Ipv4 address, Resolver& resolver);

struct AsIspInfo {
    std::optional<std::uint32_t> as_number;
    std::optional<std::string> as_name;
    std::optional<std::string> isp_name;
    std::optional<std::string> country;
    bool is_research = false;
    std::optional<std::string> error;
};
// Parses one verbose Cymru answer line; nullopt if malformed or empty.
std::optional<AsIspInfo> parse_registry_answer(std::string_view answer);
AsIspInfo as_isp_lookup(Ipv4 address, Registry& registry, const ResearchClassifier& words);

bool cloud_hosting_check(const EnrichmentRecord& record, const CloudCatalog& catalog);

// The three services bundled, with a per-address cache for the session.
class Enrichment {
public:
    Enrichment(std::shared_ptr<Resolver> resolver, std::shared_ptr<Registry> registry,
               ResearchClassifier words, CloudCatalog catalog);

    EnrichmentRecord lookup(Ipv4 address);
    Resolver& resolver() { return *resolver_; }
    const CloudCatalog& catalog() const { return catalog_; }

private:
    std::shared_ptr<Resolver> resolver_;
    std::shared_ptr<Registry> registry_;
    ResearchClassifier words_;
    CloudCatalog catalog_;
    std::mutex mu_;
    std::map<Ipv4, EnrichmentRecord> cache_;
};

}  // namespace hpfp
