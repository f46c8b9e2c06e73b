#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpfp/enrichment.hpp"
#include "hpfp/probe_engine.hpp"
#include "hpfp/probe_pipeline.hpp"
#include "hpfp/signature_store.hpp"
#include "hpfp/types.hpp"

namespace hpfp {

struct ProviderRecord {
    Ipv4 address;
    std::uint16_t port = 0;
    std::optional<std::string> banner_text;
    std::optional<std::string> http_body;
    std::optional<std::string> cert_common_name;
    std::optional<std::string> product;
    // "shodan", "censys", "fixture" or several joined with '+' after dedup.
    std::string provider;
    // Provider payloads, one per contributing provider.
    std::vector<std::string> raw;

    bool has_evidence() const { return banner_text || http_body || cert_common_name || product; }
    bool operator==(const ProviderRecord&) const = default;
};

// Score set published by Shodan's honeyscore API; nullopt is NA.
struct HoneyscoreRecord {
    Ipv4 address;
    std::optional<double> score;
    bool operator==(const HoneyscoreRecord&) const = default;
};

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

const std::vector<double>& honeyscore_values();
// Snaps to the published value; throws ProtocolError for anything else.
double checked_honeyscore(double v);
// Text answer of the honeyscore endpoint: a number, or empty/"NA"/"null" for NA.
std::optional<double> parse_honeyscore_text(std::string_view text);
std::string honeyscore_label(const std::optional<double>& score);

enum class ProviderStatus { Ok, RateLimited, Error };

struct SearchPage {
    ProviderStatus status = ProviderStatus::Ok;
    std::vector<ProviderRecord> records;
    bool more = false;
    std::string error;
};

struct HoneyscoreAnswer {
    ProviderStatus status = ProviderStatus::Ok;
    std::optional<double> value;  // unchecked; nullopt = NA
    std::string error;
};

// Neutral provider interface shared by the live clients and the fixtures.
class ProviderClient {
public:
    virtual ~ProviderClient() = default;
    virtual std::string name() const = 0;
    // Page numbers start at 1.
    virtual SearchPage search(std::uint16_t port, int page) = 0;
    virtual HoneyscoreAnswer honeyscore(Ipv4 address) = 0;
    // Documented request spacing for the provider's API.
    virtual std::chrono::milliseconds min_interval() const { return std::chrono::milliseconds(0); }
};

// Records and scores read from line-delimited JSON. Records:
//   {"address": "...", "port": 502, "banner": "...", "http_body": "...",
//    "cert_common_name": "...", "product": "..."}
// Scores: {"address": "...", "score": 0.8} or {"address": "...", "score": null}.
// Text fields use the signature escape syntax for raw bytes.
class FixtureProvider : public ProviderClient {
public:
    explicit FixtureProvider(std::string name = "fixture", std::size_t page_size = 100);
    static std::unique_ptr<FixtureProvider> load(const std::string& name, const std::filesystem::path& records,
                                const std::optional<std::filesystem::path>& scores = std::nullopt);

    void add(ProviderRecord r);
    void set_score(Ipv4 a, std::optional<double> score) { scores_[a] = score; }
    // The next n search calls answer "rate limited".
    void rate_limit_next(int n) { throttled_ = n; }
    int calls() const { return calls_; }
    const std::vector<ProviderRecord>& records() const { return records_; }

    std::string name() const override { return name_; }
    SearchPage search(std::uint16_t port, int page) override;
    HoneyscoreAnswer honeyscore(Ipv4 address) override;

private:
    std::string name_;
    std::size_t page_size_;
    std::vector<ProviderRecord> records_;
    std::map<Ipv4, std::optional<double>> scores_;
    std::mutex mu_;
    int throttled_ = 0;
    int calls_ = 0;
};

std::vector<ProviderRecord> parse_provider_records(std::string_view text, const std::string& provider);
std::string record_to_json_line(const ProviderRecord& r);
std::map<Ipv4, std::optional<double>> parse_honeyscore_fixture(std::string_view text);

struct SearchOptions {
    int max_retries = 4;
    std::chrono::milliseconds backoff{500};  // doubles per retry
    int max_pages = 20;
};

struct MetascanResult {
    std::vector<ProviderRecord> records;  // deduplicated on (address, port)
    bool incomplete = false;
    std::vector<std::string> errors;
};

MetascanResult metascan_search(const std::vector<std::uint16_t>& ports,
                               const std::vector<ProviderClient*>& providers, const SearchOptions& opts = {});

// Union keyed on (address, port); evidence fields are filled from later
// providers only where earlier ones had none.
std::vector<ProviderRecord> deduplicate(std::vector<ProviderRecord> records);

struct KeywordHit {
    ProviderRecord record;
    HoneypotType honeypot;
    std::vector<std::string> signatures;
};

std::vector<KeywordHit> keyword_filter(const std::vector<ProviderRecord>& records, const SignatureSet& set);

// ICS ports on which the cloud-hosting check decides.
bool is_ics_port(std::uint16_t port);

std::vector<Verdict> run_metascan_pipeline(const std::vector<ProviderRecord>& records, const SignatureSet& set,
                                           Enrichment& enrichment);

HoneyscoreRecord fetch_honeyscore(Ipv4 address, ProviderClient& provider);

// Builds provider-style records from probe transcripts, i.e. what a mass
// scanner would have stored about the same services. `canonical_port` maps
// an observed endpoint to the port a provider would index it under.
std::vector<ProviderRecord> records_from_transcripts(
    const std::vector<ProbeTranscript>& transcripts,
    const std::function<std::uint16_t(const Endpoint&)>& canonical_port, const std::string& provider = "fixture");

}  // namespace hpfp
