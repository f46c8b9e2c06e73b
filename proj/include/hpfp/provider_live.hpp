#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "hpfp/metascan.hpp"

namespace hpfp {

struct LiveProviderOptions {
    std::string base_url;  // scheme://host[:port]
    std::chrono::milliseconds timeout{15000};
    std::chrono::milliseconds min_interval{1000};
};

// One JSON page of /shodan/host/search. `page_size` is the API's fixed 100.
SearchPage parse_shodan_page(std::string_view body, int page, std::size_t page_size = 100);
// /labs/honeyscore answers with a bare number.
HoneyscoreAnswer parse_shodan_honeyscore(std::string_view body);

// Evidence fields from one /v2/hosts/{ip} document, restricted to `port`.
std::optional<ProviderRecord> parse_censys_host(std::string_view body, std::uint16_t port);

// Shodan REST API. Key from SHODAN_API_KEY.
class ShodanClient : public ProviderClient {
public:
    explicit ShodanClient(std::string key, LiveProviderOptions opts = defaults());
    static LiveProviderOptions defaults();
    // nullptr when the key is not set.
    static std::unique_ptr<ShodanClient> from_env();

    std::string name() const override { return "shodan"; }
    SearchPage search(std::uint16_t port, int page) override;
    HoneyscoreAnswer honeyscore(Ipv4 address) override;
    std::chrono::milliseconds min_interval() const override { return opts_.min_interval; }

private:
    std::string key_;
    LiveProviderOptions opts_;
    std::mutex mu_;
    std::chrono::steady_clock::time_point next_{};
};

// Censys Search v2. Hits come from /v2/hosts/search, evidence from one host
// view per hit. Pages are cursor based; page n is reached by walking the
// cursors of pages 1..n-1. Credentials from CENSYS_API_ID / CENSYS_API_SECRET.
class CensysClient : public ProviderClient {
public:
    CensysClient(std::string id, std::string secret, LiveProviderOptions opts = defaults());
    static LiveProviderOptions defaults();
    static std::unique_ptr<CensysClient> from_env();

    std::string name() const override { return "censys"; }
    SearchPage search(std::uint16_t port, int page) override;
    // Censys has no honeyscore; always an error answer.
    HoneyscoreAnswer honeyscore(Ipv4 address) override;
    std::chrono::milliseconds min_interval() const override { return opts_.min_interval; }

private:
    struct Reply {
        int status = 0;
        std::string body;
        std::string error;
    };
    Reply get(const std::string& path);

    std::string id_, secret_;
    LiveProviderOptions opts_;
    std::mutex mu_;
    std::chrono::steady_clock::time_point next_{};
    std::map<std::pair<std::uint16_t, int>, std::string> cursors_;
};

}  // namespace hpfp
