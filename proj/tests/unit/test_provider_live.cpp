#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hpfp/provider_live.hpp"

using namespace hpfp;
using json = nlohmann::json;

namespace {

// Local stand-in for the provider APIs on loopback.
class FakeApi {
public:
    FakeApi() {
        port_ = srv_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { srv_.listen_after_bind(); });
        srv_.wait_until_ready();
    }
    ~FakeApi() {
        srv_.stop();
        thread_.join();
    }
    httplib::Server& srv() { return srv_; }
    LiveProviderOptions options() const {
        LiveProviderOptions o;
        o.base_url = "http://127.0.0.1:" + std::to_string(port_);
        o.timeout = std::chrono::milliseconds(3000);
        o.min_interval = std::chrono::milliseconds(0);
        return o;
    }

private:
    httplib::Server srv_;
    int port_ = 0;
    std::thread thread_;
};

json shodan_match(const char* ip, int port) {
    return {{"ip_str", ip}, {"port", port}, {"data", "I20100\r\n"}, {"product", "Gaspot"}};
}

}  // namespace

TEST(Shodan, ParsesSearchPages) {
    json body = {{"total", 150}, {"matches", {shodan_match("192.0.2.1", 10001)}}};
    body["matches"].push_back({{"ip_str", "192.0.2.2"},
                               {"port", 443},
                               {"ssl", {{"cert", {{"subject", {{"CN", "Nepenthes Development Team"}}}}}}}});
    body["matches"].push_back({{"ip_str", "192.0.2.3"}, {"port", 80}});
    auto p = parse_shodan_page(body.dump(), 1);
    ASSERT_EQ(p.records.size(), 2u) << "records without evidence are skipped";
    EXPECT_EQ(p.records[0].banner_text, "I20100\r\n");
    EXPECT_EQ(p.records[0].product, "Gaspot");
    EXPECT_EQ(p.records[1].cert_common_name, "Nepenthes Development Team");
    EXPECT_TRUE(p.more);
    EXPECT_FALSE(parse_shodan_page(body.dump(), 2).more);
    EXPECT_EQ(parse_shodan_page("<html>", 1).status, ProviderStatus::Error);
}

TEST(Shodan, HoneyscoreAnswers) {
    EXPECT_EQ(parse_shodan_honeyscore("0.8").value, 0.8);
    EXPECT_FALSE(parse_shodan_honeyscore("").value);
    EXPECT_EQ(parse_shodan_honeyscore("{\"error\": \"x\"}").status, ProviderStatus::Error);
}

TEST(Shodan, BacksOffOn429AgainstLocalServer) {
    FakeApi api;
    std::atomic<int> hits{0};
    api.srv().Get("/shodan/host/search", [&](const httplib::Request& req, httplib::Response& res) {
        EXPECT_EQ(req.get_param_value("key"), "k");
        EXPECT_EQ(req.get_param_value("query"), "port:10001");
        if (hits++ < 2) {
            res.status = 429;
            return;
        }
        json body = {{"total", 1}, {"matches", {shodan_match("192.0.2.1", 10001)}}};
        res.set_content(body.dump(), "application/json");
    });
    api.srv().Get(R"(/labs/honeyscore/([\d.]+))", [&](const httplib::Request& req, httplib::Response& res) {
        res.set_content(req.matches[1] == "192.0.2.1" ? "0.5" : "0.7", "text/plain");
    });
    ShodanClient c("k", api.options());
    SearchOptions o;
    o.backoff = std::chrono::milliseconds(5);
    auto r = metascan_search({10001}, {&c}, o);
    EXPECT_FALSE(r.incomplete);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(hits.load(), 3);
    EXPECT_EQ(fetch_honeyscore(*Ipv4::parse("192.0.2.1"), c).score, 0.5);
    EXPECT_THROW(fetch_honeyscore(*Ipv4::parse("192.0.2.2"), c), std::runtime_error);

    o.max_retries = 1;
    hits = -5;
    auto partial = metascan_search({10001}, {&c}, o);
    EXPECT_TRUE(partial.incomplete);
    EXPECT_TRUE(partial.records.empty());
}

TEST(Shodan, UnreachableIsAnError) {
    auto o = ShodanClient::defaults();
    o.base_url = "http://127.0.0.1:1";
    o.timeout = std::chrono::milliseconds(500);
    o.min_interval = std::chrono::milliseconds(0);
    ShodanClient c("k", o);
    auto p = c.search(22, 1);
    EXPECT_EQ(p.status, ProviderStatus::Error);
    EXPECT_FALSE(p.error.empty());
}

TEST(Censys, WalksCursorsAndHostViews) {
    FakeApi api;
    std::atomic<int> searches{0};
    api.srv().Get("/api/v2/hosts/search", [&](const httplib::Request& req, httplib::Response& res) {
        ++searches;
        EXPECT_EQ(req.get_param_value("q"), "services.port:502");
        EXPECT_TRUE(req.has_header("Authorization"));
        json body;
        if (!req.has_param("cursor")) {
            body = {{"result", {{"hits", {{{"ip", "192.0.2.1"}}}}, {"links", {{"next", "c2"}}}}}};
        } else {
            EXPECT_EQ(req.get_param_value("cursor"), "c2");
            body = {{"result", {{"hits", {{{"ip", "192.0.2.2"}}}}, {"links", {{"next", ""}}}}}};
        }
        res.set_content(body.dump(), "application/json");
    });
    api.srv().Get(R"(/api/v2/hosts/([\d.]+))", [&](const httplib::Request& req, httplib::Response& res) {
        json svc = {{"port", 502}, {"service_name", "MODBUS"}, {"software", {{{"product", "Conpot"}}}}};
        json https = {{"port", 443},
                      {"tls", {{"certificates", {{"leaf_data", {{"subject", {{"common_name", {"x"}}}}}}}}}}};
        json body = {{"result", {{"ip", req.matches[1]}, {"services", {https, svc}}}}};
        res.set_content(body.dump(), "application/json");
    });
    CensysClient c("id", "secret", api.options());
    auto r = metascan_search({502}, {&c});
    EXPECT_FALSE(r.incomplete);
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_EQ(searches.load(), 2);
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.product, "Conpot");
        EXPECT_EQ(rec.provider, "censys");
        EXPECT_FALSE(rec.cert_common_name) << "evidence comes from the searched port only";
    }
    EXPECT_EQ(c.honeyscore(*Ipv4::parse("192.0.2.1")).status, ProviderStatus::Error);
    EXPECT_EQ(c.search(502, 7).status, ProviderStatus::Error);
}

TEST(LiveProviders, FromEnvNeedsCredentials) {
    ::unsetenv("SHODAN_API_KEY");
    ::unsetenv("CENSYS_API_ID");
    EXPECT_EQ(ShodanClient::from_env(), nullptr);
    EXPECT_EQ(CensysClient::from_env(), nullptr);
    ::setenv("SHODAN_API_KEY", "abc", 1);
    EXPECT_NE(ShodanClient::from_env(), nullptr);
    ::unsetenv("SHODAN_API_KEY");
}
