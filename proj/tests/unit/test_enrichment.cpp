#include <gtest/gtest.h>

#include "hpfp/enrichment.hpp"

using namespace hpfp;

namespace {

Ipv4 ip(const char* s) { return *Ipv4::parse(s); }

const char* kRegistry = R"(
{"prefix": "192.0.2.0/24", "answer": "64500 | 192.0.2.7 | 192.0.2.0/24 | DE | ripencc | 2001-01-01 | EXAMPLE-UNIVERSITY-NET - Example University, DE"}
{"prefix": "198.51.100.0/24", "answer": "64501 | 198.51.100.9 | 198.51.100.0/24 | US | arin | 2005-05-05 | EXAMPLE-TELECOM-RESIDENTIAL, US"}
{"prefix": "203.0.113.0/24", "answer": "16509 | 203.0.113.4 | 203.0.113.0/24 | US | arin | 2011-08-19 | AMAZON-02, US"}
{"prefix": "203.0.113.128/25", "answer": ""}
{"prefix": "233.252.0.0/24", "error": "timeout"}
)";

const char* kDns = R"(
{"address": "198.51.100.9", "ptr": ["mail.example.org"]}
{"address": "203.0.113.99", "error": "timeout"}
{"domain": "example.org", "a": ["198.51.100.9", "198.51.100.10"]}
)";

}  // namespace

TEST(Fqdn, FixtureAnswers) {
    auto r = FixtureResolver::parse(kDns);
    auto mail = fqdn_check(ip("198.51.100.9"), r);
    EXPECT_TRUE(mail.has_fqdn);
    EXPECT_EQ(mail.fqdns, std::vector<std::string>{"mail.example.org"});
    auto none = fqdn_check(ip("192.0.2.7"), r);
    EXPECT_FALSE(none.has_fqdn);
    EXPECT_TRUE(none.fqdns.empty());
    EXPECT_FALSE(none.error);
    auto slow = fqdn_check(ip("203.0.113.99"), r);
    EXPECT_EQ(slow.error, "timeout");
    EXPECT_FALSE(slow.has_fqdn);

    // Deterministic against the fixture.
    auto again = fqdn_check(ip("198.51.100.9"), r);
    EXPECT_EQ(again.fqdns, mail.fqdns);
    EXPECT_EQ(r.forward("EXAMPLE.org").addresses.size(), 2u);
    EXPECT_TRUE(r.forward("nowhere.test").addresses.empty());
}

TEST(Fqdn, RejectsBadFixtureLines) {
    EXPECT_THROW(FixtureResolver::parse("{\"address\": \"1.2.3\"}"), std::runtime_error);
    EXPECT_THROW(FixtureResolver::parse("{\"ptr\": []}"), std::runtime_error);
    EXPECT_THROW(FixtureResolver::parse("not json"), std::runtime_error);
}

TEST(AsIsp, ParsesRegistryAnswers) {
    auto info = parse_registry_answer(
        "AS      | IP               | BGP Prefix          | CC | Registry | Allocated  | AS Name\n"
        "16509   | 54.239.28.85     | 54.239.0.0/17       | US | arin     | 2011-08-19 | AMAZON-02, US\n");
    ASSERT_TRUE(info);
    EXPECT_EQ(info->as_number, 16509u);
    EXPECT_EQ(info->as_name, "AMAZON-02");
    EXPECT_EQ(info->country, "US");
    EXPECT_FALSE(parse_registry_answer(""));
    EXPECT_FALSE(parse_registry_answer("garbage"));
}

TEST(AsIsp, ResearchClassification) {
    auto reg = FixtureRegistry::parse(kRegistry);
    auto words = ResearchClassifier::load(ResearchClassifier::default_path());
    auto uni = as_isp_lookup(ip("192.0.2.7"), reg, words);
    EXPECT_FALSE(uni.error);
    EXPECT_EQ(uni.as_name, "EXAMPLE-UNIVERSITY-NET");
    EXPECT_EQ(uni.isp_name, "Example University");
    EXPECT_TRUE(uni.is_research);

    auto home = as_isp_lookup(ip("198.51.100.9"), reg, words);
    EXPECT_FALSE(home.error);
    EXPECT_FALSE(home.is_research);

    auto empty = as_isp_lookup(ip("203.0.113.200"), reg, words);
    EXPECT_EQ(empty.error, "empty answer");
    auto down = as_isp_lookup(ip("233.252.0.1"), reg, words);
    EXPECT_EQ(down.error, "timeout");
    auto unknown = as_isp_lookup(ip("100.64.0.1"), reg, words);
    EXPECT_TRUE(unknown.error);
}

TEST(Cloud, CatalogMembership) {
    auto catalog = CloudCatalog::load(CloudCatalog::default_path());
    EnrichmentRecord aws;
    aws.as_name = "AMAZON-02";
    EXPECT_TRUE(cloud_hosting_check(aws, catalog));
    EnrichmentRecord by_number;
    by_number.as_number = 14061;
    EXPECT_TRUE(cloud_hosting_check(by_number, catalog));
    EnrichmentRecord uni;
    uni.as_number = 64500;
    uni.as_name = "EXAMPLE-UNIVERSITY-NET";
    EXPECT_FALSE(cloud_hosting_check(uni, catalog));
    EXPECT_FALSE(cloud_hosting_check(aws, CloudCatalog{}));
}

TEST(Cloud, FlagsArePureFunctionsOfNames) {
    auto catalog = CloudCatalog::load(CloudCatalog::default_path());
    auto words = ResearchClassifier::load(ResearchClassifier::default_path());
    for (const char* name : {"AMAZON-02", "EXAMPLE-UNIVERSITY-NET", "Research Institute of Things", "ACME"}) {
        EnrichmentRecord a, b;
        a.as_name = b.as_name = std::string(name);
        a.address = ip("192.0.2.1");
        b.address = ip("198.51.100.1");
        EXPECT_EQ(cloud_hosting_check(a, catalog), cloud_hosting_check(b, catalog));
        EXPECT_EQ(words.is_research(a.as_name, std::nullopt), words.is_research(b.as_name, std::nullopt));
    }
}

TEST(Enrichment, CombinesAndCaches) {
    auto dns = std::make_shared<FixtureResolver>(FixtureResolver::parse(kDns));
    auto reg = std::make_shared<FixtureRegistry>(FixtureRegistry::parse(kRegistry));
    Enrichment e(dns, reg, ResearchClassifier::load(ResearchClassifier::default_path()),
                 CloudCatalog::load(CloudCatalog::default_path()));
    auto cloud = e.lookup(ip("203.0.113.4"));
    EXPECT_TRUE(cloud.is_cloud);
    EXPECT_FALSE(cloud.is_research);
    EXPECT_FALSE(cloud.has_fqdn);
    EXPECT_EQ(cloud.source, EnrichmentSource::Fixture);
    EXPECT_TRUE(cloud.errors.empty());

    auto mail = e.lookup(ip("198.51.100.9"));
    EXPECT_TRUE(mail.has_fqdn);
    EXPECT_EQ(mail.has_fqdn, !mail.fqdns.empty());

    dns->add_ptr(ip("203.0.113.4"), {"late.example"});
    EXPECT_EQ(e.lookup(ip("203.0.113.4")), cloud) << "cached for the session";

    auto broken = e.lookup(ip("233.252.0.1"));
    ASSERT_EQ(broken.errors.size(), 1u);
    EXPECT_EQ(broken.errors[0], "whois: timeout");
}
