#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fleet_fixture.hpp"
#include "hpfp/classify_report.hpp"
#include "hpfp/orchestrator.hpp"

using namespace hpfp;
using namespace hpfp::testing;
namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kNet = 52;

Ipv4 ip(const char* s) { return *Ipv4::parse(s); }

ScanSession scan(const mimic::FleetManifest& m, ScanConfig cfg) {
    auto spec = spec_for(m);
    return run_scan_session(spec, ingest_targets(spec), bundled_signatures(), cfg);
}

ScanSession scan(const mimic::FleetManifest& m) { return scan(m, scan_config_for(m)); }

const Verdict& verdict_for(const ScanSession& s, Ipv4 a) {
    for (const auto& v : s.verdicts)
        if (v.endpoint.address == a) return v;
    throw std::runtime_error("no verdict for " + a.str());
}

Ipv4 address_of(const mimic::FleetManifest& m, const std::string& profile) {
    return m.by_profile(profile).front()->endpoint.address;
}

fs::path write_temp(const std::string& name, const std::string& text) {
    auto p = fs::temp_directory_path() / ("hpfp-" + std::to_string(::getpid()) + "-" + name);
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST(VersionDetection, MarkersPickTheRelease) {
    auto fleet = spawn_named(kNet, 1, {"cowrie-1.5.1", "cowrie-1.5.3", "glastopf-default", "glastopf-0.2.0",
                                       "gaspot-default", "conpot-default"});
    const auto& m = fleet->manifest();
    auto s = scan(m);
    auto version = [&](const std::string& profile) {
        const auto& v = verdict_for(s, address_of(m, profile));
        EXPECT_TRUE(v.is_honeypot) << profile;
        return detect_version(v, s.transcripts, bundled_signatures());
    };
    EXPECT_EQ(version("cowrie-1.5.1").version, "1.5.1");
    EXPECT_EQ(version("cowrie-1.5.3").version, "1.5.3");
    EXPECT_EQ(version("glastopf-default").version, "3.1.2");
    EXPECT_EQ(version("glastopf-0.2.0").version, "0.2.0");
    auto gaspot = version("gaspot-default");
    EXPECT_FALSE(gaspot.version);
    EXPECT_TRUE(gaspot.candidates.empty());
    EXPECT_TRUE(version("conpot-default").version.has_value());

    // Evidence that satisfies two markers yields no version.
    auto v = verdict_for(s, address_of(m, "glastopf-default"));
    auto ts = s.transcripts;
    for (auto& t : ts)
        if (t.endpoint.address == v.endpoint.address) t.response += "<h2>My Resource</h2>";
    auto amb = detect_version(v, ts, bundled_signatures());
    EXPECT_TRUE(amb.ambiguous());
    EXPECT_FALSE(amb.version);
    EXPECT_EQ(amb.candidates, (std::vector<std::string>{"0.2.0", "3.1.2"}));
}

TEST(DefaultConfig, StockAndCustomisedBodies) {
    auto mutated = profile_library().mutate("glastopf-default", Stage::HttpBody);
    auto fleet = mimic::Fleet::spawn({profile_library().at("glastopf-default"), mutated}, fleet_options(kNet, 2));
    const auto& m = fleet->manifest();
    auto cfg = scan_config_for(m);
    cfg.pipeline.full_trace = true;
    auto s = scan(m, cfg);

    const auto& stock = verdict_for(s, address_of(m, "glastopf-default"));
    EXPECT_TRUE(stock.is_honeypot);
    EXPECT_TRUE(detect_default_config(stock, bundled_signatures()));

    // The customised body fails its stage, so the host is no honeypot; the
    // candidate trace still records that it is not stock.
    const auto& custom = verdict_for(s, address_of(m, mutated.name));
    EXPECT_FALSE(custom.is_honeypot);
    EXPECT_FALSE(detect_default_config(custom, bundled_signatures()));
}

TEST(SideFindings, BannerAndDefaultPasswordOnly) {
    auto fleet = spawn_named(kNet, 3, {"stub-rosssh", "stub-rootroot", "genuine-ssh", "kippo-default"});
    const auto& m = fleet->manifest();
    auto cfg = scan_config_for(m);
    cfg.probe.credential_probe = true;
    cfg.credential_scope = "127.52.3.0/24";
    auto s = scan(m, cfg);
    EXPECT_TRUE(verdict_for(s, address_of(m, "kippo-default")).is_honeypot);
    EXPECT_FALSE(verdict_for(s, address_of(m, "stub-rootroot")).is_honeypot);

    auto banners = load_vulnerable_banners(default_vulnerable_banners_path());
    auto f = flag_vulnerable_nonhoneypot(s, banners);
    ASSERT_EQ(f.size(), 2u);
    auto rosssh = address_of(m, "stub-rosssh");
    auto rootroot = address_of(m, "stub-rootroot");
    bool saw_banner = false, saw_password = false;
    for (const auto& x : f) {
        if (x.kind == FindingKind::VulnerableBanner) {
            saw_banner = true;
            EXPECT_EQ(x.address, rosssh);
            EXPECT_EQ(x.detail, "SSH-2.0-ROSSSH");
        } else {
            saw_password = true;
            EXPECT_EQ(x.address, rootroot);
            EXPECT_EQ(x.detail, "root/root");
        }
    }
    EXPECT_TRUE(saw_banner && saw_password);

    // The same transcripts without the session flag give no password finding.
    s.credential_probe = false;
    EXPECT_EQ(flag_vulnerable_nonhoneypot(s, banners).size(), 1u);
}

TEST(SideFindings, BannerFileFormat) {
    auto p = write_temp("banners", "# c\nSSH-2.0-X | CVE-1, CVE-2\n\n220 Y\n");
    auto b = load_vulnerable_banners(p);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b[0].banner, "SSH-2.0-X");
    EXPECT_EQ(b[0].cve_refs, (std::vector<std::string>{"CVE-1", "CVE-2"}));
    EXPECT_TRUE(b[1].cve_refs.empty());
    fs::remove(p);
}

TEST(GroundTruth, PlantedCollisionAndDisjointLists) {
    ScanSession s;
    Verdict hp;
    hp.endpoint = {ip("192.0.2.7"), 22, Protocol::SSH};
    hp.is_honeypot = true;
    hp.honeypot = "Kippo";
    Verdict neg = hp;
    neg.endpoint.address = ip("192.0.2.8");
    neg.is_honeypot = false;
    neg.honeypot.reset();
    s.verdicts = {hp, neg};

    auto resolver = FixtureResolver::parse(
        "{\"domain\": \"planted.example\", \"a\": [\"192.0.2.7\"]}\n"
        "{\"domain\": \"shop.example\", \"a\": [\"192.0.2.8\"]}\n"
        "{\"domain\": \"news.example\", \"a\": [\"198.51.100.1\"]}\n"
        "{\"domain\": \"broken.example\", \"error\": \"timeout\"}\n");
    auto planted = write_temp("top.csv", "1,news.example\n2,Planted.Example\n3,broken.example\n");
    auto disjoint = write_temp("other.txt", "# list\nshop.example\nnews.example\n");
    auto empty = write_temp("empty.txt", "");

    auto r = validate_ground_truth(s, {planted}, resolver);
    ASSERT_EQ(r.intersection.size(), 1u);
    EXPECT_EQ(r.intersection[0].domain, "planted.example");
    EXPECT_FALSE(r.passed());
    EXPECT_EQ(r.lists[0].domains, 3u);
    EXPECT_EQ(r.lists[0].unresolved, 1u);

    auto d = validate_ground_truth(s, {disjoint}, resolver);
    EXPECT_TRUE(d.passed()) << "negative verdict addresses never collide";

    auto e = validate_ground_truth(s, {empty}, resolver);
    EXPECT_TRUE(e.passed());
    EXPECT_FALSE(e.warnings.empty());
    for (const auto& p : {planted, disjoint, empty}) fs::remove(p);
}

TEST(Honeyscore, HistogramRowsPerType) {
    ScanSession s;
    auto add = [&](const char* a, const char* type) {
        Verdict v;
        v.endpoint = {ip(a), 22, Protocol::SSH};
        v.is_honeypot = true;
        v.honeypot = type;
        s.verdicts.push_back(v);
    };
    add("192.0.2.1", "Kippo");
    add("192.0.2.2", "Kippo");
    add("192.0.2.3", "Kippo");
    add("192.0.2.4", "Cowrie");
    add("192.0.2.5", "Cowrie");  // no score record: not counted
    s.honeyscores = {{ip("192.0.2.1"), 0.0}, {ip("192.0.2.2"), 0.0}, {ip("192.0.2.3"), 0.8},
                     {ip("192.0.2.4"), std::nullopt}};
    auto h = honeyscore_histogram(s);
    EXPECT_EQ(histogram_row(h.at("Kippo")), "0:2, 0.3:0, 0.5:0, 0.8:1, 1:0, NA:0");
    EXPECT_EQ(histogram_row(h.at("Cowrie")), "0:0, 0.3:0, 0.5:0, 0.8:0, 1:0, NA:1");
    EXPECT_EQ(honeyscore_bucket(1.0), 4u);
    EXPECT_THROW(checked_honeyscore(0.4), ProtocolError);
}

TEST(Report, FormatsAndEmptySession) {
    EXPECT_THROW(parse_report_format("xml"), UsageError);
    ScanSession empty;
    empty.session_id = "s-empty";
    ReportInput in{&empty, {}, {}, std::nullopt};
    auto summary = export_report(in, parse_report_format("summary"));
    EXPECT_NE(summary.find("session s-empty"), std::string::npos);
    EXPECT_NE(summary.find("honeypot"), std::string::npos);
    EXPECT_EQ(export_report(in, ReportFormat::Lines), "");
    EXPECT_NO_THROW(export_report(in, ReportFormat::Table));
    EXPECT_THROW(export_report(ReportInput{}, ReportFormat::Table), UsageError);
}

TEST(Report, AnnotatedFleetSession) {
    auto fleet = spawn_named(kNet, 4, {"cowrie-1.5.3", "dionaea-default", "genuine-http"});
    const auto& m = fleet->manifest();
    auto s = scan(m);
    ReportInput in{&s, annotate(s, bundled_signatures()), {}, std::nullopt};
    ASSERT_EQ(in.annotations.size(), 2u);
    std::istringstream lines(export_report(in, ReportFormat::Lines));
    std::string line;
    int honeypots = 0;
    while (std::getline(lines, line)) {
        auto j = nlohmann::json::parse(line);
        if (j["record"] == "honeypot") {
            ++honeypots;
            if (j["honeypot"] == "Cowrie") EXPECT_EQ(j["version"], "1.5.3");
        }
    }
    EXPECT_EQ(honeypots, 2);
    auto table = export_report(in, ReportFormat::Table);
    EXPECT_NE(table.find("1.5.3"), std::string::npos);
    EXPECT_NE(table.find("Dionaea"), std::string::npos);
}
