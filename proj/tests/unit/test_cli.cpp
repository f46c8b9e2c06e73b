#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "fleet_fixture.hpp"

using namespace hpfp;
using namespace hpfp::testing;
namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kNet = 54;

struct Run {
    int rc = -1;
    std::string out;
};

Run cli(const std::string& args) {
    Run r;
    std::string cmd = std::string(HPFP_CLI_PATH) + " " + args + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (auto n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
    int status = ::pclose(p);
    r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("hpfp-cli-" + name + "-" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string session_of(const Run& r) {
    auto at = r.out.find("session ");
    if (at == std::string::npos) return "";
    auto end = r.out.find('\n', at);
    return r.out.substr(at + 8, end - at - 8);
}

std::string write_manifest(const mimic::FleetManifest& m, const std::string& path) {
    std::ofstream(path) << m.to_json();
    return path;
}

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(cli("").rc, 2);
    EXPECT_EQ(cli("frobnicate").rc, 2);
    EXPECT_EQ(cli("scan --metascan maybe --targets 127.54.9.1").rc, 2);
    EXPECT_EQ(cli("scan --targets 127.54.9.1 --rate 0").rc, 2);
    EXPECT_EQ(cli("scan --targets 127.54.9.1 --port-protocol 9=GOPHER").rc, 2);
    EXPECT_EQ(cli("scan --targets 127.54.9.1 --i-understand-scope 127.0.0.0/8").rc, 2);
    EXPECT_EQ(cli("scan").rc, 2);
    EXPECT_EQ(cli("mimic").rc, 2);
}

TEST(Cli, CredentialProbeIsGatedBeforeAnyConnection) {
    auto fleet = spawn_named(kNet, 1, {"stub-rootroot"});
    TempDir dir("gate");
    auto manifest = write_manifest(fleet->manifest(), dir / "m.json");
    auto base = "scan -q --store " + (dir / "st") + " --fleet-manifest " + manifest + " --credential-probe";

    auto no_scope = cli(base);
    EXPECT_EQ(no_scope.rc, 2);
    EXPECT_NE(no_scope.out.find("--i-understand-scope"), std::string::npos);
    auto narrow = cli(base + " --i-understand-scope 10.0.0.0/8");
    EXPECT_EQ(narrow.rc, 2);
    EXPECT_NE(narrow.out.find("does not cover"), std::string::npos);
    EXPECT_EQ(fleet->connections_served(), 0u);
    if (fs::exists(dir / "st"))
        for (const auto& e : fs::directory_iterator(dir / "st")) EXPECT_NE(e.path().filename().string()[0], 's');
}

TEST(Cli, ScanReportDiffValidateHoneyscore) {
    auto fleet = spawn_named(kNet, 2, {"kippo-default", "stub-rosssh", "genuine-http"});
    const auto& m = fleet->manifest();
    TempDir dir("flow");
    auto manifest = write_manifest(m, dir / "m.json");
    auto store = " --store " + (dir / "st");
    auto scan = "scan -q" + store + " --fleet-manifest " + manifest + " --connect-timeout-ms 1000 --rate 64/2/0";

    auto a = cli(scan);
    ASSERT_EQ(a.rc, 0) << a.out;
    auto first = session_of(a);
    EXPECT_NE(a.out.find("probe Kippo 1"), std::string::npos) << a.out;
    auto b = cli(scan);
    ASSERT_EQ(b.rc, 0) << b.out;
    auto second = session_of(b);
    ASSERT_NE(first, second);

    auto diff = cli("diff" + store + " --prev " + first + " --curr " + second + " -q");
    EXPECT_EQ(diff.rc, 0);
    EXPECT_EQ(diff.out, "");

    auto lines = cli("report" + store + " --session " + first + " --format lines");
    EXPECT_EQ(lines.rc, 0);
    EXPECT_NE(lines.out.find("\"record\":\"honeypot\""), std::string::npos);
    EXPECT_NE(lines.out.find("SSH-2.0-ROSSSH"), std::string::npos);
    EXPECT_EQ(cli("report" + store + " --session " + first + " --format pdf").rc, 2);
    EXPECT_EQ(cli("report" + store + " --session nope").rc, 3);

    auto kippo = m.by_profile("kippo-default").front()->endpoint.address.str();
    std::ofstream(dir / "resolve.jsonl") << "{\"domain\": \"popular.example\", \"a\": [\"" << kippo << "\"]}\n"
                                         << "{\"domain\": \"other.example\", \"a\": [\"192.0.2.1\"]}\n";
    std::ofstream(dir / "hit.txt") << "1,popular.example\n";
    std::ofstream(dir / "miss.txt") << "other.example\n";
    auto v = "validate" + store + " --session " + first + " --resolver-fixture " + (dir / "resolve.jsonl");
    auto hit = cli(v + " --domain-lists " + (dir / "hit.txt"));
    EXPECT_EQ(hit.rc, 1);
    EXPECT_NE(hit.out.find("intersection 1"), std::string::npos);
    EXPECT_EQ(cli(v + " --domain-lists " + (dir / "miss.txt")).rc, 0);

    std::ofstream(dir / "scores.jsonl") << "{\"address\": \"" << kippo << "\", \"score\": 0.3}\n";
    auto hs = cli("honeyscore" + store + " --session " + first + " --honeyscore-fixture " + (dir / "scores.jsonl"));
    EXPECT_EQ(hs.rc, 0) << hs.out;
    EXPECT_NE(hs.out.find("Kippo 0:0, 0.3:1, 0.5:0, 0.8:0, 1:0, NA:0"), std::string::npos) << hs.out;

    std::ofstream(dir / "bad.jsonl") << "{\"address\": \"" << kippo << "\", \"score\": 0.42}\n";
    auto bad = cli("honeyscore" + store + " --session " + second + " --honeyscore-fixture " + (dir / "bad.jsonl"));
    EXPECT_EQ(bad.rc, 3);
}

TEST(Cli, ConfigFileReplacesDefaultsFlagsWin) {
    TempDir dir("config");
    std::ofstream(dir / "hpfp.toml") << "[scan]\nrate = \"0\"\n";
    auto base = "--config " + (dir / "hpfp.toml") + " scan -q --store " + (dir / "st") + " --targets 127.54.9.1 --ports 1";
    EXPECT_EQ(cli(base).rc, 2);
    auto ok = cli(base + " --rate 8/1/0 --connect-timeout-ms 300");
    EXPECT_EQ(ok.rc, 0) << ok.out;
}

TEST(Cli, MimicUpDownLoopbackOnly) {
    TempDir dir("mimic");
    auto refused = cli("mimic up --profiles genuine-ssh --first-address 192.0.2.10 --manifest " + (dir / "x.json"));
    EXPECT_EQ(refused.rc, 3);
    EXPECT_NE(refused.out.find("loopback"), std::string::npos) << refused.out;

    auto manifest = dir / "m.json";
    std::string up = std::string(HPFP_CLI_PATH) + " mimic up --profiles genuine-ssh,kippo-default --first-address 127.54.3.1 --manifest " +
                     manifest + " > " + (dir / "up.log") + " 2>&1 &";
    ASSERT_EQ(std::system(up.c_str()), 0);
    for (int i = 0; i < 100 && !fs::exists(manifest); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    ASSERT_TRUE(fs::exists(manifest));

    auto scan = cli("scan -q --store " + (dir / "st") + " --fleet-manifest " + manifest + " --connect-timeout-ms 1000");
    EXPECT_EQ(scan.rc, 0) << scan.out;
    EXPECT_NE(scan.out.find("probe Kippo 1"), std::string::npos);

    auto down = cli("mimic down --manifest " + manifest);
    EXPECT_EQ(down.rc, 0) << down.out;
    EXPECT_FALSE(fs::exists(manifest));
}
