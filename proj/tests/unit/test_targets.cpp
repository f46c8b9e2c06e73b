#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "hpfp/targets.hpp"

using namespace hpfp;

namespace {

Ipv4 ip(const char* s) { return *Ipv4::parse(s); }

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
    auto p = std::filesystem::temp_directory_path() / ("hpfp_targets_" + name);
    std::ofstream(p) << body;
    return p;
}

}  // namespace

TEST(Cidr, ParsesAndRejects) {
    auto c = Cidr::parse("127.0.0.0/30");
    ASSERT_TRUE(c);
    EXPECT_EQ(c->size(), 4u);
    EXPECT_EQ(Ipv4(c->last()).str(), "127.0.0.3");
    EXPECT_EQ(Cidr::parse("10.1.2.3")->size(), 1u);
    EXPECT_EQ(Cidr::parse("0.0.0.0/0")->size(), std::uint64_t(1) << 32);
    EXPECT_FALSE(Cidr::parse("10.0.0.1/24"));  // host bits set
    EXPECT_FALSE(Cidr::parse("10.0.0.0/33"));
    EXPECT_FALSE(Cidr::parse("10.0.0/8"));
    EXPECT_FALSE(Cidr::parse("10.0.0.0/"));
}

TEST(Targets, SubtractsExclusions) {
    auto t = ingest_targets({{"127.0.0.0/30"}, {"127.0.0.2"}});
    auto v = t.addresses.expand();
    EXPECT_EQ(v, (std::vector<Ipv4>{ip("127.0.0.0"), ip("127.0.0.1"), ip("127.0.0.3")}));
    EXPECT_TRUE(t.warnings.empty());
}

TEST(Targets, FullSubtractionWarns) {
    auto t = ingest_targets({{"127.0.0.0/30"}, {"127.0.0.0/24"}});
    EXPECT_TRUE(t.addresses.empty());
    ASSERT_EQ(t.warnings.size(), 1u);
}

TEST(Targets, LargeSetWarnsButIsAccepted) {
    auto t = ingest_targets({{"10.0.0.0/8"}, {}});
    EXPECT_EQ(t.addresses.size(), std::uint64_t(1) << 24);
    ASSERT_EQ(t.warnings.size(), 1u);
    EXPECT_NE(t.warnings[0].find("16777216"), std::string::npos);
    auto small = ingest_targets({{"10.0.0.0/9"}, {}});
    EXPECT_TRUE(small.warnings.empty());
}

TEST(Targets, NoImplicitDefault) { EXPECT_THROW(ingest_targets({}), TargetError); }

TEST(Targets, FilesAndErrorLocations) {
    auto good = write_temp("good.txt", "# lab\n127.0.0.1, 127.0.0.2\n\n127.0.1.0/31 # pair\n");
    auto t = ingest_targets({{"@" + good.string()}, {"127.0.1.1"}});
    EXPECT_EQ(t.addresses.size(), 3u);

    auto bad = write_temp("bad.txt", "127.0.0.1\n127.0.0.300\n");
    try {
        ingest_targets({{"@" + bad.string()}, {}});
        FAIL();
    } catch (const TargetError& e) {
        EXPECT_EQ(e.where(), bad.string() + ":2");
    }
    try {
        ingest_targets({{"127.0.0.1", "nope"}, {}});
        FAIL();
    } catch (const TargetError& e) {
        EXPECT_EQ(e.where(), "target 2");
    }
}

TEST(Targets, SetArithmeticMatchesBruteForce) {
    std::mt19937 rng(3);
    std::uniform_int_distribution<std::uint32_t> off(0, 255);
    std::uniform_int_distribution<int> pre(26, 32);
    for (int round = 0; round < 200; ++round) {
        AddressSet a, b;
        std::set<std::uint32_t> ra, rb;
        for (int i = 0; i < 4; ++i) {
            int p = pre(rng);
            std::uint32_t mask = ~std::uint32_t(0) << (32 - p);
            Cidr c{Ipv4((0x0a000000u | off(rng)) & mask), p};
            a.add(c);
            for (std::uint32_t v = c.first(); v <= c.last(); ++v) ra.insert(v);
            Cidr d{Ipv4((0x0a000000u | off(rng)) & mask), p};
            b.add(d);
            for (std::uint32_t v = d.first(); v <= d.last(); ++v) rb.insert(v);
        }
        a.subtract(b);
        std::set<std::uint32_t> want;
        for (auto v : ra)
            if (!rb.count(v)) want.insert(v);
        std::set<std::uint32_t> got;
        for (auto x : a.expand()) got.insert(x.value());
        ASSERT_EQ(got, want);
        ASSERT_EQ(a.size(), want.size());
        for (std::uint32_t v = 0x0a000000u; v < 0x0a000100u; ++v) ASSERT_EQ(a.contains(Ipv4(v)), want.count(v) > 0);
        for (std::size_t i = 1; i < a.ranges().size(); ++i)
            ASSERT_GT(a.ranges()[i].first, a.ranges()[i - 1].second + 1);
    }
}

TEST(Targets, PortLists) {
    EXPECT_EQ(parse_ports("22, 80,8000-8002 22"), (std::vector<std::uint16_t>{22, 80, 8000, 8001, 8002}));
    EXPECT_THROW(parse_ports("0"), TargetError);
    EXPECT_THROW(parse_ports("70000"), TargetError);
    EXPECT_THROW(parse_ports("90-80"), TargetError);
}
