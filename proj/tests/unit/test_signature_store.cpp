#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <tuple>

#include "hpfp/bytes.hpp"
#include "hpfp/signature_store.hpp"

using namespace hpfp;

namespace {

const SignatureSet& bundled() {
    static const SignatureSet set = load_signature_file(default_signature_path());
    return set;
}

bool has_row(const SignatureSet& set, const std::string& honeypot, Stage stage,
             const std::string& pattern) {
    for (const auto& s : set.signatures())
        if (s.honeypot == honeypot && s.stage == stage && s.pattern == pattern && !s.is_marker())
            return true;
    return false;
}

std::vector<std::string> hit_types(const std::vector<SignatureHit>& hits) {
    std::vector<std::string> out;
    for (const auto& h : hits) out.push_back(h.honeypot);
    return out;
}

}  // namespace

TEST(SignatureLoad, EmptySourceGivesEmptySet) {
    auto set = load_signatures("");
    EXPECT_TRUE(set.empty());
    EXPECT_TRUE(load_signatures("# only a comment\n\n").empty());
}

TEST(SignatureLoad, MalformedRecordReportsLine) {
    try {
        load_signatures("@applies X | banner\n\nbroken | X | SSH\n");
        FAIL() << "expected a parse error";
    } catch (const SignatureError& e) {
        EXPECT_EQ(e.kind(), SignatureError::Kind::Parse);
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(SignatureLoad, UnknownProtocolIsParseError) {
    EXPECT_THROW(load_signatures("@applies X | banner\na | X | GOPHER | banner | exact | | p\n"),
                 SignatureError);
}

TEST(SignatureLoad, DuplicateKeyNamesBothRecords) {
    const char* src =
        "@applies X | banner\n"
        "first | X | SSH | banner | exact | | SSH-2.0-x\n"
        "second | X | SSH | banner | prefix | | SSH-2.0-x\n";
    try {
        load_signatures(src);
        FAIL() << "expected a validation error";
    } catch (const SignatureError& e) {
        EXPECT_EQ(e.kind(), SignatureError::Kind::Validation);
        std::string msg = e.what();
        EXPECT_NE(msg.find("first"), std::string::npos);
        EXPECT_NE(msg.find("second"), std::string::npos);
    }
}

TEST(SignatureLoad, DuplicateIdRejected) {
    const char* src =
        "@applies X | banner\n"
        "a | X | SSH | banner | exact | | one\n"
        "a | X | SSH | banner | exact | | two\n";
    EXPECT_THROW(load_signatures(src), SignatureError);
}

TEST(SignatureLoad, BadRegexRejected) {
    EXPECT_THROW(load_signatures("@applies X | banner\na | X | SSH | banner | regex | | (unclosed\n"),
                 SignatureError);
}

TEST(SignatureLoad, RegexMatchingEmptyInputRejected) {
    EXPECT_THROW(load_signatures("@applies X | banner\na | X | SSH | banner | regex | | x*\n"),
                 SignatureError);
}

TEST(SignatureLoad, EmptyPatternRejected) {
    EXPECT_THROW(load_signatures("@applies X | banner\na | X | SSH | banner | exact | | \n"),
                 SignatureError);
}

TEST(SignatureLoad, HandshakeNeedsCommand) {
    EXPECT_THROW(
        load_signatures("@applies X | handshake\na | X | SSH | handshake | exact | | resp\n"),
        SignatureError);
}

TEST(SignatureLoad, HoneypotWithoutApplicabilityRejected) {
    EXPECT_THROW(load_signatures("a | X | SSH | banner | exact | | SSH-2.0-x\n"), SignatureError);
}

TEST(SignatureLoad, IncludeNeedsFileContext) {
    EXPECT_THROW(load_signatures("@include other.sig\n"), SignatureError);
}

TEST(BundledSignatures, LoadsWithKippoDefaultBanner) {
    EXPECT_TRUE(has_row(bundled(), "Kippo", Stage::Banner, "SSH-2.0-OpenSSH_5.1p1 Debian-5"));
}

TEST(BundledSignatures, AllSeventeenKippoBanners) {
    const std::vector<std::string> banners{
        "SSH-1.99-OpenSSH_4.3",
        "SSH-1.99-OpenSSH_4.7",
        "SSH-1.99-Sun_SSH_1.1",
        "SSH-2.0-OpenSSH_4.2p1 Debian-7ubuntu3.1",
        "SSH-2.0-OpenSSH_4.3",
        "SSH-2.0-OpenSSH_4.6",
        "SSH-2.0-OpenSSH_5.1p1 Debian-5",
        "SSH-2.0-OpenSSH_5.1p1 FreeBSD-20080901",
        "SSH-2.0-OpenSSH_5.3p1 Debian-3ubuntu5",
        "SSH-2.0-OpenSSH_5.3p1 Debian-3ubuntu6",
        "SSH-2.0-OpenSSH_5.3p1 Debian-3ubuntu7",
        "SSH-2.0-OpenSSH_5.5p1 Debian-6",
        "SSH-2.0-OpenSSH_5.5p1 Debian-6+squeeze1",
        "SSH-2.0-OpenSSH_5.5p1 Debian-6+squeeze2",
        "SSH-2.0-OpenSSH_5.8p2_hpn13v11 FreeBSD-20110503",
        "SSH-2.0-OpenSSH_5.9p1 Debian-5ubuntu1",
        "SSH-2.0-OpenSSH_5.9",
    };
    int kippo_banners = 0;
    for (const auto& s : bundled().signatures())
        if (s.honeypot == "Kippo" && s.stage == Stage::Banner) ++kippo_banners;
    EXPECT_EQ(kippo_banners, 17);
    for (const auto& b : banners) EXPECT_TRUE(has_row(bundled(), "Kippo", Stage::Banner, b)) << b;
}

TEST(BundledSignatures, BannerTableRows) {
    using R = std::tuple<std::string, Protocol, std::string>;
    const std::vector<R> rows{
        {"Cowrie", Protocol::SSH, "Debian GNU/Linux 7"},
        {"Cowrie", Protocol::Telnet, "\xff\xfd\x1flogin: "},
        {"Glastopf", Protocol::HTTP, "Apache httpd"},
        {"Dionaea", Protocol::FTP, "220 Welcome to the ftp service"},
        {"Amun(SMTP)", Protocol::SMTP, "220 mail.example.com SMTP Mailserver"},
        {"Amun(IMAP)", Protocol::IMAP, "a001 OK LOGIN completed"},
        {"Amun(FTP)", Protocol::FTP, "220 Welcome to my FTP Server"},
        {"Conpot", Protocol::SSH, "SSH-2.0-OpenSSH_6.7p1 Ubuntu-5ubuntu1.3"},
        {"Conpot", Protocol::Telnet, "Connected to [00:13:EA:00:00:0]"},
        {"Nepenthes", Protocol::FTP, "220 ---freeFTPd 1.0---warFTPd 1.65---"},
        {"MTPot", Protocol::Telnet,
         std::string("\xff\xfb\x01\xff\xfb\x03\xff\xfc\x27\xff\xfe\x01\xff\xfd\x03\xff\xfe\x22"
                     "\xff\xfd\x27\xff\xfd\x18\xff\xfe\x1f")},
    };
    for (const auto& [h, proto, pattern] : rows) {
        bool found = false;
        for (const auto& s : bundled().signatures())
            found |= s.honeypot == h && s.protocol == proto && s.stage == Stage::Banner &&
                     s.pattern == pattern;
        EXPECT_TRUE(found) << h << " " << escape(pattern);
    }
}

TEST(BundledSignatures, HandshakeTableRows) {
    const auto& set = bundled();
    auto command_of = [&](const std::string& id) { return set.find(id)->command.value_or(""); };
    EXPECT_EQ(command_of("kippo-hs-ssh"), "SSH-2.0-OpenSSH\n\n\n\n\n\n\n\n\n\n");
    EXPECT_EQ(command_of("cowrie-hs-ssh"),
              "SSH-2.0-OpenSSH_6.0p1 Debian-4+deb7u2\nSSH-2.0-OpenSSH_6.0p1 Debian-4+deb7u2\n");
    EXPECT_EQ(command_of("gaspot-hs-atg"), "I30100");
    EXPECT_EQ(to_hex(command_of("conpot-hs-s7")),
              "0300002102f080320700000000000800080001120411440100ff09000400110001");
    EXPECT_EQ(to_hex(command_of("conpot-hs-modbus")), "000000000005002b0e0200");
    EXPECT_EQ(command_of("glastopf-hs-http"), "GET /HTTP/1.0");
    EXPECT_EQ(command_of("dionaea-hs-http"), "GET /HTTP/1.0");
    EXPECT_EQ(command_of("amun-http-hs"), "GET HTTP/1.1");
    EXPECT_EQ(command_of("mtpot-hs-telnet"), "\xff\xfb\x22");
    EXPECT_EQ(set.find("mtpot-hs-telnet")->pattern, "\xff\xfc\x22");
    EXPECT_EQ(set.find("glastopf-hs-http")->pattern, "Server: BaseHTTP/0.3 Python/2.5.1");
    EXPECT_EQ(set.find("amun-http-hs")->pattern, "Server: Apache/1.3.29");
}

TEST(BundledSignatures, StaticResponseTableRows) {
    struct Row {
        const char* honeypot;
        const char* command;
        const char* response;
    };
    const Row rows[] = {
        {"Conpot", "S7_ID", "88111222"},
        {"Conpot", "station name", "STATOIL STATION"},
        {"Conpot", "unit name", "Technodrome"},
        {"Kippo", "nano", "E558: Terminal entry not found in terminfo"},
        {"Kippo", "vi", "E558: Terminal entry not found in terminfo"},
        {"Amun(FTP)", "quit", "221 Quit. 221 Goodbye!"},
        {"Gaspot", "I30100", "9999FF1B"},
    };
    for (const auto& r : rows) {
        auto m = match_static_command(r.honeypot, r.command, r.response, bundled());
        EXPECT_TRUE(m.matched()) << r.honeypot << " " << r.command;
    }
    std::string arp =
        "IP address       HW type   Flags       HW address            Mask     Device\n"
        "192.168.1.27  0x1            0x2         52:5e:0a:40:43:c8     *          eth0\n"
        "192.168.1.1    0x1            0x2         00:00:5f:00:0b:12     *          eth0\n";
    EXPECT_TRUE(match_static_command("Cowrie", "arp", arp, bundled()).matched());
}

TEST(BundledSignatures, HttpTableRows) {
    EXPECT_TRUE(has_row(bundled(), "Glastopf", Stage::HttpBody, "<h2>My Resource</h2>"));
    EXPECT_TRUE(has_row(bundled(), "Conpot", Stage::HttpBody,
                        "Last-Modified: Tue, 19 May 1993 09:00:00 GMT"));
    EXPECT_TRUE(has_row(bundled(), "Conpot", Stage::HttpBody, "Technodrome"));
    EXPECT_TRUE(has_row(bundled(), "Conpot", Stage::HttpBody, "Mouser Factory"));
    bool amun = false;
    for (const auto& s : bundled().signatures())
        amun |= s.honeypot == "Amun(HTTP)" && s.stage == Stage::HttpBody &&
                s.pattern.find("It works!") != std::string::npos &&
                s.pattern.find("tim.bohn@gmx.net") != std::string::npos;
    EXPECT_TRUE(amun);
}

TEST(BundledSignatures, KeywordTableRows) {
    EXPECT_TRUE(has_row(bundled(), "Glastopf", Stage::Keyword, "<h2>My Resource</h2>"));
    EXPECT_TRUE(has_row(bundled(), "Gaspot", Stage::Keyword, "I20100"));
    EXPECT_TRUE(has_row(bundled(), "Conpot", Stage::Keyword, "Technodrome"));
    EXPECT_TRUE(has_row(bundled(), "Amun(FTP)", Stage::Keyword, "220 Welcome to my FTP Server"));
    EXPECT_TRUE(has_row(bundled(), "Nepenthes", Stage::Keyword, "220 ---freeFTPd 1.0---warFTPd "));
    EXPECT_TRUE(has_row(bundled(), "Dionaea", Stage::Keyword, "Nepenthes Development Team"));
}

TEST(BundledSignatures, ApplicabilityMirrorsNotApplicableCells) {
    const auto& app = bundled().stage_applicability();
    EXPECT_FALSE(app.at("Kippo").count(Stage::HttpBody));
    EXPECT_FALSE(app.at("Kippo").count(Stage::Certificate));
    EXPECT_FALSE(app.at("Glastopf").count(Stage::Certificate));
    EXPECT_TRUE(app.at("Glastopf").count(Stage::HttpBody));
    EXPECT_TRUE(app.at("Dionaea").count(Stage::Certificate));
    EXPECT_TRUE(app.at("Dionaea").count(Stage::HttpBody));
    for (const auto& [h, stages] : app) {
        if (h == "Glastopf" || h == "Dionaea") continue;
        EXPECT_FALSE(stages.count(Stage::HttpBody) && h != "Amun(HTTP)") << h;
        EXPECT_FALSE(stages.count(Stage::Certificate)) << h;
    }
}

TEST(BundledSignatures, EveryHoneypotHasAnEntryStage) {
    for (const auto& h : bundled().honeypots()) {
        bool entry = false;
        for (const auto& s : bundled().signatures())
            entry |= s.honeypot == h && !s.is_marker() &&
                     (s.stage == Stage::Banner || s.stage == Stage::HttpBody);
        EXPECT_TRUE(entry) << h;
    }
}

TEST(BundledSignatures, LibraryTable) {
    EXPECT_EQ(bundled().libraries().size(), 7u);
    EXPECT_EQ(bundled().libraries().front().library, "TwistedConch");
}

TEST(BundledSignatures, RoundTripThroughSerializer) {
    auto text = serialize_signatures(bundled());
    auto again = load_signatures(text);
    EXPECT_EQ(again, bundled());
    EXPECT_EQ(serialize_signatures(again), text);
}

TEST(BundledSignatures, NothingMatchesEmptyInput) {
    for (const auto& s : bundled().signatures()) EXPECT_FALSE(bundled().matches(s, "")) << s.id;
}

TEST(MatchBanner, SpecExamples) {
    EXPECT_EQ(hit_types(match_banner("SSH-2.0-OpenSSH_5.1p1 Debian-5", Protocol::SSH, bundled())),
              std::vector<std::string>{"Kippo"});
    EXPECT_EQ(hit_types(match_banner("220 Welcome to my FTP Server", Protocol::FTP, bundled())),
              std::vector<std::string>{"Amun(FTP)"});
    EXPECT_TRUE(match_banner("SSH-2.0-OpenSSH_8.9p1 Ubuntu-3", Protocol::SSH, bundled()).empty());
}

TEST(MatchBanner, ProtocolMustAgree) {
    EXPECT_TRUE(match_banner("220 Welcome to my FTP Server", Protocol::SMTP, bundled()).empty());
}

TEST(MatchBanner, WireFormsOfTheBanner) {
    EXPECT_EQ(match_banner("SSH-2.0-OpenSSH_5.1p1 Debian-5\r\n", Protocol::SSH, bundled()).size(),
              1u);
    auto cowrie = match_banner("Debian GNU/Linux 7\r\nSSH-2.0-OpenSSH_6.0p1 Debian-4+deb7u2\r\n",
                               Protocol::SSH, bundled());
    EXPECT_EQ(hit_types(cowrie), std::vector<std::string>{"Cowrie"});
    EXPECT_TRUE(match_banner("SSH-2.0-OpenSSH_5.1p1 Debian-5 extra", Protocol::SSH, bundled())
                    .empty());
}

// Brute-force oracle: the banner equals the pattern outright, after dropping
// trailing line breaks, or on one of its lines.
TEST(MatchBanner, ExactKindAgreesWithByteComparison) {
    const std::string pattern = "SSH-2.0-Test_1";
    auto set = load_signatures("@applies T | banner\nt | T | SSH | banner | exact | | " +
                               escape(pattern) + "\n");
    auto oracle = [&](const std::string& s) {
        if (s == pattern) return true;
        std::string t = s;
        while (!t.empty() && (t.back() == '\n' || t.back() == '\r')) t.pop_back();
        if (t == pattern) return true;
        std::string line;
        for (std::size_t i = 0; i <= s.size(); ++i) {
            if (i == s.size() || s[i] == '\n') {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line == pattern) return true;
                line.clear();
            } else {
                line.push_back(s[i]);
            }
        }
        return false;
    };
    std::mt19937 rng(11);
    const std::string alphabet = "SH-2.0Tet_1\r\n x";
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::uniform_int_distribution<int> op(0, 5);
    int positives = 0;
    for (int i = 0; i < 5000; ++i) {
        std::string s;
        switch (op(rng)) {
            case 0: s = pattern; break;
            case 1: s = pattern + "\r\n"; break;
            case 2: s = "pre\r\n" + pattern + "\r\npost"; break;
            default: {
                s = pattern;
                for (int k = op(rng); k > 0; --k) {
                    std::size_t at = std::uniform_int_distribution<std::size_t>(0, s.size())(rng);
                    if (op(rng) % 2 && at < s.size())
                        s.erase(at, 1);
                    else
                        s.insert(at, 1, alphabet[pick(rng)]);
                }
            }
        }
        bool hit = !match_banner(s, Protocol::SSH, set).empty();
        ASSERT_EQ(hit, oracle(s)) << escape(s);
        positives += hit;
    }
    EXPECT_GT(positives, 1000);
}

TEST(MatchHttpBody, SpecExamples) {
    EXPECT_EQ(hit_types(match_http_body("<html><h2>My Resource</h2></html>", bundled())),
              std::vector<std::string>{"Glastopf"});
    auto conpot = match_http_body(
        "HTTP/1.1 200 OK\r\nLast-Modified: Tue, 19 May 1993 09:00:00 GMT\r\n\r\n<html/>", bundled());
    ASSERT_FALSE(conpot.empty());
    EXPECT_EQ(conpot.front().honeypot, "Conpot");
    EXPECT_TRUE(match_http_body("<html>Welcome to nginx!</html>", bundled()).empty());
}

TEST(MatchHttpBody, CrLfBodiesStillMatchLfPatterns) {
    std::string body =
        "<!DOCTYPE html PUBLIC \"-//W3C//DTD HTML 3.2 Final//EN\"><html>\r\n<title>Directory "
        "listing for /</title>\r\n<body>\r\n<h2>Directory listing for /</h2>\r\n<hr>";
    EXPECT_EQ(hit_types(match_http_body(body, bundled())), std::vector<std::string>{"Dionaea"});
}

TEST(MatchStaticCommand, SpecExamples) {
    EXPECT_TRUE(match_static_command("Gaspot", "I30100", "9999FF1B", bundled()).matched());
    EXPECT_TRUE(match_static_command("Conpot", "unit name", "Technodrome", bundled()).matched());
    auto miss = match_static_command("Gaspot", "I30100", "I30100OK", bundled());
    EXPECT_EQ(miss.status, StaticMatch::Status::NotMatched);
}

TEST(MatchStaticCommand, UnknownPairIsDistinct) {
    auto none = match_static_command("Gaspot", "I20100", "whatever", bundled());
    EXPECT_EQ(none.status, StaticMatch::Status::NoSignature);
    EXPECT_EQ(match_static_command("Nobody", "x", "y", bundled()).status,
              StaticMatch::Status::NoSignature);
}

TEST(MatchStaticCommand, FramingBytesAreIgnored) {
    EXPECT_TRUE(match_static_command("Gaspot", "I30100", "\x01" "9999FF1B\n", bundled()).matched());
    EXPECT_TRUE(match_static_command("Amun(FTP)", "quit", "221 Quit.\r\n221 Goodbye!\r\n", bundled())
                    .matched());
    EXPECT_TRUE(match_static_command("Kippo", "vi",
                                     "E558: Terminal entry not found in terminfo\r\n", bundled())
                    .matched());
}

TEST(MatchStage, LibraryPatterns) {
    const HoneypotType conpot = "Conpot";
    EXPECT_EQ(match_stage(Stage::Library, Protocol::HTTP, "BaseHTTP/0.6 Python/3.6.8", bundled(),
                          &conpot)
                  .size(),
              1u);
    EXPECT_TRUE(match_stage(Stage::Library, Protocol::HTTP, "Apache/2.4.54 (Debian)", bundled())
                    .empty());
    EXPECT_EQ(hit_types(match_stage(Stage::Library, Protocol::HTTPS, "BaseHTTP/0.3 Python/2.5.1",
                                    bundled())),
              (std::vector<std::string>{"Glastopf", "Conpot"}));
}

TEST(MatchStage, MarkersNeverDecideStages) {
    auto hits = match_stage(Stage::Library, Protocol::HTTP, "BaseHTTP/0.6 Python/3.5.2", bundled());
    for (const auto& h : hits) EXPECT_FALSE(h.signature->is_marker());
}
