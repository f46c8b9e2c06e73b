#include <gtest/gtest.h>

#include <cctype>

#include <poll.h>
#include <sys/socket.h>

#include <thread>

#include "hpfp/net.hpp"
#include "hpfp/ssh.hpp"

using namespace hpfp;
using namespace std::chrono_literals;

namespace {

// Accepts one connection on a fresh loopback port and runs `serve` on it.
struct OneShotServer {
    net::Socket listener;
    std::uint16_t port = 0;
    std::thread thread;

    explicit OneShotServer(ssh::ServerBehaviour b) {
        listener = net::listen_tcp(*Ipv4::parse("127.0.0.1"), 0);
        port = net::local_port(listener.fd());
        thread = std::thread([this, b = std::move(b)] {
            pollfd p{listener.fd(), POLLIN, 0};
            if (::poll(&p, 1, 5000) <= 0) return;
            int fd = ::accept(listener.fd(), nullptr, nullptr);
            if (fd < 0) return;
            net::Conn conn{net::Socket(fd)};
            ssh::serve(conn, b, 5000ms);
        });
    }
    ~OneShotServer() { thread.join(); }

    net::Conn connect() {
        auto r = net::connect_tcp(*Ipv4::parse("127.0.0.1"), port, 2000ms);
        EXPECT_TRUE(r.ok()) << r.error;
        return std::move(r.conn);
    }
};

ssh::ServerBehaviour shell(ssh::Kexinit lists) {
    ssh::ServerBehaviour b;
    b.version = "SSH-2.0-OpenSSH_5.1p1 Debian-5";
    b.advertised = std::move(lists);
    b.accept = [](const Credential& c) { return c.user == "root" && c.password == "123456"; };
    b.exec = [](std::string_view cmd) { return cmd == "vi" ? Bytes("E558\n") : Bytes("sh: not found\n"); };
    return b;
}

Bytes read_all(net::Conn& c) {
    net::ReadOptions o;
    o.idle = 3000ms;
    o.total = 5000ms;
    return c.read(o).data;
}

}  // namespace

TEST(SshWire, MpintEncoding) {
    EXPECT_EQ(ssh::Writer().mpint(std::string("\x00\x00\x7f", 3)).bytes(), std::string("\0\0\0\1\x7f", 5));
    EXPECT_EQ(ssh::Writer().mpint("\x80").bytes(), std::string("\0\0\0\2\0\x80", 6));
    EXPECT_EQ(ssh::Writer().mpint("").bytes(), std::string(4, '\0'));
}

TEST(SshWire, KexinitRoundTrip) {
    auto k = ssh::openssh_kexinit();
    k.cookie = Bytes(16, 'c');
    auto back = ssh::Kexinit::decode(k.encode());
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, k);
    EXPECT_EQ(back->render().substr(0, 22), "kex=curve25519-sha256,");
}

class SshAlgorithms : public ::testing::TestWithParam<std::tuple<const char*, const char*, const char*, const char*>> {};

TEST_P(SshAlgorithms, LoginAndExec) {
    auto [kex, hostkey, enc, mac] = GetParam();
    ssh::Kexinit lists;
    lists.kex = {kex};
    lists.hostkey = {hostkey};
    lists.enc_cs = lists.enc_sc = {enc};
    lists.mac_cs = lists.mac_sc = {mac};
    OneShotServer server(shell(lists));
    auto conn = server.connect();
    std::string err;
    auto client = ssh::Client::connect(conn, 5000ms, &err);
    ASSERT_TRUE(client) << err;
    EXPECT_EQ(client->server_version(), "SSH-2.0-OpenSSH_5.1p1 Debian-5");
    EXPECT_EQ(client->auth_password({"root", "toor"}), ssh::AuthResult::Rejected);
    EXPECT_EQ(client->auth_password({"root", "123456"}), ssh::AuthResult::Accepted);
    auto out = client->exec("vi");
    ASSERT_TRUE(out);
    EXPECT_EQ(*out, "E558\n");
    auto second = client->exec("uname");
    ASSERT_TRUE(second);
    EXPECT_EQ(*second, "sh: not found\n");
}

INSTANTIATE_TEST_SUITE_P(
    Combos, SshAlgorithms,
    ::testing::Values(std::make_tuple("curve25519-sha256", "ssh-ed25519", "aes128-ctr", "hmac-sha2-256"),
                      std::make_tuple("curve25519-sha256@libssh.org", "rsa-sha2-256", "aes256-ctr", "hmac-sha1"),
                      std::make_tuple("diffie-hellman-group14-sha1", "ssh-rsa", "aes192-ctr", "hmac-sha2-512"),
                      std::make_tuple("diffie-hellman-group14-sha256", "ssh-ed25519", "aes256-ctr",
                                      "hmac-sha2-256")),
    [](const auto& info) {
        std::string name = std::get<0>(info.param);
        for (auto& c : name)
            if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
        return name + "_" + std::to_string(info.index);
    });

TEST(SshServer, AdvertisedListsReachTheClientVerbatim) {
    auto lists = ssh::openssh_kexinit();
    lists.cookie = Bytes(16, 'k');
    OneShotServer server(shell(lists));
    auto conn = server.connect();
    auto hello = ssh::read_server_hello(conn, "SSH-2.0-OpenSSH_8.9p1", 3000ms);
    EXPECT_EQ(hello.version, "SSH-2.0-OpenSSH_5.1p1 Debian-5");
    ASSERT_TRUE(hello.kexinit);
    EXPECT_EQ(hello.kexinit->render(), lists.render());
    EXPECT_EQ(hello.kexinit->cookie, lists.cookie);
}

TEST(SshServer, PreBannerLinesArriveBeforeVersion) {
    auto b = shell(ssh::openssh_kexinit());
    b.pre_banner = {"Debian GNU/Linux 7"};
    OneShotServer server(b);
    auto conn = server.connect();
    auto hello = ssh::read_server_hello(conn, "SSH-2.0-OpenSSH_8.9p1", 3000ms);
    ASSERT_EQ(hello.pre_lines.size(), 1u);
    EXPECT_EQ(hello.pre_lines[0], "Debian GNU/Linux 7");
    EXPECT_EQ(hello.version, "SSH-2.0-OpenSSH_5.1p1 Debian-5");
}

TEST(SshServer, BadLengthReactionCarriesTheLength) {
    auto b = shell(ssh::openssh_kexinit());
    b.on_bad_length = {ssh::Reaction::Kind::Disconnect, "bad packet length %u"};
    OneShotServer server(b);
    auto conn = server.connect();
    conn.send("SSH-2.0-OpenSSH\n\n\n\n\n\n\n\n\n\n");
    auto got = read_all(conn);
    EXPECT_NE(got.find("bad packet length 168430090"), std::string::npos);
}

TEST(SshServer, RepeatedVersionReaction) {
    auto b = shell(ssh::openssh_kexinit());
    b.on_bad_length = {ssh::Reaction::Kind::Close, ""};
    b.on_repeat_version = ssh::Reaction{ssh::Reaction::Kind::Line, "protocol mismatch\n"};
    OneShotServer server(b);
    auto conn = server.connect();
    conn.send("SSH-2.0-OpenSSH_6.0p1 Debian-4+deb7u2\nSSH-2.0-OpenSSH_6.0p1 Debian-4+deb7u2\n");
    auto got = read_all(conn);
    EXPECT_NE(got.find("protocol mismatch\n"), std::string::npos);
}

TEST(SshClient, NoCommonAlgorithmsIsReported) {
    ssh::Kexinit lists;
    lists.kex = {"ecdh-sha2-nistp256"};
    lists.hostkey = {"ssh-dss"};
    lists.enc_cs = lists.enc_sc = {"3des-cbc"};
    lists.mac_cs = lists.mac_sc = {"hmac-md5"};
    OneShotServer server(shell(lists));
    auto conn = server.connect();
    std::string err;
    EXPECT_FALSE(ssh::Client::connect(conn, 3000ms, &err));
    EXPECT_EQ(err, "no_common_algorithms");
}
