#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hpfp/net.hpp"
#include "hpfp/types.hpp"

// A small SSH-2 transport: enough of RFC 4253/4252/4254 to read a server's
// algorithm lists, log in with a password and run one command, plus the
// matching server side for the mimic fleet.
namespace hpfp::ssh {

enum Msg : unsigned char {
    kDisconnect = 1,
    kIgnore = 2,
    kUnimplemented = 3,
    kDebug = 4,
    kServiceRequest = 5,
    kServiceAccept = 6,
    kKexinit = 20,
    kNewkeys = 21,
    kKexInit30 = 30,
    kKexReply31 = 31,
    kUserauthRequest = 50,
    kUserauthFailure = 51,
    kUserauthSuccess = 52,
    kGlobalRequest = 80,
    kRequestFailure = 82,
    kChannelOpen = 90,
    kChannelOpenConfirmation = 91,
    kChannelOpenFailure = 92,
    kChannelWindowAdjust = 93,
    kChannelData = 94,
    kChannelExtendedData = 95,
    kChannelEof = 96,
    kChannelClose = 97,
    kChannelRequest = 98,
    kChannelSuccess = 99,
    kChannelFailure = 100,
};

class Writer {
public:
    Writer& u8(unsigned char v);
    Writer& boolean(bool v) { return u8(v ? 1 : 0); }
    Writer& u32(std::uint32_t v);
    Writer& string(std::string_view s);
    Writer& name_list(const std::vector<std::string>& names);
    // Big-endian unsigned magnitude, encoded as an mpint.
    Writer& mpint(std::string_view magnitude);
    Writer& raw(std::string_view s);
    const Bytes& bytes() const { return out_; }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}
    std::optional<unsigned char> u8();
    std::optional<bool> boolean();
    std::optional<std::uint32_t> u32();
    std::optional<std::string> string();
    std::optional<std::vector<std::string>> name_list();
    std::optional<std::string> raw(std::size_t n);
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

struct Kexinit {
    Bytes cookie = Bytes(16, '\0');
    std::vector<std::string> kex;
    std::vector<std::string> hostkey;
    std::vector<std::string> enc_cs, enc_sc;
    std::vector<std::string> mac_cs, mac_sc;
    std::vector<std::string> comp_cs{"none"}, comp_sc{"none"};
    std::vector<std::string> lang_cs, lang_sc;
    bool first_kex_follows = false;

    Bytes encode() const;
    static std::optional<Kexinit> decode(std::string_view payload);
    // kex=..;hostkey=..;enc=..;mac=..;comp=.. using client-to-server lists.
    std::string render() const;
    bool operator==(const Kexinit&) const = default;
};

// Lists this implementation can actually negotiate.
Kexinit client_kexinit();
std::string join_names(const std::vector<std::string>& names);

// Result of reading what a server volunteers before any key exchange.
struct ServerHello {
    std::vector<std::string> pre_lines;  // lines before the identification string
    std::string version;                 // without line ending
    std::optional<Kexinit> kexinit;
    Bytes raw;                           // every byte received
};

// Sends our identification, reads the server's identification and KEXINIT.
ServerHello read_server_hello(net::Conn& conn, std::string_view client_version, net::Millis timeout);

enum class AuthResult { Accepted, Rejected, Error };

class Client {
public:
    ~Client();
    // Version exchange plus key exchange. Returns nullptr and sets error on failure.
    static std::unique_ptr<Client> connect(net::Conn& conn, net::Millis timeout, std::string* error);

    const std::string& server_version() const;
    const Kexinit& server_kexinit() const;
    AuthResult auth_password(const Credential& cred);
    // Runs one command on a fresh session channel; stdout and stderr merged.
    std::optional<Bytes> exec(std::string_view command);
    bool disconnected() const;

private:
    struct Impl;
    explicit Client(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

// How a scripted server reacts to input that is not a well-formed packet.
struct Reaction {
    enum class Kind { Disconnect, Line, Close };
    Kind kind = Kind::Close;
    std::string text;  // "%u" is replaced by the offending packet length
    bool operator==(const Reaction&) const = default;
};

struct ServerBehaviour {
    std::string version = "SSH-2.0-OpenSSH_8.9p1 Ubuntu-3ubuntu0.6";
    std::vector<std::string> pre_banner;
    Kexinit advertised;
    Reaction on_bad_length{Reaction::Kind::Disconnect, "Packet corrupt"};
    // A second identification line where a packet was expected. Falls back to
    // on_bad_length when unset.
    std::optional<Reaction> on_repeat_version;
    std::function<bool(const Credential&)> accept;
    std::function<Bytes(std::string_view)> exec;
};

// The lists a stock OpenSSH 8.9 server offers.
Kexinit openssh_kexinit();

// Runs one server-side connection to completion.
void serve(net::Conn& conn, const ServerBehaviour& behaviour, net::Millis idle);

}  // namespace hpfp::ssh
