#include "hpfp/ssh.hpp"

#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/param_build.h>
#include <openssl/rand.h>

#include <algorithm>
#include <cstring>
#include <mutex>

namespace hpfp::ssh {

using net::Millis;

// ---------------------------------------------------------------- wire helpers

Writer& Writer::u8(unsigned char v) {
    out_.push_back(static_cast<char>(v));
    return *this;
}

Writer& Writer::u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<char>((v >> shift) & 0xff));
    return *this;
}

Writer& Writer::string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
    return *this;
}

Writer& Writer::name_list(const std::vector<std::string>& names) { return string(join_names(names)); }

Writer& Writer::mpint(std::string_view magnitude) {
    while (!magnitude.empty() && magnitude.front() == '\0') magnitude.remove_prefix(1);
    if (!magnitude.empty() && (static_cast<unsigned char>(magnitude.front()) & 0x80)) {
        u32(static_cast<std::uint32_t>(magnitude.size() + 1));
        out_.push_back('\0');
        out_.append(magnitude);
        return *this;
    }
    return string(magnitude);
}

Writer& Writer::raw(std::string_view s) {
    out_.append(s);
    return *this;
}

std::optional<unsigned char> Reader::u8() {
    if (remaining() < 1) return std::nullopt;
    return static_cast<unsigned char>(data_[pos_++]);
}

std::optional<bool> Reader::boolean() {
    auto v = u8();
    if (!v) return std::nullopt;
    return *v != 0;
}

std::optional<std::uint32_t> Reader::u32() {
    if (remaining() < 4) return std::nullopt;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(data_[pos_++]);
    return v;
}

std::optional<std::string> Reader::string() {
    auto len = u32();
    if (!len || remaining() < *len) return std::nullopt;
    std::string s(data_.substr(pos_, *len));
    pos_ += *len;
    return s;
}

std::optional<std::vector<std::string>> Reader::name_list() {
    auto s = string();
    if (!s) return std::nullopt;
    std::vector<std::string> names;
    std::size_t start = 0;
    while (!s->empty() && start <= s->size()) {
        auto comma = s->find(',', start);
        if (comma == std::string::npos) comma = s->size();
        names.push_back(s->substr(start, comma - start));
        start = comma + 1;
    }
    return names;
}

std::optional<std::string> Reader::raw(std::size_t n) {
    if (remaining() < n) return std::nullopt;
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
}

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) {
        if (!out.empty()) out.push_back(',');
        out += n;
    }
    return out;
}

// ---------------------------------------------------------------- KEXINIT

Bytes Kexinit::encode() const {
    Writer w;
    w.u8(kKexinit).raw(cookie.size() == 16 ? cookie : Bytes(16, '\0'));
    w.name_list(kex).name_list(hostkey).name_list(enc_cs).name_list(enc_sc);
    w.name_list(mac_cs).name_list(mac_sc).name_list(comp_cs).name_list(comp_sc);
    w.name_list(lang_cs).name_list(lang_sc).boolean(first_kex_follows).u32(0);
    return w.take();
}

std::optional<Kexinit> Kexinit::decode(std::string_view payload) {
    Reader r(payload);
    if (r.u8() != kKexinit) return std::nullopt;
    Kexinit k;
    auto cookie = r.raw(16);
    if (!cookie) return std::nullopt;
    k.cookie = *cookie;
    std::vector<std::string>* lists[] = {&k.kex,    &k.hostkey, &k.enc_cs,  &k.enc_sc,  &k.mac_cs,
                                         &k.mac_sc, &k.comp_cs, &k.comp_sc, &k.lang_cs, &k.lang_sc};
    for (auto* l : lists) {
        auto v = r.name_list();
        if (!v) return std::nullopt;
        *l = std::move(*v);
    }
    auto follows = r.boolean();
    if (!follows) return std::nullopt;
    k.first_kex_follows = *follows;
    return k;
}

std::string Kexinit::render() const {
    return "kex=" + join_names(kex) + ";hostkey=" + join_names(hostkey) + ";enc=" + join_names(enc_cs) +
           ";mac=" + join_names(mac_cs) + ";comp=" + join_names(comp_cs);
}

Kexinit client_kexinit() {
    Kexinit k;
    k.kex = {"curve25519-sha256", "curve25519-sha256@libssh.org", "diffie-hellman-group14-sha256",
             "diffie-hellman-group14-sha1"};
    k.hostkey = {"ssh-ed25519", "rsa-sha2-256", "ssh-rsa"};
    k.enc_cs = k.enc_sc = {"aes128-ctr", "aes192-ctr", "aes256-ctr"};
    k.mac_cs = k.mac_sc = {"hmac-sha2-256", "hmac-sha1", "hmac-sha2-512"};
    return k;
}

Kexinit openssh_kexinit() {
    Kexinit k;
    k.kex = {"curve25519-sha256", "curve25519-sha256@libssh.org", "ecdh-sha2-nistp256", "ecdh-sha2-nistp384",
             "ecdh-sha2-nistp521", "sntrup761x25519-sha512@openssh.com", "diffie-hellman-group-exchange-sha256",
             "diffie-hellman-group16-sha512", "diffie-hellman-group18-sha512", "diffie-hellman-group14-sha256",
             "kex-strict-s-v00@openssh.com"};
    k.hostkey = {"rsa-sha2-512", "rsa-sha2-256", "ecdsa-sha2-nistp256", "ssh-ed25519"};
    k.enc_cs = k.enc_sc = {"chacha20-poly1305@openssh.com", "aes128-ctr", "aes192-ctr", "aes256-ctr",
                           "aes128-gcm@openssh.com", "aes256-gcm@openssh.com"};
    k.mac_cs = k.mac_sc = {"umac-64-etm@openssh.com", "umac-128-etm@openssh.com", "hmac-sha2-256-etm@openssh.com",
                           "hmac-sha2-512-etm@openssh.com", "hmac-sha1-etm@openssh.com", "umac-64@openssh.com",
                           "umac-128@openssh.com", "hmac-sha2-256", "hmac-sha2-512", "hmac-sha1"};
    k.comp_cs = k.comp_sc = {"none", "zlib@openssh.com"};
    return k;
}

namespace {

// ---------------------------------------------------------------- algorithms

struct CipherInfo {
    const char* name;
    const EVP_CIPHER* (*cipher)();
    std::size_t key_len;
};

const CipherInfo kCiphers[] = {
    {"aes128-ctr", EVP_aes_128_ctr, 16},
    {"aes192-ctr", EVP_aes_192_ctr, 24},
    {"aes256-ctr", EVP_aes_256_ctr, 32},
};

struct MacInfo {
    const char* name;
    const EVP_MD* (*md)();
    std::size_t len;
};

const MacInfo kMacs[] = {
    {"hmac-sha2-256", EVP_sha256, 32},
    {"hmac-sha1", EVP_sha1, 20},
    {"hmac-sha2-512", EVP_sha512, 64},
};

const CipherInfo* find_cipher(std::string_view name) {
    for (const auto& c : kCiphers)
        if (name == c.name) return &c;
    return nullptr;
}

const MacInfo* find_mac(std::string_view name) {
    for (const auto& m : kMacs)
        if (name == m.name) return &m;
    return nullptr;
}

bool is_curve(std::string_view kex) {
    return kex == "curve25519-sha256" || kex == "curve25519-sha256@libssh.org";
}

const EVP_MD* kex_hash(std::string_view kex) {
    return kex == "diffie-hellman-group14-sha1" ? EVP_sha1() : EVP_sha256();
}

bool kex_supported(std::string_view kex) {
    return is_curve(kex) || kex == "diffie-hellman-group14-sha256" || kex == "diffie-hellman-group14-sha1";
}

bool hostkey_supported(std::string_view alg) {
    return alg == "ssh-ed25519" || alg == "ssh-rsa" || alg == "rsa-sha2-256" || alg == "rsa-sha2-512";
}

std::optional<std::string> pick(const std::vector<std::string>& client, const std::vector<std::string>& server) {
    for (const auto& c : client)
        if (std::find(server.begin(), server.end(), c) != server.end()) return c;
    return std::nullopt;
}

struct Negotiated {
    std::string kex, hostkey, enc_cs, enc_sc, mac_cs, mac_sc;
};

std::optional<Negotiated> negotiate(const Kexinit& c, const Kexinit& s) {
    Negotiated n;
    auto kex = pick(c.kex, s.kex);
    auto hk = pick(c.hostkey, s.hostkey);
    auto ecs = pick(c.enc_cs, s.enc_cs);
    auto esc = pick(c.enc_sc, s.enc_sc);
    auto mcs = pick(c.mac_cs, s.mac_cs);
    auto msc = pick(c.mac_sc, s.mac_sc);
    auto ccs = pick(c.comp_cs, s.comp_cs);
    auto csc = pick(c.comp_sc, s.comp_sc);
    if (!kex || !hk || !ecs || !esc || !mcs || !msc || ccs != "none" || csc != "none") return std::nullopt;
    if (!kex_supported(*kex) || !hostkey_supported(*hk) || !find_cipher(*ecs) || !find_cipher(*esc) ||
        !find_mac(*mcs) || !find_mac(*msc))
        return std::nullopt;
    n.kex = *kex;
    n.hostkey = *hk;
    n.enc_cs = *ecs;
    n.enc_sc = *esc;
    n.mac_cs = *mcs;
    n.mac_sc = *msc;
    return n;
}

Bytes digest(const EVP_MD* md, std::string_view data) {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), out, &len, md, nullptr);
    return Bytes(reinterpret_cast<char*>(out), len);
}

Bytes random_bytes(std::size_t n) {
    Bytes b(n, '\0');
    RAND_bytes(reinterpret_cast<unsigned char*>(b.data()), static_cast<int>(n));
    return b;
}

Bytes bn_bytes(const BIGNUM* bn) {
    Bytes b(static_cast<std::size_t>(BN_num_bytes(bn)), '\0');
    BN_bn2bin(bn, reinterpret_cast<unsigned char*>(b.data()));
    return b;
}

BIGNUM* bytes_bn(std::string_view b) {
    return BN_bin2bn(reinterpret_cast<const unsigned char*>(b.data()), static_cast<int>(b.size()), nullptr);
}

// ---------------------------------------------------------------- key agreement

struct KexState {
    std::string method;
    EVP_PKEY* x25519 = nullptr;
    BIGNUM* dh_x = nullptr;
    Bytes public_value;  // Q or e (magnitude)

    KexState() = default;
    KexState(const KexState&) = delete;
    KexState& operator=(const KexState&) = delete;
    ~KexState() {
        if (x25519) EVP_PKEY_free(x25519);
        if (dh_x) BN_clear_free(dh_x);
    }
};

BIGNUM* group14_prime() {
    static BIGNUM* p = BN_get_rfc3526_prime_2048(nullptr);
    return p;
}

bool kex_start(KexState& st, const std::string& method) {
    st.method = method;
    if (is_curve(method)) {
        st.x25519 = EVP_PKEY_Q_keygen(nullptr, nullptr, "X25519");
        if (!st.x25519) return false;
        unsigned char pub[32];
        std::size_t len = sizeof pub;
        EVP_PKEY_get_raw_public_key(st.x25519, pub, &len);
        st.public_value.assign(reinterpret_cast<char*>(pub), len);
        return true;
    }
    BN_CTX* ctx = BN_CTX_new();
    st.dh_x = BN_new();
    BN_rand(st.dh_x, 512, BN_RAND_TOP_ONE, BN_RAND_BOTTOM_ANY);
    BIGNUM* g = BN_new();
    BN_set_word(g, 2);
    BIGNUM* e = BN_new();
    BN_mod_exp(e, g, st.dh_x, group14_prime(), ctx);
    st.public_value = bn_bytes(e);
    BN_free(g);
    BN_free(e);
    BN_CTX_free(ctx);
    return true;
}

// Shared secret as a big-endian magnitude, or nullopt on a bad peer value.
std::optional<Bytes> kex_finish(KexState& st, std::string_view peer) {
    if (is_curve(st.method)) {
        if (peer.size() != 32) return std::nullopt;
        EVP_PKEY* peer_key = EVP_PKEY_new_raw_public_key(
            EVP_PKEY_X25519, nullptr, reinterpret_cast<const unsigned char*>(peer.data()), peer.size());
        if (!peer_key) return std::nullopt;
        EVP_PKEY_CTX* ctx = EVP_PKEY_CTX_new(st.x25519, nullptr);
        unsigned char secret[32];
        std::size_t len = sizeof secret;
        bool ok = EVP_PKEY_derive_init(ctx) == 1 && EVP_PKEY_derive_set_peer(ctx, peer_key) == 1 &&
                  EVP_PKEY_derive(ctx, secret, &len) == 1;
        EVP_PKEY_CTX_free(ctx);
        EVP_PKEY_free(peer_key);
        if (!ok) return std::nullopt;
        return Bytes(reinterpret_cast<char*>(secret), len);
    }
    BIGNUM* f = bytes_bn(peer);
    BIGNUM* one = BN_new();
    BN_one(one);
    BIGNUM* pm1 = BN_dup(group14_prime());
    BN_sub_word(pm1, 1);
    bool valid = BN_cmp(f, one) > 0 && BN_cmp(f, pm1) < 0;
    std::optional<Bytes> out;
    if (valid) {
        BN_CTX* ctx = BN_CTX_new();
        BIGNUM* k = BN_new();
        BN_mod_exp(k, f, st.dh_x, group14_prime(), ctx);
        out = bn_bytes(k);
        BN_clear_free(k);
        BN_CTX_free(ctx);
    }
    BN_free(f);
    BN_free(one);
    BN_free(pm1);
    return out;
}

Writer& put_public(Writer& w, const std::string& method, std::string_view value) {
    return is_curve(method) ? w.string(value) : w.mpint(value);
}

// ---------------------------------------------------------------- host keys

struct HostKey {
    EVP_PKEY* pkey = nullptr;
    Bytes blob;
};

const HostKey& host_key(bool rsa) {
    static std::once_flag once;
    static HostKey ed, rs;
    std::call_once(once, [] {
        ed.pkey = EVP_PKEY_Q_keygen(nullptr, nullptr, "ED25519");
        unsigned char pub[32];
        std::size_t len = sizeof pub;
        EVP_PKEY_get_raw_public_key(ed.pkey, pub, &len);
        ed.blob = Writer().string("ssh-ed25519").string(std::string_view(reinterpret_cast<char*>(pub), len)).take();

        rs.pkey = EVP_PKEY_Q_keygen(nullptr, nullptr, "RSA", static_cast<std::size_t>(2048));
        BIGNUM* n = nullptr;
        BIGNUM* e = nullptr;
        EVP_PKEY_get_bn_param(rs.pkey, OSSL_PKEY_PARAM_RSA_N, &n);
        EVP_PKEY_get_bn_param(rs.pkey, OSSL_PKEY_PARAM_RSA_E, &e);
        rs.blob = Writer().string("ssh-rsa").mpint(bn_bytes(e)).mpint(bn_bytes(n)).take();
        BN_free(n);
        BN_free(e);
    });
    return rsa ? rs : ed;
}

const EVP_MD* rsa_md(std::string_view alg) {
    if (alg == "rsa-sha2-256") return EVP_sha256();
    if (alg == "rsa-sha2-512") return EVP_sha512();
    return EVP_sha1();
}

Bytes sign_hash(std::string_view alg, std::string_view data) {
    bool rsa = alg != "ssh-ed25519";
    const HostKey& key = host_key(rsa);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestSignInit(ctx, nullptr, rsa ? rsa_md(alg) : nullptr, nullptr, key.pkey);
    std::size_t len = 0;
    auto in = reinterpret_cast<const unsigned char*>(data.data());
    EVP_DigestSign(ctx, nullptr, &len, in, data.size());
    Bytes sig(len, '\0');
    EVP_DigestSign(ctx, reinterpret_cast<unsigned char*>(sig.data()), &len, in, data.size());
    sig.resize(len);
    EVP_MD_CTX_free(ctx);
    return Writer().string(alg).string(sig).take();
}

bool verify_hash(std::string_view alg, std::string_view blob, std::string_view sig_blob, std::string_view data) {
    Reader kr(blob);
    auto type = kr.string();
    if (!type) return false;
    EVP_PKEY* pkey = nullptr;
    bool rsa = false;
    if (*type == "ssh-ed25519") {
        auto pub = kr.string();
        if (!pub || pub->size() != 32) return false;
        pkey = EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr,
                                           reinterpret_cast<const unsigned char*>(pub->data()), 32);
    } else if (*type == "ssh-rsa") {
        rsa = true;
        auto e = kr.string();
        auto n = kr.string();
        if (!e || !n) return false;
        BIGNUM* bn_e = bytes_bn(*e);
        BIGNUM* bn_n = bytes_bn(*n);
        OSSL_PARAM_BLD* bld = OSSL_PARAM_BLD_new();
        OSSL_PARAM_BLD_push_BN(bld, OSSL_PKEY_PARAM_RSA_N, bn_n);
        OSSL_PARAM_BLD_push_BN(bld, OSSL_PKEY_PARAM_RSA_E, bn_e);
        OSSL_PARAM* params = OSSL_PARAM_BLD_to_param(bld);
        EVP_PKEY_CTX* pctx = EVP_PKEY_CTX_new_from_name(nullptr, "RSA", nullptr);
        EVP_PKEY_fromdata_init(pctx);
        EVP_PKEY_fromdata(pctx, &pkey, EVP_PKEY_PUBLIC_KEY, params);
        EVP_PKEY_CTX_free(pctx);
        OSSL_PARAM_free(params);
        OSSL_PARAM_BLD_free(bld);
        BN_free(bn_e);
        BN_free(bn_n);
    }
    if (!pkey) return false;
    Reader sr(sig_blob);
    auto sig_alg = sr.string();
    auto sig = sr.string();
    bool ok = false;
    if (sig_alg && sig && *sig_alg == alg) {
        EVP_MD_CTX* ctx = EVP_MD_CTX_new();
        if (EVP_DigestVerifyInit(ctx, nullptr, rsa ? rsa_md(alg) : nullptr, nullptr, pkey) == 1)
            ok = EVP_DigestVerify(ctx, reinterpret_cast<const unsigned char*>(sig->data()), sig->size(),
                                  reinterpret_cast<const unsigned char*>(data.data()), data.size()) == 1;
        EVP_MD_CTX_free(ctx);
    }
    EVP_PKEY_free(pkey);
    return ok;
}

// ---------------------------------------------------------------- packet layer

struct Direction {
    EVP_CIPHER_CTX* ctx = nullptr;
    const EVP_MD* md = nullptr;
    Bytes mac_key;
    std::size_t mac_len = 0;
    std::size_t block = 8;
    std::uint32_t seq = 0;

    ~Direction() {
        if (ctx) EVP_CIPHER_CTX_free(ctx);
    }
    void crypt(char* data, std::size_t n) {
        if (!ctx || n == 0) return;
        int out = 0;
        auto p = reinterpret_cast<unsigned char*>(data);
        EVP_CipherUpdate(ctx, p, &out, p, static_cast<int>(n));
    }
    Bytes mac(std::string_view packet) const {
        Bytes in = Writer().u32(seq).raw(packet).take();
        unsigned char out[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        HMAC(md, mac_key.data(), static_cast<int>(mac_key.size()), reinterpret_cast<const unsigned char*>(in.data()),
             in.size(), out, &len);
        return Bytes(reinterpret_cast<char*>(out), mac_len);
    }
};

constexpr std::uint32_t kMaxPacket = 256 * 1024;

struct Incoming {
    enum class Status { Ok, Closed, BadLength, BadMac, RepeatVersion };
    Status status = Status::Closed;
    Bytes payload;
    std::uint32_t length = 0;
};

class Transport {
public:
    Transport(net::Conn& conn, Millis timeout) : conn_(conn), timeout_(timeout) {}

    bool send_raw(std::string_view data) { return conn_.send(data, timeout_); }

    std::optional<std::string> read_line() {
        for (;;) {
            auto nl = buf_.find('\n', pos_);
            if (nl != std::string::npos) {
                std::string line = buf_.substr(pos_, nl - pos_);
                pos_ = nl + 1;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            if (buf_.size() - pos_ > 1024) return std::nullopt;
            if (!more()) return std::nullopt;
        }
    }

    bool starts_with(std::string_view prefix) {
        if (!fill(prefix.size())) return false;
        return std::string_view(buf_).substr(pos_, prefix.size()) == prefix;
    }

    bool send_packet(std::string_view payload) {
        std::size_t block = out_.block;
        std::size_t pad = block - ((5 + payload.size()) % block);
        if (pad < 4) pad += block;
        Bytes packet = Writer()
                           .u32(static_cast<std::uint32_t>(1 + payload.size() + pad))
                           .u8(static_cast<unsigned char>(pad))
                           .raw(payload)
                           .raw(out_.ctx ? random_bytes(pad) : Bytes(pad, '\0'))
                           .take();
        Bytes mac = out_.md ? out_.mac(packet) : Bytes();
        out_.crypt(packet.data(), packet.size());
        ++out_.seq;
        return conn_.send(packet + mac, timeout_);
    }

    Incoming recv_packet() {
        Incoming in;
        std::size_t first = in_.ctx ? in_.block : 4;
        if (!fill(first)) return in;
        Bytes head = buf_.substr(pos_, first);
        in_.crypt(head.data(), head.size());
        std::uint32_t len = *Reader(head).u32();
        in.length = len;
        if (len > kMaxPacket || len < 5 || (in_.ctx && (len + 4) % in_.block != 0)) {
            in.status = Incoming::Status::BadLength;
            return in;
        }
        std::size_t total = 4 + len;
        if (!fill(total + in_.mac_len)) return in;
        Bytes packet = head + buf_.substr(pos_ + first, total - first);
        in_.crypt(packet.data() + first, total - first);
        if (in_.md) {
            std::string_view got(buf_.data() + pos_ + total, in_.mac_len);
            if (in_.mac(packet) != got) {
                in.status = Incoming::Status::BadMac;
                return in;
            }
        }
        pos_ += total + in_.mac_len;
        compact();
        ++in_.seq;
        auto pad = static_cast<unsigned char>(packet[4]);
        if (pad + 1u > len) {
            in.status = Incoming::Status::BadLength;
            return in;
        }
        in.payload = packet.substr(5, len - 1 - pad);
        in.status = Incoming::Status::Ok;
        return in;
    }

    // Next payload that is not transport noise.
    Incoming recv_message() {
        for (;;) {
            auto in = recv_packet();
            if (in.status != Incoming::Status::Ok || in.payload.empty()) return in;
            auto type = static_cast<unsigned char>(in.payload[0]);
            if (type == kIgnore || type == kDebug || type == kUnimplemented) continue;
            return in;
        }
    }

    void activate(bool outgoing, const CipherInfo& c, const MacInfo& m, std::string_view key, std::string_view iv,
                  std::string_view mac_key) {
        Direction& d = outgoing ? out_ : in_;
        if (d.ctx) EVP_CIPHER_CTX_free(d.ctx);
        d.ctx = EVP_CIPHER_CTX_new();
        EVP_CipherInit_ex(d.ctx, c.cipher(), nullptr, reinterpret_cast<const unsigned char*>(key.data()),
                          reinterpret_cast<const unsigned char*>(iv.data()), outgoing ? 1 : 0);
        d.block = 16;
        d.md = m.md();
        d.mac_key = Bytes(mac_key);
        d.mac_len = m.len;
    }

    const Bytes& received() const { return log_; }

private:
    bool more() {
        net::ReadOptions opts;
        opts.max_bytes = 65536;
        opts.idle = timeout_;
        opts.total = timeout_;
        opts.complete = [](std::string_view) { return true; };
        auto r = conn_.read(opts);
        if (r.data.empty()) return false;
        buf_ += r.data;
        if (log_.size() < 65536) log_ += r.data;
        return true;
    }

    bool fill(std::size_t n) {
        while (buf_.size() - pos_ < n)
            if (!more()) return false;
        return true;
    }

    void compact() {
        if (pos_ > 65536) {
            buf_.erase(0, pos_);
            pos_ = 0;
        }
    }

    net::Conn& conn_;
    Millis timeout_;
    Bytes buf_;
    std::size_t pos_ = 0;
    Bytes log_;
    Direction in_, out_;
};

Bytes derive_key(const EVP_MD* md, std::string_view k_mpint, std::string_view h, char letter,
                 std::string_view session_id, std::size_t need) {
    Bytes out = digest(md, Bytes(k_mpint) + Bytes(h) + letter + Bytes(session_id));
    while (out.size() < need) out += digest(md, Bytes(k_mpint) + Bytes(h) + out);
    out.resize(need);
    return out;
}

// Computes session keys and switches both directions over.
void install_keys(Transport& t, bool client, const Negotiated& n, std::string_view k_mpint, std::string_view h) {
    const EVP_MD* md = kex_hash(n.kex);
    const CipherInfo& ccs = *find_cipher(n.enc_cs);
    const CipherInfo& csc = *find_cipher(n.enc_sc);
    const MacInfo& mcs = *find_mac(n.mac_cs);
    const MacInfo& msc = *find_mac(n.mac_sc);
    Bytes iv_cs = derive_key(md, k_mpint, h, 'A', h, 16);
    Bytes iv_sc = derive_key(md, k_mpint, h, 'B', h, 16);
    Bytes key_cs = derive_key(md, k_mpint, h, 'C', h, ccs.key_len);
    Bytes key_sc = derive_key(md, k_mpint, h, 'D', h, csc.key_len);
    Bytes mac_cs = derive_key(md, k_mpint, h, 'E', h, mcs.len);
    Bytes mac_sc = derive_key(md, k_mpint, h, 'F', h, msc.len);
    t.activate(client, ccs, mcs, key_cs, iv_cs, mac_cs);
    t.activate(!client, csc, msc, key_sc, iv_sc, mac_sc);
}

Bytes exchange_hash(const Negotiated& n, std::string_view vc, std::string_view vs, std::string_view ic,
                    std::string_view is, std::string_view ks, std::string_view qc, std::string_view qs,
                    std::string_view k_mpint) {
    Writer w;
    w.string(vc).string(vs).string(ic).string(is).string(ks);
    put_public(w, n.kex, qc);
    put_public(w, n.kex, qs);
    w.raw(k_mpint);
    return digest(kex_hash(n.kex), w.bytes());
}

Bytes disconnect_payload(std::uint32_t reason, std::string_view text) {
    return Writer().u8(kDisconnect).u32(reason).string(text).string("").take();
}

}  // namespace

// ---------------------------------------------------------------- client

ServerHello read_server_hello(net::Conn& conn, std::string_view client_version, Millis timeout) {
    ServerHello hello;
    Transport t(conn, timeout);
    t.send_raw(std::string(client_version) + "\r\n");
    for (int i = 0; i < 32; ++i) {
        auto line = t.read_line();
        if (!line) break;
        if (line->rfind("SSH-", 0) == 0) {
            hello.version = *line;
            break;
        }
        hello.pre_lines.push_back(*line);
    }
    if (!hello.version.empty()) {
        auto in = t.recv_message();
        if (in.status == Incoming::Status::Ok) hello.kexinit = Kexinit::decode(in.payload);
    }
    hello.raw = t.received();
    return hello;
}

struct Client::Impl {
    net::Conn& conn;
    Transport t;
    std::string server_version;
    Kexinit server_kexinit;
    bool service_ready = false;
    bool closed = false;
    std::uint32_t next_channel = 0;

    Impl(net::Conn& c, Millis timeout) : conn(c), t(c, timeout) {}

    std::optional<Bytes> expect(unsigned char type) {
        auto in = t.recv_message();
        if (in.status != Incoming::Status::Ok || in.payload.empty()) {
            closed = true;
            return std::nullopt;
        }
        if (static_cast<unsigned char>(in.payload[0]) == kDisconnect) {
            closed = true;
            return std::nullopt;
        }
        if (static_cast<unsigned char>(in.payload[0]) != type) return std::nullopt;
        return in.payload;
    }
};

Client::Client(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Client::~Client() = default;

std::unique_ptr<Client> Client::connect(net::Conn& conn, Millis timeout, std::string* error) {
    auto fail = [&](const char* why) -> std::unique_ptr<Client> {
        if (error) *error = why;
        return nullptr;
    };
    auto impl = std::make_unique<Impl>(conn, timeout);
    Transport& t = impl->t;
    const std::string vc = "SSH-2.0-OpenSSH_8.9p1";
    if (!t.send_raw(vc + "\r\n")) return fail("send");
    for (int i = 0; i < 32 && impl->server_version.empty(); ++i) {
        auto line = t.read_line();
        if (!line) return fail("no_version");
        if (line->rfind("SSH-", 0) == 0) impl->server_version = *line;
    }
    if (impl->server_version.empty()) return fail("no_version");

    Kexinit ours = client_kexinit();
    ours.cookie = random_bytes(16);
    Bytes ic = ours.encode();
    if (!t.send_packet(ic)) return fail("send");
    auto in = t.recv_message();
    if (in.status != Incoming::Status::Ok) return fail("no_kexinit");
    auto theirs = Kexinit::decode(in.payload);
    if (!theirs) return fail("bad_kexinit");
    impl->server_kexinit = *theirs;
    Bytes is = in.payload;
    auto n = negotiate(ours, *theirs);
    if (!n) return fail("no_common_algorithms");

    KexState st;
    if (!kex_start(st, n->kex)) return fail("kex");
    Writer init;
    init.u8(kKexInit30);
    put_public(init, n->kex, st.public_value);
    if (!t.send_packet(init.bytes())) return fail("send");
    auto reply = impl->expect(kKexReply31);
    if (!reply) return fail("no_kex_reply");
    Reader r(*reply);
    r.u8();
    auto ks = r.string();
    auto qs = r.string();  // for DH this is the mpint f, same framing
    auto sig = r.string();
    if (!ks || !qs || !sig) return fail("bad_kex_reply");
    Bytes qs_mag = *qs;
    while (!is_curve(n->kex) && !qs_mag.empty() && qs_mag.front() == '\0') qs_mag.erase(0, 1);
    auto k = kex_finish(st, qs_mag);
    if (!k) return fail("bad_kex_value");
    Bytes k_mpint = Writer().mpint(*k).take();
    Bytes h = exchange_hash(*n, vc, impl->server_version, ic, is, *ks, st.public_value, qs_mag, k_mpint);
    if (!verify_hash(n->hostkey, *ks, *sig, h)) return fail("bad_host_signature");
    if (!t.send_packet(Writer().u8(kNewkeys).bytes())) return fail("send");
    if (!impl->expect(kNewkeys)) return fail("no_newkeys");
    install_keys(t, true, *n, k_mpint, h);
    return std::unique_ptr<Client>(new Client(std::move(impl)));
}

const std::string& Client::server_version() const { return impl_->server_version; }
const Kexinit& Client::server_kexinit() const { return impl_->server_kexinit; }
bool Client::disconnected() const { return impl_->closed; }

AuthResult Client::auth_password(const Credential& cred) {
    Impl& s = *impl_;
    if (s.closed) return AuthResult::Error;
    if (!s.service_ready) {
        s.t.send_packet(Writer().u8(kServiceRequest).string("ssh-userauth").bytes());
        if (!s.expect(kServiceAccept)) return AuthResult::Error;
        s.service_ready = true;
    }
    s.t.send_packet(Writer()
                        .u8(kUserauthRequest)
                        .string(cred.user)
                        .string("ssh-connection")
                        .string("password")
                        .boolean(false)
                        .string(cred.password)
                        .bytes());
    for (;;) {
        auto in = s.t.recv_message();
        if (in.status != Incoming::Status::Ok || in.payload.empty()) {
            s.closed = true;
            return AuthResult::Error;
        }
        auto type = static_cast<unsigned char>(in.payload[0]);
        if (type == kUserauthSuccess) return AuthResult::Accepted;
        if (type == kUserauthFailure) return AuthResult::Rejected;
        if (type == kDisconnect) {
            s.closed = true;
            return AuthResult::Error;
        }
        // 53 is a login banner; anything else is ignored while waiting.
    }
}

std::optional<Bytes> Client::exec(std::string_view command) {
    Impl& s = *impl_;
    if (s.closed) return std::nullopt;
    std::uint32_t local = s.next_channel++;
    s.t.send_packet(
        Writer().u8(kChannelOpen).string("session").u32(local).u32(2 * 1024 * 1024).u32(32768).bytes());
    auto conf = s.expect(kChannelOpenConfirmation);
    if (!conf) return std::nullopt;
    Reader r(*conf);
    r.u8();
    r.u32();
    auto remote = r.u32();
    if (!remote) return std::nullopt;
    s.t.send_packet(
        Writer().u8(kChannelRequest).u32(*remote).string("exec").boolean(true).string(command).bytes());
    Bytes output;
    for (;;) {
        auto in = s.t.recv_message();
        if (in.status != Incoming::Status::Ok || in.payload.empty()) {
            s.closed = true;
            return output.empty() ? std::nullopt : std::optional<Bytes>(output);
        }
        Reader m(in.payload);
        auto type = *m.u8();
        if (type == kChannelData) {
            m.u32();
            if (auto d = m.string()) output += *d;
        } else if (type == kChannelExtendedData) {
            m.u32();
            m.u32();
            if (auto d = m.string()) output += *d;
        } else if (type == kChannelFailure) {
            return std::nullopt;
        } else if (type == kChannelClose) {
            s.t.send_packet(Writer().u8(kChannelClose).u32(*remote).bytes());
            return output;
        } else if (type == kDisconnect) {
            s.closed = true;
            return output;
        }
    }
}

// ---------------------------------------------------------------- server

namespace {

void react(Transport& t, const Reaction& r, std::uint32_t length) {
    std::string text = r.text;
    auto at = text.find("%u");
    if (at != std::string::npos) text.replace(at, 2, std::to_string(length));
    switch (r.kind) {
        case Reaction::Kind::Disconnect: t.send_packet(disconnect_payload(2, text)); break;
        case Reaction::Kind::Line: t.send_raw(text); break;
        case Reaction::Kind::Close: break;
    }
}

struct ServerSession {
    Transport& t;
    const ServerBehaviour& b;
    bool authed = false;
    int auth_failures = 0;

    void channel_request(Reader& m) {
        auto channel = m.u32();
        auto kind = m.string();
        auto want_reply = m.boolean();
        if (!channel || !kind || !want_reply) return;
        if (*kind != "exec" || !b.exec) {
            if (*want_reply) t.send_packet(Writer().u8(kChannelFailure).u32(*channel).bytes());
            return;
        }
        auto command = m.string().value_or("");
        if (*want_reply) t.send_packet(Writer().u8(kChannelSuccess).u32(*channel).bytes());
        Bytes out = b.exec(command);
        for (std::size_t off = 0; off < out.size(); off += 32768)
            t.send_packet(Writer().u8(kChannelData).u32(*channel).string(std::string_view(out).substr(off, 32768)).bytes());
        t.send_packet(
            Writer().u8(kChannelRequest).u32(*channel).string("exit-status").boolean(false).u32(0).bytes());
        t.send_packet(Writer().u8(kChannelEof).u32(*channel).bytes());
        t.send_packet(Writer().u8(kChannelClose).u32(*channel).bytes());
    }

    // Returns false when the connection should end.
    bool handle(const Bytes& payload) {
        Reader m(payload);
        auto type = *m.u8();
        switch (type) {
            case kDisconnect: return false;
            case kServiceRequest: {
                auto name = m.string().value_or("");
                if (name != "ssh-userauth" && name != "ssh-connection") {
                    t.send_packet(disconnect_payload(7, "service not available"));
                    return false;
                }
                t.send_packet(Writer().u8(kServiceAccept).string(name).bytes());
                return true;
            }
            case kUserauthRequest: {
                if (authed) return true;
                auto user = m.string();
                m.string();
                auto method = m.string();
                if (!user || !method) return false;
                if (*method == "password") {
                    m.boolean();
                    auto pass = m.string().value_or("");
                    if (b.accept && b.accept(Credential{*user, pass})) {
                        authed = true;
                        t.send_packet(Writer().u8(kUserauthSuccess).bytes());
                        return true;
                    }
                    if (++auth_failures >= 10) {
                        t.send_packet(disconnect_payload(14, "Too many authentication failures"));
                        return false;
                    }
                }
                t.send_packet(Writer().u8(kUserauthFailure).string("password").boolean(false).bytes());
                return true;
            }
            case kGlobalRequest: {
                m.string();
                if (m.boolean().value_or(false)) t.send_packet(Writer().u8(kRequestFailure).bytes());
                return true;
            }
            case kChannelOpen: {
                auto kind = m.string();
                auto sender = m.u32();
                if (!kind || !sender) return false;
                if (!authed || *kind != "session") {
                    t.send_packet(Writer()
                                      .u8(kChannelOpenFailure)
                                      .u32(*sender)
                                      .u32(1)
                                      .string("administratively prohibited")
                                      .string("")
                                      .bytes());
                    return true;
                }
                t.send_packet(Writer()
                                  .u8(kChannelOpenConfirmation)
                                  .u32(*sender)
                                  .u32(*sender)
                                  .u32(2 * 1024 * 1024)
                                  .u32(32768)
                                  .bytes());
                return true;
            }
            case kChannelRequest: channel_request(m); return true;
            case kChannelData:
            case kChannelEof:
            case kChannelClose:
            case kChannelWindowAdjust: return true;
            default: {
                t.send_packet(Writer().u8(kUnimplemented).u32(0).bytes());
                return true;
            }
        }
    }
};

}  // namespace

void serve(net::Conn& conn, const ServerBehaviour& b, Millis idle) {
    Transport t(conn, idle);
    for (const auto& line : b.pre_banner) t.send_raw(line + "\r\n");
    t.send_raw(b.version + "\r\n");
    Bytes is = b.advertised.encode();
    t.send_packet(is);

    std::string vc;
    for (int i = 0; i < 32 && vc.empty(); ++i) {
        auto line = t.read_line();
        if (!line) return;
        if (line->rfind("SSH-", 0) == 0) vc = *line;
    }
    if (vc.empty()) {
        t.send_raw("Protocol mismatch.\n");
        return;
    }
    if (t.starts_with("SSH-")) {
        react(t, b.on_repeat_version.value_or(b.on_bad_length), 0x5353482d);
        return;
    }
    auto in = t.recv_message();
    if (in.status == Incoming::Status::BadLength) {
        react(t, b.on_bad_length, in.length);
        return;
    }
    if (in.status != Incoming::Status::Ok) return;
    auto theirs = Kexinit::decode(in.payload);
    if (!theirs) {
        t.send_packet(disconnect_payload(2, "expected KEXINIT"));
        return;
    }
    Bytes ic = in.payload;
    auto n = negotiate(*theirs, b.advertised);
    if (!n) {
        t.send_packet(disconnect_payload(3, "no matching algorithms"));
        return;
    }
    auto init = t.recv_message();
    if (init.status == Incoming::Status::BadLength) {
        react(t, b.on_bad_length, init.length);
        return;
    }
    if (init.status != Incoming::Status::Ok || init.payload.empty() ||
        static_cast<unsigned char>(init.payload[0]) != kKexInit30)
        return;
    Reader r(init.payload);
    r.u8();
    auto qc = r.string();
    if (!qc) return;
    Bytes qc_mag = *qc;
    while (!is_curve(n->kex) && !qc_mag.empty() && qc_mag.front() == '\0') qc_mag.erase(0, 1);
    KexState st;
    if (!kex_start(st, n->kex)) return;
    auto k = kex_finish(st, qc_mag);
    if (!k) {
        t.send_packet(disconnect_payload(3, "bad key exchange value"));
        return;
    }
    Bytes k_mpint = Writer().mpint(*k).take();
    const Bytes& ks = host_key(n->hostkey != "ssh-ed25519").blob;
    Bytes h = exchange_hash(*n, vc, b.version, ic, is, ks, qc_mag, st.public_value, k_mpint);
    Writer reply;
    reply.u8(kKexReply31).string(ks);
    put_public(reply, n->kex, st.public_value);
    reply.string(sign_hash(n->hostkey, h));
    t.send_packet(reply.bytes());
    t.send_packet(Writer().u8(kNewkeys).bytes());
    auto nk = t.recv_message();
    if (nk.status != Incoming::Status::Ok || nk.payload.empty() ||
        static_cast<unsigned char>(nk.payload[0]) != kNewkeys)
        return;
    install_keys(t, false, *n, k_mpint, h);

    ServerSession session{t, b};
    for (;;) {
        auto msg = t.recv_message();
        if (msg.status != Incoming::Status::Ok || msg.payload.empty()) return;
        if (!session.handle(msg.payload)) return;
    }
}

}  // namespace hpfp::ssh
