#include "hpfp/frames.hpp"

#include "hpfp/bytes.hpp"

namespace hpfp::frames {

namespace {

void put16(Bytes& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v >> 8));
    b.push_back(static_cast<char>(v & 0xff));
}

std::uint16_t get16(std::string_view s, std::size_t at) {
    return static_cast<std::uint16_t>((static_cast<unsigned char>(s[at]) << 8) | static_cast<unsigned char>(s[at + 1]));
}

constexpr unsigned char kS7Id = 0x32;

// S7 header for ROSCTR job (1) / ack-data (3) / userdata (7).
Bytes s7_header(unsigned char rosctr, std::uint16_t pdu_ref, std::size_t params, std::size_t data,
                bool with_error) {
    Bytes h;
    h.push_back(static_cast<char>(kS7Id));
    h.push_back(static_cast<char>(rosctr));
    put16(h, 0);
    put16(h, pdu_ref);
    put16(h, static_cast<std::uint16_t>(params));
    put16(h, static_cast<std::uint16_t>(data));
    if (with_error) put16(h, 0);
    return h;
}

Bytes cotp_data(std::string_view s7) {
    Bytes b("\x02\xf0\x80", 3);
    b.append(s7);
    return tpkt(b);
}

}  // namespace

Bytes s7_handshake_probe() { return from_hex("0300002102f080320700000000000800080001120411440100ff09000400110001"); }

bool s7_answers_protocol_id(std::string_view r) {
    return r.size() > 7 && static_cast<unsigned char>(r[0]) == 0x03 && static_cast<unsigned char>(r[7]) == kS7Id;
}

Bytes tpkt(std::string_view payload) {
    Bytes b("\x03\x00", 2);
    put16(b, static_cast<std::uint16_t>(payload.size() + 4));
    b.append(payload);
    return b;
}

Bytes cotp_connect_request(std::uint16_t src_tsap, std::uint16_t dst_tsap) {
    Bytes c;
    c.push_back(0x11);  // length indicator
    c.push_back(static_cast<char>(0xe0));
    put16(c, 0);
    put16(c, 0x0001);
    c.push_back(0);
    c += std::string("\xc0\x01\x0a", 3);
    c += std::string("\xc1\x02", 2);
    put16(c, src_tsap);
    c += std::string("\xc2\x02", 2);
    put16(c, dst_tsap);
    return tpkt(c);
}

Bytes cotp_connect_confirm() {
    Bytes c;
    c.push_back(0x11);
    c.push_back(static_cast<char>(0xd0));
    put16(c, 0x0001);
    put16(c, 0x0001);
    c.push_back(0);
    c += std::string("\xc0\x01\x0a", 3);
    c += std::string("\xc1\x02\x01\x00", 4);
    c += std::string("\xc2\x02\x01\x02", 4);
    return tpkt(c);
}

Bytes s7_setup_communication(std::uint16_t pdu_ref) {
    Bytes params("\xf0\x00\x00\x01\x00\x01\x01\xe0", 8);
    return cotp_data(s7_header(1, pdu_ref, params.size(), 0, false) + params);
}

Bytes s7_setup_ack(std::uint16_t pdu_ref) {
    Bytes params("\xf0\x00\x00\x01\x00\x01\x00\xf0", 8);
    return cotp_data(s7_header(3, pdu_ref, params.size(), 0, true) + params);
}

Bytes s7_szl_request(std::uint16_t szl_id, std::uint16_t index, std::uint16_t pdu_ref) {
    Bytes params("\x00\x01\x12\x04\x11\x44\x01\x00", 8);
    Bytes data("\xff\x09\x00\x04", 4);
    put16(data, szl_id);
    put16(data, index);
    return cotp_data(s7_header(7, pdu_ref, params.size(), data.size(), false) + params + data);
}

Bytes s7_szl_response(std::uint16_t pdu_ref, std::uint16_t szl_id, std::uint16_t index,
                      const std::vector<SzlRecord>& records) {
    Bytes params("\x00\x01\x12\x08\x12\x84\x01\x01\x00\x00\x00\x00", 12);
    Bytes body;
    put16(body, szl_id);
    put16(body, index);
    put16(body, 34);
    put16(body, static_cast<std::uint16_t>(records.size()));
    for (const auto& r : records) {
        put16(body, r.index);
        Bytes name = r.text.substr(0, 32);
        name.resize(32, '\0');
        body += name;
    }
    Bytes data("\xff\x09", 2);
    put16(data, static_cast<std::uint16_t>(body.size()));
    data += body;
    return cotp_data(s7_header(7, pdu_ref, params.size(), data.size(), false) + params + data);
}

std::optional<std::vector<SzlRecord>> parse_szl_response(std::string_view f) {
    // TPKT(4) COTP DT(3) S7 header(10 for userdata)
    if (f.size() < 17 || static_cast<unsigned char>(f[0]) != 0x03 || static_cast<unsigned char>(f[7]) != kS7Id)
        return std::nullopt;
    std::size_t s7 = 7;
    unsigned char rosctr = static_cast<unsigned char>(f[s7 + 1]);
    std::size_t header = (rosctr == 2 || rosctr == 3) ? 12 : 10;
    std::uint16_t plen = get16(f, s7 + 6);
    std::uint16_t dlen = get16(f, s7 + 8);
    std::size_t data = s7 + header + plen;
    if (f.size() < data + dlen || dlen < 12) return std::nullopt;
    if (static_cast<unsigned char>(f[data]) != 0xff) return std::nullopt;
    std::size_t body = data + 4;
    std::uint16_t rec_len = get16(f, body + 4);
    std::uint16_t count = get16(f, body + 6);
    std::size_t at = body + 8;
    std::vector<SzlRecord> out;
    for (std::uint16_t i = 0; i < count; ++i) {
        if (rec_len < 2 || at + rec_len > f.size()) return std::nullopt;
        SzlRecord r;
        r.index = get16(f, at);
        std::string text(f.substr(at + 2, rec_len - 2u));
        auto nul = text.find('\0');
        if (nul != std::string::npos) text.resize(nul);
        r.text = text;
        out.push_back(std::move(r));
        at += rec_len;
    }
    return out;
}

std::optional<std::uint16_t> s7_component_index(std::string_view command) {
    if (command == "unit name") return 1;
    if (command == "station name") return 3;
    if (command == "S7_ID") return 5;
    return std::nullopt;
}

std::optional<Bytes> take_tpkt(Bytes& buf) {
    if (buf.size() < 4) return std::nullopt;
    std::uint16_t len = get16(buf, 2);
    if (static_cast<unsigned char>(buf[0]) != 0x03 || len < 4) {
        // Not TPKT at all; hand the whole buffer over so the caller can react.
        Bytes all = std::move(buf);
        buf.clear();
        return all;
    }
    if (buf.size() < len) return std::nullopt;
    Bytes frame = buf.substr(0, len);
    buf.erase(0, len);
    return frame;
}

S7Request classify_s7(std::string_view f) {
    S7Request r;
    if (f.size() >= 6 && static_cast<unsigned char>(f[5]) == 0xe0) {
        r.kind = S7Frame::CotpConnect;
        return r;
    }
    if (f.size() < 17 || static_cast<unsigned char>(f[7]) != kS7Id) return r;
    unsigned char rosctr = static_cast<unsigned char>(f[8]);
    r.pdu_ref = get16(f, 11);
    if (rosctr == 1 && f.size() >= 18 && static_cast<unsigned char>(f[17]) == 0xf0) {
        r.kind = S7Frame::SetupCommunication;
        return r;
    }
    if (rosctr == 7) {
        std::uint16_t plen = get16(f, 13);
        std::size_t data = 7 + 10 + plen;
        if (f.size() >= data + 8 && static_cast<unsigned char>(f[data]) == 0xff) {
            r.kind = S7Frame::SzlRead;
            r.szl_id = get16(f, data + 4);
            r.szl_index = get16(f, data + 6);
        }
    }
    return r;
}

Bytes modbus_malformed_probe() { return from_hex("000000000005002b0e0200"); }

std::optional<Bytes> take_mbap(Bytes& buf) {
    if (buf.size() < 7) return std::nullopt;
    std::size_t len = 6u + get16(buf, 4);
    if (buf.size() < len) return std::nullopt;
    Bytes frame = buf.substr(0, len);
    buf.erase(0, len);
    return frame;
}

Bytes modbus_exception(std::string_view req, unsigned char code) {
    Bytes b(req.substr(0, 4));
    put16(b, 3);
    b.push_back(req.size() > 6 ? req[6] : '\0');
    b.push_back(static_cast<char>((req.size() > 7 ? static_cast<unsigned char>(req[7]) : 0) | 0x80));
    b.push_back(static_cast<char>(code));
    return b;
}

Bytes atg_request(std::string_view command) { return "\x01" + std::string(command) + "\n"; }

std::optional<std::string> atg_command(std::string_view req) {
    while (!req.empty() && (req.front() == '\x01' || req.front() == '\r' || req.front() == '\n'))
        req.remove_prefix(1);
    auto end = req.find_first_of("\r\n\x03");
    if (end == std::string_view::npos) return std::nullopt;
    return std::string(req.substr(0, end));
}

Bytes telnet_cmd(unsigned char verb, unsigned char option) {
    return Bytes{static_cast<char>(IAC), static_cast<char>(verb), static_cast<char>(option)};
}

TelnetParsed parse_telnet(std::string_view d) {
    TelnetParsed out;
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto c = static_cast<unsigned char>(d[i]);
        if (c != IAC) {
            out.text.push_back(d[i]);
            continue;
        }
        if (i + 1 >= d.size()) break;
        auto verb = static_cast<unsigned char>(d[++i]);
        if (verb == IAC) {
            out.text.push_back(d[i]);
        } else if (verb >= WILL && verb <= DONT) {
            if (i + 1 < d.size()) out.options.emplace_back(verb, static_cast<unsigned char>(d[++i]));
        } else if (verb == SB) {
            while (i + 1 < d.size() &&
                   !(static_cast<unsigned char>(d[i]) == IAC && static_cast<unsigned char>(d[i + 1]) == SE))
                ++i;
            ++i;
        }
    }
    return out;
}

}  // namespace hpfp::frames
