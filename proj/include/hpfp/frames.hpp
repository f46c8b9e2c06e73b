#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hpfp/types.hpp"

namespace hpfp::frames {

// ---- S7comm over ISO-on-TCP (TPKT + COTP)

// The 33-byte userdata request sent before any COTP connection exists.
Bytes s7_handshake_probe();
// Byte 0 is the TPKT version and byte 7 the S7 protocol id.
bool s7_answers_protocol_id(std::string_view response);

Bytes tpkt(std::string_view payload);
Bytes cotp_connect_request(std::uint16_t src_tsap = 0x0100, std::uint16_t dst_tsap = 0x0102);
Bytes cotp_connect_confirm();
Bytes s7_setup_communication(std::uint16_t pdu_ref = 1);
Bytes s7_setup_ack(std::uint16_t pdu_ref);
Bytes s7_szl_request(std::uint16_t szl_id, std::uint16_t index, std::uint16_t pdu_ref = 2);

struct SzlRecord {
    std::uint16_t index = 0;
    std::string text;
    bool operator==(const SzlRecord&) const = default;
};
Bytes s7_szl_response(std::uint16_t pdu_ref, std::uint16_t szl_id, std::uint16_t index,
                      const std::vector<SzlRecord>& records);
// Records of an SZL 0x001C (component identification) answer.
std::optional<std::vector<SzlRecord>> parse_szl_response(std::string_view frame);

// Which 0x001C record answers a static command, or nullopt.
std::optional<std::uint16_t> s7_component_index(std::string_view command);

// Removes and returns one whole TPKT frame from the front of buf.
std::optional<Bytes> take_tpkt(Bytes& buf);

enum class S7Frame { CotpConnect, SetupCommunication, SzlRead, Other };
struct S7Request {
    S7Frame kind = S7Frame::Other;
    std::uint16_t pdu_ref = 0;
    std::uint16_t szl_id = 0;
    std::uint16_t szl_index = 0;
};
S7Request classify_s7(std::string_view frame);

// ---- Modbus/TCP

// Read Device Identification with no usable function payload, unit 0.
Bytes modbus_malformed_probe();
std::optional<Bytes> take_mbap(Bytes& buf);
// Exception reply mirroring the request header.
Bytes modbus_exception(std::string_view request, unsigned char code);

// ---- Veeder-Root ATG (TLS-350 serial protocol over TCP)

// SOH, command, LF.
Bytes atg_request(std::string_view command);
// Extracts the command from a framed or bare request line.
std::optional<std::string> atg_command(std::string_view request);

// ---- Telnet

inline constexpr unsigned char IAC = 255, DONT = 254, DO = 253, WONT = 252, WILL = 251, SB = 250, SE = 240;
inline constexpr unsigned char OPT_ECHO = 1, OPT_SGA = 3, OPT_TTYPE = 24, OPT_NAWS = 31, OPT_LINEMODE = 34;

Bytes telnet_cmd(unsigned char verb, unsigned char option);

struct TelnetParsed {
    Bytes text;                                                    // data with IAC sequences removed
    std::vector<std::pair<unsigned char, unsigned char>> options;  // (verb, option)
};
TelnetParsed parse_telnet(std::string_view data);

}  // namespace hpfp::frames
