#include <gtest/gtest.h>

#include "hpfp/bytes.hpp"
#include "hpfp/frames.hpp"

using namespace hpfp;
using namespace hpfp::frames;

TEST(S7, HandshakeProbeIsTheFullSetupFrame) {
    auto probe = s7_handshake_probe();
    ASSERT_EQ(probe.size(), 33u);
    // TPKT length field agrees with the byte count.
    EXPECT_EQ(static_cast<unsigned char>(probe[3]), 33);
    EXPECT_EQ(to_hex(probe).substr(0, 22), "0300002102f08032070000");
    auto req = classify_s7(probe);
    EXPECT_EQ(req.kind, S7Frame::SzlRead);
    EXPECT_EQ(req.szl_id, 0x0011);
    EXPECT_EQ(req.szl_index, 0x0001);
}

TEST(S7, ProtocolIdRule) {
    EXPECT_TRUE(s7_answers_protocol_id(s7_szl_response(0, 0x11, 1, {})));
    EXPECT_FALSE(s7_answers_protocol_id(""));
    EXPECT_FALSE(s7_answers_protocol_id(cotp_connect_confirm()));
    Bytes not_tpkt = s7_szl_response(0, 0x11, 1, {});
    not_tpkt[0] = 0x04;
    EXPECT_FALSE(s7_answers_protocol_id(not_tpkt));
}

TEST(S7, SzlRoundTrip) {
    std::vector<SzlRecord> recs = {{1, "Technodrome"}, {3, "STATOIL STATION"}, {5, "88111222"}};
    auto frame = s7_szl_response(9, 0x1c, 0, recs);
    Bytes buf = frame + "tail";
    auto taken = take_tpkt(buf);
    ASSERT_TRUE(taken);
    EXPECT_EQ(*taken, frame);
    EXPECT_EQ(buf, "tail");
    auto parsed = parse_szl_response(frame);
    ASSERT_TRUE(parsed);
    EXPECT_EQ(*parsed, recs);
}

TEST(S7, SessionFramesClassify) {
    EXPECT_EQ(classify_s7(cotp_connect_request()).kind, S7Frame::CotpConnect);
    EXPECT_EQ(classify_s7(s7_setup_communication(4)).kind, S7Frame::SetupCommunication);
    auto szl = classify_s7(s7_szl_request(0x1c, 0, 7));
    EXPECT_EQ(szl.kind, S7Frame::SzlRead);
    EXPECT_EQ(szl.pdu_ref, 7);
    EXPECT_EQ(szl.szl_id, 0x1c);
    EXPECT_EQ(s7_component_index("S7_ID"), 5);
    EXPECT_EQ(s7_component_index("unit name"), 1);
    EXPECT_FALSE(s7_component_index("HS7_ID"));
}

TEST(Modbus, MalformedProbeBytes) {
    EXPECT_EQ(to_hex(modbus_malformed_probe()), "000000000005002b0e0200");
    Bytes buf = modbus_malformed_probe();
    auto frame = take_mbap(buf);
    ASSERT_TRUE(frame);
    EXPECT_TRUE(buf.empty());
    EXPECT_EQ(to_hex(modbus_exception(*frame, 1)), "00000000000300ab01");
}

TEST(Atg, FramingAndCommandExtraction) {
    EXPECT_EQ(atg_request("I30100"), "\x01I30100\n");
    EXPECT_EQ(atg_command("\x01I20100\n"), "I20100");
    EXPECT_EQ(atg_command("I30100\r\n"), "I30100");
    EXPECT_FALSE(atg_command("\x01I201"));
}

TEST(Telnet, ParsesNegotiationAndText) {
    Bytes d = unescape("\\xff\\xfd\\x1flogin:\\x20\\xff\\xff");
    auto p = parse_telnet(d);
    EXPECT_EQ(p.text, "login: \xff");
    ASSERT_EQ(p.options.size(), 1u);
    EXPECT_EQ(p.options[0], std::make_pair(DO, OPT_NAWS));
    EXPECT_EQ(telnet_cmd(WONT, OPT_LINEMODE), unescape("\\xff\\xfc\\x22"));
}
