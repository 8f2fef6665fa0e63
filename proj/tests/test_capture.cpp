#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "carenet/pcap_reader.hpp"

using namespace carenet;

namespace {

std::string fixture(const char* name) { return std::string(CARENET_TEST_DATA) + "/" + name; }

void expect_mixed(const std::vector<PacketRecord>& recs, const CaptureStats& st) {
  EXPECT_EQ(st.frames, 6u);
  EXPECT_EQ(st.non_ip_skipped, 1u);
  EXPECT_EQ(st.malformed, 0u);
  ASSERT_EQ(recs.size(), 5u);
  EXPECT_EQ(recs[0].transport, Transport::Tcp);
  EXPECT_EQ(recs[0].payload_bytes, 100u);
  EXPECT_EQ(recs[0].dst_port, 443);
  EXPECT_TRUE(recs[0].tcp_small_upstream);
  EXPECT_EQ(recs[1].payload_bytes, 0u);
  EXPECT_FALSE(recs[1].tcp_small_upstream);  // downstream, empty
  EXPECT_EQ(recs[2].payload_bytes, 300u);
  EXPECT_FALSE(recs[2].tcp_small_upstream);  // above the threshold
  EXPECT_EQ(recs[3].src_addr.to_string(), "fd00::10");
  EXPECT_EQ(recs[3].transport, Transport::Udp);
  EXPECT_EQ(recs[3].payload_bytes, 20u);
  EXPECT_EQ(recs[4].dst_addr.to_string(), "203.0.113.7");  // behind a VLAN tag
  EXPECT_EQ(recs[4].payload_bytes, 8u);
  EXPECT_EQ(epoch_micros(recs[0].timestamp), 1700000000750000);
}

}  // namespace

TEST(Capture, EmptyFile) {
  CaptureStats st;
  auto recs = parse_capture_file(fixture("empty.pcap"), &st);
  EXPECT_TRUE(recs.empty());
  EXPECT_EQ(st.frames, 0u);
}

TEST(Capture, DnsQueryName) {
  CaptureStats st;
  auto recs = parse_capture_file(fixture("dns_query.pcap"), &st);
  ASSERT_EQ(recs.size(), 1u);
  const auto& r = recs[0];
  EXPECT_EQ(r.transport, Transport::Udp);
  EXPECT_EQ(r.dst_port, 53);
  EXPECT_EQ(r.src_addr.to_string(), "192.168.1.10");
  ASSERT_TRUE(r.dns_qname);
  EXPECT_EQ(*r.dns_qname, "www.example.com");
  EXPECT_EQ(epoch_micros(r.timestamp), 1700000000250000);
}

TEST(Capture, MixedPcap) {
  CaptureStats st;
  auto recs = parse_capture_file(fixture("mixed.pcap"), &st);
  expect_mixed(recs, st);
}

TEST(Capture, MixedPcapngMatchesPcap) {
  CaptureStats a, b;
  auto pcap = parse_capture_file(fixture("mixed.pcap"), &a);
  auto ng = parse_capture_file(fixture("mixed.pcapng"), &b);
  expect_mixed(ng, b);
  EXPECT_EQ(pcap, ng);
}

TEST(Capture, TruncatedTrailingRecordWarns) {
  CaptureStats st;
  auto recs = parse_capture_file(fixture("truncated.pcap"), &st);
  EXPECT_TRUE(recs.empty());
  ASSERT_EQ(st.warnings.size(), 1u);
  EXPECT_NE(st.warnings[0].find("truncated"), std::string::npos);
}

TEST(Capture, RejectsUnknownMagic) {
  std::istringstream in(std::string("not a capture file at all"));
  EXPECT_THROW(parse_capture(in), CaptureFormatError);
  EXPECT_THROW(parse_capture_file(fixture("missing.pcap")), CaptureFormatError);
}

TEST(Capture, DnsNameParserRejectsPointersAndOverruns) {
  std::vector<std::uint8_t> msg(12, 0);
  msg[5] = 1;  // qdcount
  EXPECT_FALSE(detail::dns_query_name(msg));
  auto good = msg;
  for (int b : {3, int('w'), int('w'), int('w'), 2, int('e'), int('x'), 0}) good.push_back(static_cast<std::uint8_t>(b));
  EXPECT_EQ(detail::dns_query_name(good), "www.ex");
  auto ptr = msg;
  ptr.push_back(0xC0);
  ptr.push_back(0x0C);
  EXPECT_FALSE(detail::dns_query_name(ptr));
  auto overrun = msg;
  overrun.push_back(40);
  overrun.push_back('a');
  EXPECT_FALSE(detail::dns_query_name(overrun));
}

TEST(Capture, RandomFramesNeverCrash) {
  std::mt19937_64 rng(5);
  CaptureOptions opts;
  Timestamp ts{};
  int ok = 0;
  for (int i = 0; i < 20000; ++i) {
    std::vector<std::uint8_t> frame(rng() % 120);
    for (auto& b : frame) b = static_cast<std::uint8_t>(rng());
    if (frame.size() > 14) {
      frame[12] = 0x08;
      frame[13] = 0x00;
      frame[14] = static_cast<std::uint8_t>(0x45);
    }
    auto r = detail::decode_frame(linktype::kEthernet, frame, ts, opts);
    ok += r.status == detail::DecodeStatus::Ok;
  }
  SUCCEED() << ok << " frames decoded";
}
