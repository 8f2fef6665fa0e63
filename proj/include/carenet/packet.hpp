#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "carenet/ip.hpp"
#include "carenet/time.hpp"

namespace carenet {

enum class Transport : std::uint8_t { Tcp, Udp, Other };

inline std::string_view to_string(Transport t) {
  switch (t) {
    case Transport::Tcp: return "TCP";
    case Transport::Udp: return "UDP";
    case Transport::Other: return "OTHER";
  }
  return "OTHER";
}

inline std::optional<Transport> parse_transport(std::string_view s) {
  if (s == "TCP") return Transport::Tcp;
  if (s == "UDP") return Transport::Udp;
  if (s == "OTHER") return Transport::Other;
  return std::nullopt;
}

/// One header-level observation. Nothing beyond the DNS query name is kept from payloads.
struct PacketRecord {
  Timestamp timestamp{};
  IpAddress src_addr;
  IpAddress dst_addr;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Transport transport = Transport::Other;
  std::uint32_t payload_bytes = 0;
  std::optional<std::string> dns_qname;
  bool tcp_small_upstream = false;

  bool operator==(const PacketRecord&) const = default;
};

class RecordFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::ordered_json to_json(const PacketRecord& r) {
  nlohmann::ordered_json j;
  j["timestamp"] = epoch_micros(r.timestamp);
  j["src_addr"] = r.src_addr.to_string();
  j["dst_addr"] = r.dst_addr.to_string();
  j["src_port"] = r.src_port;
  j["dst_port"] = r.dst_port;
  j["transport"] = to_string(r.transport);
  j["payload_bytes"] = r.payload_bytes;
  j["dns_qname"] = r.dns_qname ? nlohmann::ordered_json(*r.dns_qname) : nlohmann::ordered_json(nullptr);
  j["tcp_small_upstream"] = r.tcp_small_upstream;
  return j;
}

inline PacketRecord packet_from_json(const nlohmann::json& j) {
  try {
    PacketRecord r;
    r.timestamp = from_epoch_micros(j.at("timestamp").get<std::int64_t>());
    auto src = IpAddress::parse(j.at("src_addr").get<std::string>());
    auto dst = IpAddress::parse(j.at("dst_addr").get<std::string>());
    auto transport = parse_transport(j.at("transport").get<std::string>());
    if (!src || !dst || !transport) throw RecordFormatError("bad address or transport");
    r.src_addr = *src;
    r.dst_addr = *dst;
    r.transport = *transport;
    r.src_port = j.at("src_port").get<std::uint16_t>();
    r.dst_port = j.at("dst_port").get<std::uint16_t>();
    r.payload_bytes = j.at("payload_bytes").get<std::uint32_t>();
    if (const auto& q = j.at("dns_qname"); !q.is_null()) r.dns_qname = q.get<std::string>();
    r.tcp_small_upstream = j.at("tcp_small_upstream").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw RecordFormatError(std::string("packet record: ") + e.what());
  }
}

}  // namespace carenet
