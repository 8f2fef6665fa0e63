#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carenet/identity.hpp"
#include "carenet/ip.hpp"
#include "carenet/packet.hpp"
#include "carenet/psl.hpp"
#include "carenet/time.hpp"

namespace carenet {

struct DnsEvent {
  Timestamp timestamp{};
  std::string etld1;

  auto operator<=>(const DnsEvent&) const = default;
};

/// Per-user aggregate of one window.
struct WindowSummary {
  Timestamp window_start{};
  std::string user_id;
  std::uint64_t packet_count = 0;
  std::uint64_t byte_count_up = 0;
  std::uint64_t byte_count_down = 0;
  double share_tcp = 0.0;
  double share_udp = 0.0;
  double share_other = 0.0;
  std::vector<DnsEvent> dns_events;
  std::vector<double> small_upstream_gaps;  // seconds
  // First and last packet seen for this user; absent when packet_count == 0.
  std::optional<Timestamp> first_seen;
  std::optional<Timestamp> last_seen;

  bool operator==(const WindowSummary&) const = default;
};

struct SummarizeOptions {
  std::vector<Cidr> local_prefixes = default_local_prefixes();
};

/// The local endpoint of a packet identifies its owner: the source when local, else the destination.
inline std::optional<IpAddress> local_endpoint(const PacketRecord& r, std::span<const Cidr> local_prefixes) {
  if (is_local(r.src_addr, local_prefixes)) return r.src_addr;
  if (is_local(r.dst_addr, local_prefixes)) return r.dst_addr;
  return std::nullopt;
}

/// Aggregates one partition per user. Output is ordered by user_id.
inline std::vector<WindowSummary> summarize_window(std::span<const PacketRecord> records, Timestamp window_start,
                                                   const IdentityRegistry& identity, const PublicSuffixList& psl,
                                                   const SummarizeOptions& opts = {}) {
  struct Acc {
    WindowSummary s;
    std::uint64_t tcp = 0, udp = 0, other = 0;
    std::optional<Timestamp> last_small_up;
  };
  std::map<std::string, Acc> users;
  for (const auto& r : records) {
    auto owner = local_endpoint(r, opts.local_prefixes);
    const std::string& uid = owner ? identity.resolve(*owner, r.timestamp) : kAllOther;
    auto& acc = users[uid];
    auto& s = acc.s;
    ++s.packet_count;
    switch (r.transport) {
      case Transport::Tcp: ++acc.tcp; break;
      case Transport::Udp: ++acc.udp; break;
      case Transport::Other: ++acc.other; break;
    }
    switch (classify_direction(r.src_addr, r.dst_addr, opts.local_prefixes)) {
      case Direction::Upstream: s.byte_count_up += r.payload_bytes; break;
      case Direction::Downstream: s.byte_count_down += r.payload_bytes; break;
      default: break;
    }
    if (!s.first_seen || r.timestamp < *s.first_seen) s.first_seen = r.timestamp;
    if (!s.last_seen || r.timestamp > *s.last_seen) s.last_seen = r.timestamp;
    if (r.dns_qname) {
      auto e = psl.lookup(*r.dns_qname);
      if (e.registrable()) s.dns_events.push_back({r.timestamp, std::move(e.domain)});
    }
    if (r.tcp_small_upstream) {
      if (acc.last_small_up)
        s.small_upstream_gaps.push_back(static_cast<double>((r.timestamp - *acc.last_small_up).count()) / kMicrosPerSecond);
      acc.last_small_up = r.timestamp;
    }
  }
  std::vector<WindowSummary> out;
  out.reserve(users.size());
  for (auto& [uid, acc] : users) {
    auto& s = acc.s;
    s.user_id = uid;
    s.window_start = window_start;
    double n = static_cast<double>(s.packet_count);
    s.share_tcp = acc.tcp / n;
    s.share_udp = acc.udp / n;
    s.share_other = acc.other / n;
    out.push_back(std::move(s));
  }
  return out;
}

/// Distinct local addresses observed, for the operator's device inventory.
inline std::vector<IpAddress> observed_local_addresses(std::span<const PacketRecord> records,
                                                       std::span<const Cidr> local_prefixes) {
  std::vector<IpAddress> out;
  for (const auto& r : records)
    for (const auto* a : {&r.src_addr, &r.dst_addr})
      if (is_local(*a, local_prefixes)) out.push_back(*a);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline nlohmann::ordered_json to_json(const WindowSummary& s) {
  nlohmann::ordered_json j;
  j["window_start"] = epoch_micros(s.window_start);
  j["user_id"] = s.user_id;
  j["packet_count"] = s.packet_count;
  j["byte_count_up"] = s.byte_count_up;
  j["byte_count_down"] = s.byte_count_down;
  j["share_tcp"] = s.share_tcp;
  j["share_udp"] = s.share_udp;
  j["share_other"] = s.share_other;
  auto dns = nlohmann::ordered_json::array();
  for (const auto& e : s.dns_events) dns.push_back(nlohmann::ordered_json::array({epoch_micros(e.timestamp), e.etld1}));
  j["dns_events"] = std::move(dns);
  j["small_upstream_gaps"] = s.small_upstream_gaps;
  auto opt_ts = [](const std::optional<Timestamp>& t) {
    return t ? nlohmann::ordered_json(epoch_micros(*t)) : nlohmann::ordered_json(nullptr);
  };
  j["first_seen"] = opt_ts(s.first_seen);
  j["last_seen"] = opt_ts(s.last_seen);
  return j;
}

inline WindowSummary window_from_json(const nlohmann::json& j) {
  WindowSummary s;
  s.window_start = from_epoch_micros(j.at("window_start").get<std::int64_t>());
  s.user_id = j.at("user_id").get<std::string>();
  s.packet_count = j.at("packet_count").get<std::uint64_t>();
  s.byte_count_up = j.at("byte_count_up").get<std::uint64_t>();
  s.byte_count_down = j.at("byte_count_down").get<std::uint64_t>();
  s.share_tcp = j.at("share_tcp").get<double>();
  s.share_udp = j.at("share_udp").get<double>();
  s.share_other = j.at("share_other").get<double>();
  for (const auto& e : j.at("dns_events"))
    s.dns_events.push_back({from_epoch_micros(e.at(0).get<std::int64_t>()), e.at(1).get<std::string>()});
  s.small_upstream_gaps = j.at("small_upstream_gaps").get<std::vector<double>>();
  if (j.contains("first_seen") && !j["first_seen"].is_null())
    s.first_seen = from_epoch_micros(j["first_seen"].get<std::int64_t>());
  if (j.contains("last_seen") && !j["last_seen"].is_null())
    s.last_seen = from_epoch_micros(j["last_seen"].get<std::int64_t>());
  return s;
}

inline std::vector<WindowSummary> read_summary_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RecordFormatError("cannot open summaries " + path.string());
  std::vector<WindowSummary> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(window_from_json(nlohmann::json::parse(line)));
  return out;
}

}  // namespace carenet
