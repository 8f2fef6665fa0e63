#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "carenet/features.hpp"
#include "carenet/identity.hpp"
#include "carenet/ip.hpp"
#include "carenet/time.hpp"

namespace carenet::synth {

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct Schedule {
  std::vector<ClockTime> wake;   // cycled over days
  std::vector<ClockTime> onset;  // may reach past midnight (up to 47:59)
  int jitter_s = 0;              // uniform in [-jitter_s, +jitter_s], whole seconds
};

struct DnsProfile {
  int bursts_per_active_hour = 0;
  int repeat_count = 0;  // queries of one domain closing each awake interval
};

struct TypingProfile {
  int sessions_per_day = 0;
  int keystrokes = 0;
  double gap_min_s = 0.1;
  double gap_max_s = 0.3;
};

struct UserSpec {
  std::string user_id;
  std::string display_name;
  IpAddress address;
  Schedule schedule;
  DnsProfile dns;
  TypingProfile typing;
};

struct Scenario {
  std::string name;
  Date start_date;
  int days = 1;
  std::string timezone = "UTC";
  std::uint64_t seed = 1;
  int delta_min = 5;
  std::vector<UserSpec> users;
  std::vector<IpAddress> background_devices;  // unmapped, background traffic only
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ScenarioError(path + "." + key, "missing");
  return j[key];
}

inline std::vector<ClockTime> clocks(const nlohmann::json& j, const std::string& path, bool next_day) {
  std::vector<ClockTime> out;
  auto one = [&](const nlohmann::json& v, const std::string& p) {
    auto c = v.is_string() ? parse_clock(v.get<std::string>(), next_day) : std::nullopt;
    if (!c) throw ScenarioError(p, "expected a clock time HH:MM[:SS]");
    out.push_back(*c);
  };
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) one(j[i], path + "[" + std::to_string(i) + "]");
  } else {
    one(j, path);
  }
  if (out.empty()) throw ScenarioError(path, "must not be empty");
  return out;
}

/// Scenario zones must have a constant offset so every day has the same windows.
inline TimeZone fixed_zone(const std::string& name) {
  auto tz = TimeZone::parse(name);
  if (!(name == "UTC" || name == "Z" || name == "Etc/UTC" || ((name[0] == '+' || name[0] == '-') && name.size() == 6)))
    throw ScenarioError("timezone", "scenarios require UTC or a fixed offset such as +02:00");
  return tz;
}

}  // namespace detail

/// Parses and validates a scenario document. Throws ScenarioError naming the field.
inline Scenario parse_scenario(const nlohmann::json& j) {
  Scenario s;
  if (!j.is_object()) throw ScenarioError("$", "expected an object");
  s.name = detail::require(j, "name", "$").get<std::string>();
  if (s.name.empty() || s.name.find('/') != std::string::npos) throw ScenarioError("name", "invalid scenario name");
  auto date = parse_date(detail::require(j, "start_date", "$").get<std::string>());
  if (!date) throw ScenarioError("start_date", "expected YYYY-MM-DD");
  s.start_date = *date;
  s.days = detail::require(j, "days", "$").get<int>();
  if (s.days < 1 || s.days > 366) throw ScenarioError("days", "must lie in 1..366");
  s.timezone = j.value("timezone", std::string("UTC"));
  try {
    detail::fixed_zone(s.timezone);
  } catch (const TimeZoneError& e) {
    throw ScenarioError("timezone", e.what());
  }
  s.seed = j.value("seed", std::uint64_t{1});
  s.delta_min = j.value("delta_min", 5);
  if (s.delta_min < 2 || 1440 % s.delta_min != 0)
    throw ScenarioError("delta_min", "must divide 1440 and be at least 2");
  const int window_s = s.delta_min * 60;

  const auto& users = detail::require(j, "users", "$");
  if (!users.is_array() || users.empty()) throw ScenarioError("users", "expected a non-empty array");
  std::set<std::string> ids;
  std::set<IpAddress> addrs;
  for (std::size_t u = 0; u < users.size(); ++u) {
    std::string p = "users[" + std::to_string(u) + "]";
    const auto& uj = users[u];
    UserSpec spec;
    spec.user_id = detail::require(uj, "user_id", p).get<std::string>();
    if (spec.user_id.empty() || spec.user_id == kAllOther || !ids.insert(spec.user_id).second)
      throw ScenarioError(p + ".user_id", "must be unique, non-empty and not " + kAllOther);
    spec.display_name = uj.value("display_name", spec.user_id);
    auto addr = IpAddress::parse(detail::require(uj, "address", p).get<std::string>());
    if (!addr || !addr->is_v4() || !is_local(*addr, default_local_prefixes()) || !addrs.insert(*addr).second)
      throw ScenarioError(p + ".address", "expected a unique private IPv4 address");
    spec.address = *addr;

    const auto& sj = detail::require(uj, "schedule", p);
    spec.schedule.wake = detail::clocks(detail::require(sj, "wake", p + ".schedule"), p + ".schedule.wake", false);
    spec.schedule.onset =
        detail::clocks(detail::require(sj, "sleep_onset", p + ".schedule"), p + ".schedule.sleep_onset", true);
    spec.schedule.jitter_s = sj.value("jitter_s", 0);
    if (spec.schedule.jitter_s < 0 || spec.schedule.jitter_s > 1800)
      throw ScenarioError(p + ".schedule.jitter_s", "must lie in 0..1800");
    for (std::size_t i = 0; i < spec.schedule.wake.size(); ++i)
      if (spec.schedule.wake[i].seconds - spec.schedule.jitter_s < 4 * 3600 ||
          spec.schedule.wake[i].seconds + spec.schedule.jitter_s >= 86400)
        throw ScenarioError(p + ".schedule.wake[" + std::to_string(i) + "]",
                            "wake (including jitter) must fall between 04:00 and midnight");

    if (uj.contains("dns_profile")) {
      const auto& dj = uj["dns_profile"];
      spec.dns.bursts_per_active_hour = dj.value("bursts_per_active_hour", 0);
      spec.dns.repeat_count = dj.value("repeat_count", 0);
    }
    if (spec.dns.bursts_per_active_hour < 0 || spec.dns.repeat_count < 0 ||
        3 * spec.dns.bursts_per_active_hour + spec.dns.repeat_count > window_s - 2)
      throw ScenarioError(p + ".dns_profile", "bursts and repeats must fit in one window");
    if (uj.contains("typing_profile")) {
      const auto& tj = uj["typing_profile"];
      spec.typing.sessions_per_day = tj.value("sessions_per_day", 0);
      spec.typing.keystrokes = tj.value("keystrokes", 0);
      spec.typing.gap_min_s = tj.value("gap_min_s", 0.1);
      spec.typing.gap_max_s = tj.value("gap_max_s", 0.3);
    }
    const auto& t = spec.typing;
    if (t.sessions_per_day < 0 || t.keystrokes < 0 || !(t.gap_min_s > 0.0) || t.gap_max_s < t.gap_min_s ||
        20.0 + (t.keystrokes - 1) * t.gap_max_s >= window_s - 10)
      throw ScenarioError(p + ".typing_profile", "typing sessions must fit in one window with positive gaps");
    s.users.push_back(std::move(spec));
  }
  if (j.contains("background") && j["background"].contains("devices"))
    for (std::size_t i = 0; i < j["background"]["devices"].size(); ++i) {
      auto addr = IpAddress::parse(j["background"]["devices"][i].get<std::string>());
      if (!addr || !addr->is_v4() || !is_local(*addr, default_local_prefixes()) || !addrs.insert(*addr).second)
        throw ScenarioError("background.devices[" + std::to_string(i) + "]", "expected a unique private IPv4 address");
      s.background_devices.push_back(*addr);
    }
  return s;
}

// Ledger ---------------------------------------------------------------------

struct LedgerRow {
  std::string user_id;
  Date date;
  std::string feature;
  std::optional<double> expected;
};

inline nlohmann::ordered_json to_json(const LedgerRow& r) {
  return {{"user", r.user_id},
          {"date", format_date(r.date)},
          {"feature", r.feature},
          {"expected", r.expected ? nlohmann::ordered_json(*r.expected) : nlohmann::ordered_json(nullptr)}};
}

struct GeneratedTrace {
  std::string name;
  std::vector<std::uint8_t> pcap;
  std::vector<LedgerRow> ledger;
  IdentityRegistry registry;
  Timestamp version{};
  std::size_t packets = 0;
};

namespace detail {

inline constexpr std::uint32_t kResolver = 0x09090909;      // 9.9.9.9
inline constexpr std::uint32_t kWebServer = 0xCB00710A;     // 203.0.113.10
inline constexpr std::uint32_t kTypingServer = 0xCB007114;  // 203.0.113.20
inline constexpr std::uint32_t kTimeServer = 0xA29FC801;    // 162.159.200.1
inline constexpr std::uint32_t kGateway = 0xC0A80101;       // 192.168.1.1

inline std::uint32_t host_order(const IpAddress& a) {
  auto b = a.bytes();
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

inline void put16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

inline void put32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  put16(v, static_cast<std::uint16_t>(x >> 16));
  put16(v, static_cast<std::uint16_t>(x));
}

inline void put32le(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

inline std::uint16_t checksum(const std::uint8_t* data, std::size_t n, std::uint32_t acc = 0) {
  for (std::size_t i = 0; i + 1 < n; i += 2) acc += (std::uint32_t{data[i]} << 8) | data[i + 1];
  if (n % 2) acc += std::uint32_t{data[n - 1]} << 8;
  while (acc >> 16) acc = (acc & 0xFFFF) + (acc >> 16);
  return static_cast<std::uint16_t>(~acc);
}

inline void mac_for(std::vector<std::uint8_t>& v, std::uint32_t ip) {
  for (std::uint8_t b : {std::uint8_t{0x02}, std::uint8_t{0x00}}) v.push_back(b);
  put32(v, ip);
}

/// DNS query message (RD set, one A/IN question).
inline std::vector<std::uint8_t> dns_query(std::uint16_t id, const std::string& qname) {
  std::vector<std::uint8_t> m;
  put16(m, id);
  put16(m, 0x0100);
  put16(m, 1);
  put16(m, 0);
  put16(m, 0);
  put16(m, 0);
  std::size_t pos = 0;
  while (pos <= qname.size()) {
    auto dot = qname.find('.', pos);
    if (dot == std::string::npos) dot = qname.size();
    m.push_back(static_cast<std::uint8_t>(dot - pos));
    m.insert(m.end(), qname.begin() + static_cast<std::ptrdiff_t>(pos), qname.begin() + static_cast<std::ptrdiff_t>(dot));
    pos = dot + 1;
  }
  m.push_back(0);
  put16(m, 1);
  put16(m, 1);
  return m;
}

/// Ethernet + IPv4 + UDP/TCP frame with valid checksums.
inline std::vector<std::uint8_t> ipv4_frame(std::uint32_t src, std::uint32_t dst, std::uint8_t proto,
                                            std::uint16_t sport, std::uint16_t dport, std::uint32_t seq,
                                            const std::vector<std::uint8_t>& payload, std::uint16_t ip_id) {
  std::vector<std::uint8_t> l4;
  if (proto == 17) {
    put16(l4, sport);
    put16(l4, dport);
    put16(l4, static_cast<std::uint16_t>(8 + payload.size()));
    put16(l4, 0);
  } else {
    put16(l4, sport);
    put16(l4, dport);
    put32(l4, seq);
    put32(l4, 1);
    l4.push_back(0x50);
    l4.push_back(0x18);  // PSH|ACK
    put16(l4, 65535);
    put16(l4, 0);
    put16(l4, 0);
  }
  l4.insert(l4.end(), payload.begin(), payload.end());
  std::vector<std::uint8_t> pseudo;
  put32(pseudo, src);
  put32(pseudo, dst);
  pseudo.push_back(0);
  pseudo.push_back(proto);
  put16(pseudo, static_cast<std::uint16_t>(l4.size()));
  std::uint32_t acc = 0;
  for (std::size_t i = 0; i < pseudo.size(); i += 2) acc += (std::uint32_t{pseudo[i]} << 8) | pseudo[i + 1];
  std::uint16_t l4sum = checksum(l4.data(), l4.size(), acc);
  if (proto == 17 && l4sum == 0) l4sum = 0xFFFF;
  std::size_t at = proto == 17 ? 6 : 16;
  l4[at] = static_cast<std::uint8_t>(l4sum >> 8);
  l4[at + 1] = static_cast<std::uint8_t>(l4sum);

  std::vector<std::uint8_t> f;
  mac_for(f, dst);
  mac_for(f, src);
  put16(f, 0x0800);
  std::size_t ip_at = f.size();
  f.push_back(0x45);
  f.push_back(0);
  put16(f, static_cast<std::uint16_t>(20 + l4.size()));
  put16(f, ip_id);
  put16(f, 0x4000);
  f.push_back(64);
  f.push_back(proto);
  put16(f, 0);
  put32(f, src);
  put32(f, dst);
  std::uint16_t ipsum = checksum(f.data() + ip_at, 20);
  f[ip_at + 10] = static_cast<std::uint8_t>(ipsum >> 8);
  f[ip_at + 11] = static_cast<std::uint8_t>(ipsum);
  f.insert(f.end(), l4.begin(), l4.end());
  return f;
}

inline std::vector<std::uint8_t> arp_request(std::uint32_t sender, std::uint32_t target) {
  std::vector<std::uint8_t> f(6, 0xFF);
  mac_for(f, sender);
  put16(f, 0x0806);
  put16(f, 1);
  put16(f, 0x0800);
  f.push_back(6);
  f.push_back(4);
  put16(f, 1);
  mac_for(f, sender);
  put32(f, sender);
  for (int i = 0; i < 6; ++i) f.push_back(0);
  put32(f, target);
  return f;
}

/// Uniform integer in [lo, hi] from raw 64-bit draws; identical on every platform.
inline std::int64_t uniform(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

struct Interval {
  std::int64_t a = 0, b = 0;  // epoch microseconds, half-open
};

struct DayAcc {
  std::uint64_t night_bytes = 0, day_bytes = 0;
  std::set<int> windows_with_packets;
  int bursts = 0;
  int repeat_blocks = 0;
  std::vector<std::int64_t> typing_gaps_us;
};

inline std::int64_t floor_to(std::int64_t t, std::int64_t origin, std::int64_t step) {
  std::int64_t k = (t - origin) / step;
  if ((t - origin) % step < 0) --k;
  return origin + k * step;
}

inline std::int64_t ceil_to(std::int64_t t, std::int64_t origin, std::int64_t step) {
  std::int64_t f = floor_to(t, origin, step);
  return f == t ? t : f + step;
}

inline double sample_stddev(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Builds the capture, the identity files and the expected per-day feature values.
inline GeneratedTrace generate(const Scenario& sc, std::optional<std::uint64_t> seed_override = std::nullopt) {
  using namespace detail;
  const TimeZone tz = fixed_zone(sc.timezone);
  const std::int64_t step = std::int64_t{sc.delta_min} * kMicrosPerMinute;
  const int wpd = 1440 / sc.delta_min;
  const std::int64_t t0 = epoch_micros(tz.midnight(sc.start_date));
  const std::int64_t t_end = t0 + std::int64_t{sc.days} * kMicrosPerDay;
  const FeatureEngineConfig fcfg;
  std::mt19937_64 rng(seed_override.value_or(sc.seed));

  struct Frame {
    std::int64_t t;
    std::vector<std::uint8_t> bytes;
  };
  std::vector<Frame> frames;
  std::uint16_t ip_id = 0, dns_id = 0;
  std::uint32_t tcp_seq = 1000;

  GeneratedTrace out;
  out.name = sc.name;
  out.version = from_epoch_micros(t0);

  auto day_index = [&](std::int64_t t) { return static_cast<int>((t - t0) / kMicrosPerDay); };
  auto minute_of_day = [&](std::int64_t t) { return static_cast<int>(((t - t0) % kMicrosPerDay) / kMicrosPerMinute); };

  for (const auto& bg : sc.background_devices)
    for (std::int64_t s = t0; s < t_end; s += step)
      for (std::int64_t off : {step - 60 * kMicrosPerSecond, step - 30 * kMicrosPerSecond})
        frames.push_back({s + off, ipv4_frame(host_order(bg), kTimeServer, 17, 123, 123, 0,
                                              std::vector<std::uint8_t>(48, 0x1b), ip_id++)});

  std::vector<UserProfile> profiles;
  std::vector<IpMapping> mappings;
  for (const auto& user : sc.users) {
    const std::uint32_t ip = host_order(user.address);
    std::vector<DayAcc> acc(static_cast<std::size_t>(sc.days));

    auto emit = [&](std::int64_t t, std::vector<std::uint8_t> frame, std::uint64_t payload, bool counted) {
      if (t < t0 || t >= t_end) return;
      auto& a = acc[static_cast<std::size_t>(day_index(t))];
      int m = minute_of_day(t);
      if (counted) {  // IP traffic; ARP frames never reach a summary
        (m >= fcfg.night_from_min || m < fcfg.night_to_min ? a.night_bytes : a.day_bytes) += payload;
        a.windows_with_packets.insert(m / sc.delta_min);
      }
      frames.push_back({t, std::move(frame)});
    };
    auto emit_udp_up = [&](std::int64_t t, std::uint32_t dst, std::uint16_t sport, std::uint16_t dport,
                           std::vector<std::uint8_t> payload) {
      std::size_t n = payload.size();
      emit(t, ipv4_frame(ip, dst, 17, sport, dport, 0, payload, ip_id++), n, true);
    };
    auto emit_tcp = [&](std::int64_t t, bool upstream, std::size_t n, std::uint32_t server, std::uint16_t port) {
      std::vector<std::uint8_t> payload(n, 0x61);
      auto frame = upstream ? ipv4_frame(ip, server, 6, 50000, port, tcp_seq, payload, ip_id++)
                            : ipv4_frame(server, ip, 6, port, 50000, tcp_seq, payload, ip_id++);
      tcp_seq += static_cast<std::uint32_t>(n);
      emit(t, std::move(frame), n, true);
    };

    // Awake intervals, validated against the previous night.
    std::vector<Interval> awake;
    for (int d = 0; d < sc.days; ++d) {
      Date date = add_days(sc.start_date, d);
      const auto& sch = user.schedule;
      std::int64_t jw = sch.jitter_s ? uniform(rng, -sch.jitter_s, sch.jitter_s) : 0;
      std::int64_t jo = sch.jitter_s ? uniform(rng, -sch.jitter_s, sch.jitter_s) : 0;
      std::int64_t midnight = t0 + std::int64_t{d} * kMicrosPerDay;
      Interval iv{midnight + (sch.wake[static_cast<std::size_t>(d) % sch.wake.size()].seconds + jw) * kMicrosPerSecond,
                  midnight + (sch.onset[static_cast<std::size_t>(d) % sch.onset.size()].seconds + jo) * kMicrosPerSecond};
      if (iv.b - iv.a < 10 * kMicrosPerMinute)
        throw ScenarioError("users." + user.user_id + ".schedule",
                            "sleep onset on " + format_date(date) + " must follow wake by at least 10 minutes");
      if (!awake.empty() && iv.a < awake.back().b + 65 * kMicrosPerMinute)
        throw ScenarioError("users." + user.user_id + ".schedule",
                            "infeasible schedule: wake on " + format_date(date) +
                                " precedes the previous sleep onset plus 65 minutes");
      awake.push_back(iv);
    }

    // Activity, bursts and repeat blocks.
    std::map<std::pair<int, int>, bool> hour_has_bursts;  // (day, hour) -> placed
    std::vector<int> burst_counter(static_cast<std::size_t>(sc.days), 0);
    static const char* const kTlds[] = {"com", "org", "co.uk", "de"};
    std::vector<std::vector<std::int64_t>> full_windows(static_cast<std::size_t>(sc.days));
    for (const auto& iv : awake) {
      std::int64_t last_full = -1;
      for (std::int64_t s = floor_to(std::max(iv.a, t0), t0, step); s < std::min(iv.b, t_end); s += step) {
        std::int64_t lo = std::max(s, iv.a), hi = std::min(s + step, iv.b);
        for (int k = 0; k < 10; ++k) emit_tcp(lo + k * (hi - lo) / 10, k % 2 == 0, k % 2 == 0 ? 400 : 1200, kWebServer, 443);
        bool full = lo == s && hi == s + step;
        if (!full) continue;
        last_full = s;
        int d = day_index(s);
        full_windows[static_cast<std::size_t>(d)].push_back(s);
        auto key = std::make_pair(d, minute_of_day(s) / 60);
        if (user.dns.bursts_per_active_hour > 0 && !hour_has_bursts[key]) {
          hour_has_bursts[key] = true;
          for (int b = 0; b < user.dns.bursts_per_active_hour; ++b) {
            for (int q = 0; q < 3; ++q) {
              int idx = burst_counter[static_cast<std::size_t>(d)]++;
              std::string name = "www.site-" + std::to_string(d) + "-" + std::to_string(idx) + "." + kTlds[idx % 4];
              emit_udp_up(s + (3 * b + q + 1) * kMicrosPerSecond, kResolver, static_cast<std::uint16_t>(40000 + dns_id % 20000),
                          53, dns_query(dns_id, name));
              ++dns_id;
            }
            ++acc[static_cast<std::size_t>(d)].bursts;
          }
        }
      }
      if (user.dns.repeat_count > 0 && last_full >= 0) {
        int n = user.dns.repeat_count;
        for (int q = 0; q < n; ++q) {
          emit_udp_up(last_full + (step / kMicrosPerSecond - n + q) * kMicrosPerSecond, kResolver,
                      static_cast<std::uint16_t>(40000 + dns_id % 20000), 53, dns_query(dns_id, "www.news-portal.co.uk"));
          ++dns_id;
        }
        ++acc[static_cast<std::size_t>(day_index(last_full))].repeat_blocks;
      }
    }

    // Typing sessions: evenly spaced fully active windows of each day.
    const auto& tp = user.typing;
    for (int d = 0; d < sc.days && tp.sessions_per_day > 0 && tp.keystrokes > 0; ++d) {
      const auto& fw = full_windows[static_cast<std::size_t>(d)];
      int sessions = std::min<int>(tp.sessions_per_day, static_cast<int>(fw.size()));
      for (int j = 0; j < sessions; ++j) {
        std::int64_t s = fw[static_cast<std::size_t>((2 * j + 1) * static_cast<std::int64_t>(fw.size()) / (2 * sessions))];
        std::int64_t t = s + 20 * kMicrosPerSecond;
        auto lo = static_cast<std::int64_t>(std::llround(tp.gap_min_s * kMicrosPerSecond));
        auto hi = static_cast<std::int64_t>(std::llround(tp.gap_max_s * kMicrosPerSecond));
        for (int k = 0; k < tp.keystrokes; ++k) {
          if (k > 0) {
            std::int64_t gap = uniform(rng, lo, hi);
            t += gap;
            acc[static_cast<std::size_t>(d)].typing_gaps_us.push_back(gap);
          }
          emit_tcp(t, true, 48, kTypingServer, 22);
        }
      }
    }

    // Background keep-alives for the whole capture, plus one ARP frame per day.
    for (std::int64_t s = t0; s < t_end; s += step)
      for (std::int64_t off : {step - 60 * kMicrosPerSecond, step - 30 * kMicrosPerSecond})
        emit_udp_up(s + off, kTimeServer, 123, 123, std::vector<std::uint8_t>(48, 0x23));
    for (int d = 0; d < sc.days; ++d)
      emit(t0 + d * kMicrosPerDay + 12 * 60 * kMicrosPerMinute + 500'000, arp_request(ip, kGateway), 0, false);

    // Expected values, from the schedule and the emission tallies.
    auto gap_series = std::vector<std::optional<double>>(static_cast<std::size_t>(sc.days));
    auto window_active = [&](std::int64_t s) {
      for (const auto& iv : awake)
        if (s < iv.b && s + step > iv.a) return true;
      return false;
    };
    for (int d = 0; d < sc.days; ++d) {
      Date date = add_days(sc.start_date, d);
      std::int64_t midnight = t0 + std::int64_t{d} * kMicrosPerDay;
      std::int64_t span_lo = std::max(t0, midnight - kMicrosPerDay), span_hi = std::min(t_end, midnight + kMicrosPerDay);
      const auto& a = acc[static_cast<std::size_t>(d)];
      std::map<std::string, std::optional<double>> v;

      // Sessions visible to this day: awake intervals clipped to [previous day, next midnight).
      std::vector<Interval> clipped;
      for (const auto& iv : awake) {
        Interval c{std::max(iv.a, span_lo), std::min(iv.b, span_hi)};
        if (c.a < c.b) clipped.push_back(c);
      }
      std::optional<double> wake;
      for (const auto& c : clipped) {
        std::int64_t start = std::min(c.a, floor_to(c.a, t0, step) + step - 60 * kMicrosPerSecond);
        if (start >= midnight + 4 * 60 * kMicrosPerMinute && start < midnight + kMicrosPerDay) {
          wake = static_cast<double>(start - (midnight + 4 * 60 * kMicrosPerMinute)) / kMicrosPerMinute;
          break;
        }
      }
      std::optional<double> gap;
      for (std::size_t i = 0; i + 1 < clipped.size(); ++i) {
        std::int64_t idle_start = ceil_to(clipped[i].b, t0, step);
        std::int64_t idle_end = floor_to(clipped[i + 1].a, t0, step);
        if (idle_start < midnight + 10 * 60 * kMicrosPerMinute && idle_end > midnight - 4 * 60 * kMicrosPerMinute) {
          double minutes = static_cast<double>(idle_end - idle_start) / kMicrosPerMinute;
          if (!gap || minutes > *gap) gap = minutes;
        }
      }
      gap_series[static_cast<std::size_t>(d)] = gap;
      std::optional<double> zabs;
      if (gap) {
        std::vector<double> base;
        for (int k = std::max(0, d - fcfg.baseline_days); k < d; ++k) {
          const auto& ak = acc[static_cast<std::size_t>(k)];
          bool valid = static_cast<double>(ak.windows_with_packets.size()) / wpd >= fcfg.validity_threshold;
          if (valid && gap_series[static_cast<std::size_t>(k)]) base.push_back(*gap_series[static_cast<std::size_t>(k)]);
        }
        if (base.size() >= fcfg.baseline_min_days) {
          double mean = 0.0;
          for (double x : base) mean += x;
          mean /= static_cast<double>(base.size());
          double sd = sample_stddev(base, mean);
          zabs = sd == 0.0 ? 0.0 : std::abs((*gap - mean) / sd);
        }
      }
      int daytime_active = 0;
      std::set<int> hours;
      for (int w = 0; w < wpd; ++w) {
        std::int64_t s = midnight + w * step;
        if (!window_active(s)) continue;
        int m = w * sc.delta_min;
        hours.insert(m / 60);
        if (m >= fcfg.daytime_from_min && m < fcfg.daytime_to_min) ++daytime_active;
      }
      int daytime_total = (fcfg.daytime_to_min - fcfg.daytime_from_min) / sc.delta_min;

      v[feature_names::kWakeAfter0400Min] = wake;
      v[feature_names::kSleepDurationZAbs30d] = zabs;
      v[feature_names::kDaytimeIdleRatio0818] = static_cast<double>(daytime_total - daytime_active) / daytime_total;
      v[feature_names::kNightDayTrafficRatioBytes] =
          a.day_bytes == 0 ? std::nullopt
                           : std::optional<double>(static_cast<double>(a.night_bytes) / static_cast<double>(a.day_bytes));
      v[feature_names::kDnsBurstRatePerHour] =
          hours.empty() ? std::nullopt : std::optional<double>(static_cast<double>(a.bursts) / static_cast<double>(hours.size()));
      int events = 3 * a.bursts + user.dns.repeat_count * a.repeat_blocks;
      std::optional<double> repeated;
      if (events >= static_cast<int>(fcfg.repeat_min_queries)) {
        int n = user.dns.repeat_count;
        repeated = a.repeat_blocks > 0 && n >= 2 ? static_cast<double>(n - 1) / static_cast<double>(n) : 0.0;
      }
      v[feature_names::kRepeatedQueryRatio60m] = repeated;
      std::vector<double> q;
      for (auto g : a.typing_gaps_us) {
        double sec = static_cast<double>(g) / kMicrosPerSecond;
        if (sec > fcfg.iks_min_s && sec < fcfg.iks_max_s) q.push_back(sec);
      }
      std::optional<double> iks;
      if (q.size() >= fcfg.iks_min_samples) {
        std::sort(q.begin(), q.end());
        iks = q.size() % 2 ? q[q.size() / 2] : (q[q.size() / 2 - 1] + q[q.size() / 2]) / 2.0;
      }
      v[feature_names::kMedianIksSec] = iks;
      v[feature_names::kNightlyIdleGapMin] = gap;

      for (const auto& name : feature_names::implemented()) out.ledger.push_back({user.user_id, date, name, v[name]});
      out.ledger.push_back({user.user_id, date, feature_names::kNightlyIdleGapMin, gap});
    }

    UserProfile p;
    p.user_id = user.user_id;
    p.display_name = user.display_name;
    p.habitual_wake = user.schedule.wake.front();
    p.habitual_sleep = ClockTime{user.schedule.onset.front().seconds % 86400};
    p.notes = "synthetic scenario " + sc.name;
    profiles.push_back(p);
    mappings.push_back({user.address, user.user_id, from_epoch_micros(t0), std::nullopt});
  }
  out.registry = IdentityRegistry(std::move(profiles), std::move(mappings));

  std::stable_sort(frames.begin(), frames.end(), [](const Frame& x, const Frame& y) { return x.t < y.t; });
  auto& pcap = out.pcap;
  put32le(pcap, 0xA1B2C3D4);
  pcap.push_back(2);
  pcap.push_back(0);
  pcap.push_back(4);
  pcap.push_back(0);
  put32le(pcap, 0);
  put32le(pcap, 0);
  put32le(pcap, 65535);
  put32le(pcap, 1);
  for (const auto& f : frames) {
    put32le(pcap, static_cast<std::uint32_t>(f.t / kMicrosPerSecond));
    put32le(pcap, static_cast<std::uint32_t>(f.t % kMicrosPerSecond));
    put32le(pcap, static_cast<std::uint32_t>(f.bytes.size()));
    put32le(pcap, static_cast<std::uint32_t>(f.bytes.size()));
    pcap.insert(pcap.end(), f.bytes.begin(), f.bytes.end());
  }
  out.packets = frames.size();
  return out;
}

struct WrittenTrace {
  std::filesystem::path pcap, ledger, profiles, mappings;
};

/// Writes `<name>.pcap`, `<name>.ledger.jsonl`, `profiles.json` and `ip_mappings.json` into `dir`.
inline WrittenTrace write_trace(const GeneratedTrace& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  WrittenTrace w{dir / (t.name + ".pcap"), dir / (t.name + ".ledger.jsonl"), dir / "profiles.json",
                 dir / "ip_mappings.json"};
  {
    std::ofstream out(w.pcap, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(t.pcap.data()), static_cast<std::streamsize>(t.pcap.size()));
  }
  std::string ledger;
  for (const auto& r : t.ledger) ledger += to_json(r).dump() + "\n";
  carenet::detail::write_file_atomic(w.ledger, ledger);
  carenet::detail::write_file_atomic(w.profiles, profiles_document(t.registry, t.version).dump(2) + "\n");
  carenet::detail::write_file_atomic(w.mappings, mappings_document(t.registry, t.version).dump(2) + "\n");
  return w;
}

inline std::vector<LedgerRow> read_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ledger " + path.string());
  std::vector<LedgerRow> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    auto d = parse_date(j.at("date").get<std::string>());
    if (!d) throw std::runtime_error("bad ledger date in " + path.string());
    out.push_back({j.at("user").get<std::string>(), *d, j.at("feature").get<std::string>(),
                   j.at("expected").is_null() ? std::nullopt : std::optional<double>(j["expected"].get<double>())});
  }
  return out;
}

}  // namespace carenet::synth
