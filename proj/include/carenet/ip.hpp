#pragma once

#include <arpa/inet.h>

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace carenet {

/// IPv4 or IPv6 address stored in network byte order.
class IpAddress {
 public:
  enum class Family : std::uint8_t { V4 = 4, V6 = 6 };

  IpAddress() = default;

  static IpAddress v4(std::uint32_t host_order) {
    IpAddress a;
    a.family_ = Family::V4;
    a.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
    a.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
    a.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
    a.bytes_[3] = static_cast<std::uint8_t>(host_order);
    return a;
  }

  static IpAddress from_bytes(std::span<const std::uint8_t> raw) {
    IpAddress a;
    if (raw.size() == 4) {
      a.family_ = Family::V4;
    } else if (raw.size() == 16) {
      a.family_ = Family::V6;
    } else {
      return a;
    }
    std::memcpy(a.bytes_.data(), raw.data(), raw.size());
    return a;
  }

  static std::optional<IpAddress> parse(std::string_view text) {
    std::string s(text);
    IpAddress a;
    if (inet_pton(AF_INET, s.c_str(), a.bytes_.data()) == 1) {
      a.family_ = Family::V4;
      return a;
    }
    if (inet_pton(AF_INET6, s.c_str(), a.bytes_.data()) == 1) {
      a.family_ = Family::V6;
      return a;
    }
    return std::nullopt;
  }

  Family family() const { return family_; }
  bool is_v4() const { return family_ == Family::V4; }
  std::size_t size() const { return is_v4() ? 4 : 16; }
  std::span<const std::uint8_t> bytes() const { return {bytes_.data(), size()}; }

  std::string to_string() const {
    char buf[INET6_ADDRSTRLEN] = {};
    inet_ntop(is_v4() ? AF_INET : AF_INET6, bytes_.data(), buf, sizeof(buf));
    return buf;
  }

  auto operator<=>(const IpAddress&) const = default;

 private:
  Family family_ = Family::V4;
  std::array<std::uint8_t, 16> bytes_{};
};

struct Cidr {
  IpAddress base;
  int prefix_len = 0;

  bool contains(const IpAddress& addr) const {
    if (addr.family() != base.family()) return false;
    auto a = addr.bytes();
    auto b = base.bytes();
    int full = prefix_len / 8;
    for (int i = 0; i < full; ++i)
      if (a[i] != b[i]) return false;
    int rem = prefix_len % 8;
    if (rem == 0) return true;
    std::uint8_t mask = static_cast<std::uint8_t>(0xFF << (8 - rem));
    return (a[full] & mask) == (b[full] & mask);
  }

  std::string to_string() const { return base.to_string() + "/" + std::to_string(prefix_len); }

  static std::optional<Cidr> parse(std::string_view text) {
    auto slash = text.find('/');
    auto addr = IpAddress::parse(text.substr(0, slash));
    if (!addr) return std::nullopt;
    int max_len = addr->is_v4() ? 32 : 128;
    int len = max_len;
    if (slash != std::string_view::npos) {
      std::string digits(text.substr(slash + 1));
      if (digits.empty() || digits.size() > 3) return std::nullopt;
      for (char c : digits)
        if (c < '0' || c > '9') return std::nullopt;
      len = std::stoi(digits);
      if (len > max_len) return std::nullopt;
    }
    return Cidr{*addr, len};
  }
};

/// RFC1918 ranges plus IPv6 unique-local and link-local space.
inline std::vector<Cidr> default_local_prefixes() {
  std::vector<Cidr> out;
  for (auto s : {"10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16", "fc00::/7", "fe80::/10"})
    out.push_back(*Cidr::parse(s));
  return out;
}

inline bool is_local(const IpAddress& addr, std::span<const Cidr> local_prefixes) {
  for (const auto& c : local_prefixes)
    if (c.contains(addr)) return true;
  return false;
}

enum class Direction { Upstream, Downstream, Internal, External };

inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Upstream: return "UPSTREAM";
    case Direction::Downstream: return "DOWNSTREAM";
    case Direction::Internal: return "INTERNAL";
    case Direction::External: return "EXTERNAL";
  }
  return "EXTERNAL";
}

/// private->public is upstream, public->private downstream.
inline Direction classify_direction(const IpAddress& src, const IpAddress& dst,
                                    std::span<const Cidr> local_prefixes) {
  bool src_local = is_local(src, local_prefixes);
  bool dst_local = is_local(dst, local_prefixes);
  if (src_local && !dst_local) return Direction::Upstream;
  if (!src_local && dst_local) return Direction::Downstream;
  if (src_local) return Direction::Internal;
  return Direction::External;
}

}  // namespace carenet
