#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "carenet/ip.hpp"
#include "carenet/packet.hpp"
#include "carenet/time.hpp"

namespace carenet {

class CaptureFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CaptureStats {
  std::uint64_t frames = 0;
  std::uint64_t ip_packets = 0;
  std::uint64_t non_ip_skipped = 0;
  std::uint64_t malformed = 0;
  std::vector<std::string> warnings;
};

struct CaptureOptions {
  std::vector<Cidr> local_prefixes = default_local_prefixes();
  /// TCP upstream packets with 0 < payload < threshold are flagged as interactive.
  std::uint32_t small_packet_threshold = 200;
};

namespace linktype {
inline constexpr std::uint32_t kEthernet = 1;
inline constexpr std::uint32_t kRaw = 101;
}  // namespace linktype

namespace detail {

inline std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }
inline std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

/// First question name of a DNS query message, lowercased. Compression pointers are not
/// legal in a query's first name and are rejected.
inline std::optional<std::string> dns_query_name(std::span<const std::uint8_t> msg) {
  if (msg.size() < 12) return std::nullopt;
  bool is_response = (msg[2] & 0x80) != 0;
  int opcode = (msg[2] >> 3) & 0x0F;
  std::uint16_t qdcount = be16(&msg[4]);
  if (is_response || opcode != 0 || qdcount == 0) return std::nullopt;
  std::string name;
  std::size_t pos = 12;
  while (true) {
    if (pos >= msg.size()) return std::nullopt;
    std::uint8_t len = msg[pos++];
    if (len == 0) break;
    if (len > 63 || pos + len > msg.size()) return std::nullopt;
    if (!name.empty()) name += '.';
    for (std::size_t i = 0; i < len; ++i) {
      char c = static_cast<char>(msg[pos + i]);
      if (c == '.' || c == '\0') return std::nullopt;
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      name += c;
    }
    pos += len;
    if (name.size() > 253) return std::nullopt;
  }
  if (name.empty()) return std::nullopt;
  return name;
}

enum class DecodeStatus { Ok, NotIp, Malformed };

struct DecodeResult {
  DecodeStatus status = DecodeStatus::Malformed;
  PacketRecord record;
};

inline DecodeResult decode_ip(std::span<const std::uint8_t> ip, Timestamp ts, const CaptureOptions& opts) {
  DecodeResult out;
  PacketRecord& r = out.record;
  r.timestamp = ts;
  if (ip.empty()) return out;
  int version = ip[0] >> 4;
  std::uint8_t proto = 0;
  std::size_t l4_offset = 0;
  std::size_t l4_length = 0;  // as claimed by headers; may exceed captured bytes
  bool first_fragment = true;

  if (version == 4) {
    if (ip.size() < 20) return out;
    std::size_t ihl = std::size_t(ip[0] & 0x0F) * 4;
    std::uint16_t total = be16(&ip[2]);
    if (ihl < 20 || ip.size() < ihl || total < ihl) return out;
    std::uint16_t frag = be16(&ip[6]) & 0x1FFF;
    first_fragment = frag == 0;
    proto = ip[9];
    r.src_addr = IpAddress::from_bytes(ip.subspan(12, 4));
    r.dst_addr = IpAddress::from_bytes(ip.subspan(16, 4));
    l4_offset = ihl;
    l4_length = total - ihl;
  } else if (version == 6) {
    if (ip.size() < 40) return out;
    std::uint16_t payload_len = be16(&ip[4]);
    if (payload_len == 0) return out;  // jumbograms are not supported
    r.src_addr = IpAddress::from_bytes(ip.subspan(8, 16));
    r.dst_addr = IpAddress::from_bytes(ip.subspan(24, 16));
    proto = ip[6];
    std::size_t pos = 40;
    std::size_t end = 40 + std::size_t{payload_len};
    while (proto == 0 || proto == 43 || proto == 60 || proto == 44 || proto == 51) {
      if (pos + 8 > ip.size() || pos + 8 > end) return out;
      std::uint8_t next = ip[pos];
      std::size_t ext_len = 0;
      if (proto == 44) {
        ext_len = 8;
        first_fragment = (be16(&ip[pos + 2]) & 0xFFF8) == 0;
      } else if (proto == 51) {
        ext_len = (std::size_t{ip[pos + 1]} + 2) * 4;
      } else {
        ext_len = (std::size_t{ip[pos + 1]} + 1) * 8;
      }
      proto = next;
      pos += ext_len;
      if (pos > end) return out;
    }
    l4_offset = pos;
    l4_length = end - pos;
  } else {
    return out;
  }

  std::span<const std::uint8_t> l4 = ip.size() > l4_offset ? ip.subspan(l4_offset) : std::span<const std::uint8_t>{};
  if (l4.size() > l4_length) l4 = l4.first(l4_length);

  if (!first_fragment || (proto != 6 && proto != 17)) {
    r.transport = Transport::Other;
    r.payload_bytes = static_cast<std::uint32_t>(l4_length);
    out.status = DecodeStatus::Ok;
    return out;
  }

  std::span<const std::uint8_t> app;
  if (proto == 6) {
    if (l4.size() < 20 || l4_length < 20) return out;
    std::size_t doff = std::size_t(l4[12] >> 4) * 4;
    if (doff < 20 || doff > l4_length) return out;
    r.transport = Transport::Tcp;
    r.src_port = be16(&l4[0]);
    r.dst_port = be16(&l4[2]);
    r.payload_bytes = static_cast<std::uint32_t>(l4_length - doff);
    if (l4.size() > doff) app = l4.subspan(doff);
    if (app.size() >= 2) app = app.subspan(2);  // DNS over TCP carries a length prefix
    else app = {};
  } else {
    if (l4.size() < 8 || l4_length < 8) return out;
    std::uint16_t udp_len = be16(&l4[4]);
    if (udp_len < 8 || udp_len > l4_length) return out;
    r.transport = Transport::Udp;
    r.src_port = be16(&l4[0]);
    r.dst_port = be16(&l4[2]);
    r.payload_bytes = udp_len - 8u;
    app = l4.subspan(8, std::min<std::size_t>(l4.size(), udp_len) - 8);
  }

  if (r.dst_port == 53) r.dns_qname = dns_query_name(app);
  r.tcp_small_upstream = r.transport == Transport::Tcp && r.payload_bytes > 0 &&
                         r.payload_bytes < opts.small_packet_threshold &&
                         classify_direction(r.src_addr, r.dst_addr, opts.local_prefixes) == Direction::Upstream;
  out.status = DecodeStatus::Ok;
  return out;
}

inline DecodeResult decode_frame(std::uint32_t link, std::span<const std::uint8_t> frame, Timestamp ts,
                                 const CaptureOptions& opts) {
  if (link == linktype::kRaw) return decode_ip(frame, ts, opts);
  DecodeResult out;
  if (frame.size() < 14) return out;
  std::size_t pos = 12;
  std::uint16_t ethertype = be16(&frame[pos]);
  pos += 2;
  while (ethertype == 0x8100 || ethertype == 0x88A8) {
    if (frame.size() < pos + 4) return out;
    ethertype = be16(&frame[pos + 2]);
    pos += 4;
  }
  if (ethertype != 0x0800 && ethertype != 0x86DD) {
    out.status = DecodeStatus::NotIp;
    return out;
  }
  return decode_ip(frame.subspan(pos), ts, opts);
}

}  // namespace detail

/// Sequential reader over a pcap or pcap-ng byte stream yielding one PacketRecord per IP packet.
class CaptureReader {
 public:
  explicit CaptureReader(std::istream& in, CaptureOptions opts = {}) : in_(in), opts_(std::move(opts)) {
    std::uint8_t magic[4];
    if (!read_exact(magic, 4)) throw CaptureFormatError("capture too short for a file header");
    std::uint32_t raw = detail::be32(magic);
    if (raw == 0x0A0D0D0A) {
      pcapng_ = true;
      read_section_header_rest();
      return;
    }
    if (raw == 0xA1B2C3D4 || raw == 0xA1B23C4D) {
      swap_ = false;
    } else if (raw == 0xD4C3B2A1 || raw == 0x4D3CB2A1) {
      swap_ = true;
    } else {
      throw CaptureFormatError("unrecognized capture magic");
    }
    nanos_ = raw == 0xA1B23C4D || raw == 0x4D3CB2A1;
    std::uint8_t hdr[20];
    if (!read_exact(hdr, 20)) throw CaptureFormatError("truncated pcap file header");
    std::uint32_t link = u32(hdr + 16) & 0x0FFFFFFF;
    check_link(link);
    interfaces_.push_back({link, nanos_ ? 1'000'000'000u : 1'000'000u});
  }

  /// Next IP record, or nullopt at end of stream (or after a truncated trailing record).
  std::optional<PacketRecord> next() {
    while (!done_) {
      auto frame = pcapng_ ? next_pcapng_frame() : next_pcap_frame();
      if (!frame) break;
      ++stats_.frames;
      auto res = detail::decode_frame(frame->link, frame->data, frame->ts, opts_);
      switch (res.status) {
        case detail::DecodeStatus::Ok:
          ++stats_.ip_packets;
          return std::move(res.record);
        case detail::DecodeStatus::NotIp: ++stats_.non_ip_skipped; break;
        case detail::DecodeStatus::Malformed: ++stats_.malformed; break;
      }
    }
    done_ = true;
    return std::nullopt;
  }

  const CaptureStats& stats() const { return stats_; }

 private:
  struct Interface {
    std::uint32_t link;
    std::uint64_t units_per_second = 1'000'000;
  };

  struct Frame {
    std::uint32_t link;
    Timestamp ts;
    std::span<const std::uint8_t> data;
  };

  static constexpr std::uint32_t kMaxFrame = 256 * 1024;

  bool read_exact(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount()) == n;
  }

  std::uint16_t u16(const std::uint8_t* p) const {
    return swap_ ? static_cast<std::uint16_t>(p[0] | (p[1] << 8)) : detail::be16(p);
  }
  std::uint32_t u32(const std::uint8_t* p) const {
    return swap_ ? (std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
                    (std::uint32_t{p[3]} << 24))
                 : detail::be32(p);
  }

  static void check_link(std::uint32_t link) {
    if (link != linktype::kEthernet && link != linktype::kRaw)
      throw CaptureFormatError("unsupported link type " + std::to_string(link));
  }

  void truncated(const std::string& what) {
    stats_.warnings.push_back("truncated trailing record: " + what);
    done_ = true;
  }

  std::optional<Frame> next_pcap_frame() {
    std::uint8_t hdr[16];
    in_.read(reinterpret_cast<char*>(hdr), 16);
    auto got = in_.gcount();
    if (got == 0) return std::nullopt;
    if (got != 16) {
      truncated("record header");
      return std::nullopt;
    }
    std::uint32_t sec = u32(hdr), frac = u32(hdr + 4), incl = u32(hdr + 8);
    if (incl > kMaxFrame) {
      truncated("implausible record length " + std::to_string(incl));
      return std::nullopt;
    }
    buf_.resize(incl);
    if (!read_exact(buf_.data(), incl)) {
      truncated("record data");
      return std::nullopt;
    }
    std::int64_t us = std::int64_t{sec} * kMicrosPerSecond + (nanos_ ? frac / 1000 : frac);
    return Frame{interfaces_[0].link, from_epoch_micros(us), buf_};
  }

  void read_section_header_rest() {
    // Block type already consumed; total length and byte-order magic follow.
    std::uint8_t hdr[8];
    if (!read_exact(hdr, 8)) throw CaptureFormatError("truncated pcapng section header");
    std::uint32_t bom = detail::be32(hdr + 4);
    if (bom == 0x1A2B3C4D) {
      swap_ = false;
    } else if (bom == 0x4D3C2B1A) {
      swap_ = true;
    } else {
      throw CaptureFormatError("bad pcapng byte-order magic");
    }
    std::uint32_t total = u32(hdr);
    if (total < 28 || total % 4 != 0 || total > kMaxFrame)
      throw CaptureFormatError("bad pcapng section header length");
    std::vector<std::uint8_t> rest(total - 12);
    if (!read_exact(rest.data(), rest.size())) throw CaptureFormatError("truncated pcapng section header");
    interfaces_.clear();
  }

  void add_interface(std::span<const std::uint8_t> body) {
    if (body.size() < 8) {
      ++stats_.malformed;
      interfaces_.push_back({0});
      return;
    }
    Interface itf{u16(body.data())};
    check_link(itf.link);
    std::size_t pos = 8;
    while (pos + 4 <= body.size()) {
      std::uint16_t code = u16(&body[pos]);
      std::uint16_t len = u16(&body[pos + 2]);
      pos += 4;
      if (code == 0 || pos + len > body.size()) break;
      if (code == 9 && len >= 1) {
        std::uint8_t v = body[pos];
        std::uint64_t per_sec = 1;
        if (v & 0x80) {
          per_sec = std::uint64_t{1} << std::min<int>(v & 0x7F, 63);
        } else {
          for (int i = 0; i < (v & 0x7F) && i < 19; ++i) per_sec *= 10;
        }
        itf.units_per_second = per_sec;
      }
      pos += (len + 3u) & ~3u;
    }
    interfaces_.push_back(itf);
  }

  Timestamp pcapng_time(const Interface& itf, std::uint64_t raw) const {
    std::uint64_t ups = itf.units_per_second;
    std::uint64_t secs = raw / ups;
    std::uint64_t rem = raw % ups;
    auto us = static_cast<std::int64_t>(secs) * kMicrosPerSecond +
              static_cast<std::int64_t>((static_cast<unsigned __int128>(rem) * 1'000'000) / ups);
    return from_epoch_micros(us);
  }

  std::optional<Frame> next_pcapng_frame() {
    while (true) {
      std::uint8_t hdr[8];
      in_.read(reinterpret_cast<char*>(hdr), 8);
      auto got = in_.gcount();
      if (got == 0) return std::nullopt;
      if (got != 8) {
        truncated("block header");
        return std::nullopt;
      }
      if (detail::be32(hdr) == 0x0A0D0D0A) {
        // New section: the length field was read with the previous byte order, re-read it.
        in_.seekg(-4, std::ios::cur);
        read_section_header_rest();
        continue;
      }
      std::uint32_t type = u32(hdr);
      std::uint32_t total = u32(hdr + 4);
      if (total < 12 || total % 4 != 0 || total > kMaxFrame) {
        truncated("implausible block length " + std::to_string(total));
        return std::nullopt;
      }
      buf_.resize(total - 8);
      if (!read_exact(buf_.data(), buf_.size())) {
        truncated("block body");
        return std::nullopt;
      }
      std::span<const std::uint8_t> body(buf_.data(), buf_.size() - 4);
      if (type == 1) {
        add_interface(body);
        continue;
      }
      if (type == 6 || type == 2) {
        // Enhanced packet block, or the obsolete packet block with a 16-bit interface id.
        if (body.size() < 20) {
          ++stats_.malformed;
          continue;
        }
        std::uint32_t if_id = type == 6 ? u32(body.data()) : u16(body.data());
        std::uint64_t raw_ts = (std::uint64_t{u32(&body[4])} << 32) | u32(&body[8]);
        std::uint32_t cap = u32(&body[12]);
        if (if_id >= interfaces_.size() || 20 + std::size_t{cap} > body.size()) {
          ++stats_.frames;
          ++stats_.malformed;
          continue;
        }
        const auto& itf = interfaces_[if_id];
        return Frame{itf.link, pcapng_time(itf, raw_ts), body.subspan(20, cap)};
      }
      if (type == 3) {
        // Simple packet blocks carry no timestamp and cannot be placed in a window.
        ++stats_.frames;
        ++stats_.malformed;
        continue;
      }
      // Name resolution, statistics, custom blocks: not needed.
    }
  }

  std::istream& in_;
  CaptureOptions opts_;
  bool pcapng_ = false;
  bool swap_ = false;
  bool nanos_ = false;
  bool done_ = false;
  std::vector<Interface> interfaces_;
  std::vector<std::uint8_t> buf_;
  CaptureStats stats_;
};

/// Reads a whole capture file. Throws CaptureFormatError on an unreadable file header.
inline std::vector<PacketRecord> parse_capture(std::istream& in, CaptureStats* stats = nullptr,
                                               CaptureOptions opts = {}) {
  CaptureReader reader(in, std::move(opts));
  std::vector<PacketRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  if (stats) *stats = reader.stats();
  return out;
}

inline std::vector<PacketRecord> parse_capture_file(const std::string& path, CaptureStats* stats = nullptr,
                                                    CaptureOptions opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CaptureFormatError("cannot open capture: " + path);
  return parse_capture(in, stats, std::move(opts));
}

}  // namespace carenet
