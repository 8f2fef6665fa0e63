#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "carenet/packet.hpp"
#include "carenet/time.hpp"

namespace carenet {

struct PartitionOptions {
  std::string dataset;
  std::chrono::minutes delta{5};
  TimeZone tz;
};

struct PartitionSet {
  /// File stem `<dataset>__YYYYMMDD_HHMM` -> records sorted by timestamp.
  std::map<std::string, std::vector<PacketRecord>> files;
  std::uint64_t rejected = 0;
};

inline void validate_delta(std::chrono::minutes delta) {
  if (delta.count() <= 0 || 1440 % delta.count() != 0)
    throw std::invalid_argument("window length must be a whole number of minutes dividing 24 h");
}

/// Accepted timestamp range: [1990-01-01, 2100-01-01) UTC.
inline bool plausible_timestamp(Timestamp t) {
  using namespace std::chrono;
  static const Timestamp lo = sys_days{year{1990} / January / 1};
  static const Timestamp hi = sys_days{year{2100} / January / 1};
  return t >= lo && t < hi;
}

/// Local wall-clock start of the window containing `t`.
inline LocalTimestamp window_start_local(Timestamp t, std::chrono::minutes delta, const TimeZone& tz) {
  auto lt = tz.to_local(t);
  auto day = std::chrono::floor<std::chrono::days>(lt);
  auto into = lt - day;
  return day + std::chrono::floor<std::chrono::minutes>(into) - (std::chrono::floor<std::chrono::minutes>(into) % delta);
}

inline std::string partition_stem(const std::string& dataset, LocalTimestamp window_start) {
  auto day = std::chrono::floor<std::chrono::days>(window_start);
  Date d{std::chrono::sys_days{day.time_since_epoch()}};
  auto mins = std::chrono::duration_cast<std::chrono::minutes>(window_start - day).count();
  return dataset + "__" + format_date_compact(d) + "_" + detail::pad(mins / 60, 2) + detail::pad(mins % 60, 2);
}

struct PartitionName {
  std::string dataset;
  Date date;
  int minute_of_day = 0;
};

inline std::optional<PartitionName> parse_partition_stem(std::string_view stem) {
  auto sep = stem.rfind("__");
  if (sep == std::string_view::npos || stem.size() != sep + 2 + 13 || stem[sep + 10] != '_') return std::nullopt;
  auto date = parse_date(stem.substr(sep + 2, 8));
  int hh = 0, mm = 0;
  if (!date || !detail::parse_int(stem.substr(sep + 11, 2), hh) || !detail::parse_int(stem.substr(sep + 13, 2), mm) ||
      hh > 23 || mm > 59)
    return std::nullopt;
  return PartitionName{std::string(stem.substr(0, sep)), *date, hh * 60 + mm};
}

/// Splits records into half-open [start, start + delta) windows keyed by local start time.
inline PartitionSet partition(std::span<const PacketRecord> records, const PartitionOptions& opts) {
  validate_delta(opts.delta);
  PartitionSet out;
  for (const auto& r : records) {
    if (!plausible_timestamp(r.timestamp)) {
      ++out.rejected;
      continue;
    }
    out.files[partition_stem(opts.dataset, window_start_local(r.timestamp, opts.delta, opts.tz))].push_back(r);
  }
  for (auto& [_, recs] : out.files)
    std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  return out;
}

inline std::string to_jsonl(std::span<const PacketRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<PacketRecord> read_partition_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RecordFormatError("cannot open partition " + path.string());
  std::vector<PacketRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(packet_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw RecordFormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace carenet
