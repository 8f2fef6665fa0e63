#pragma once

#include <time.h>

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace carenet {

using Micros = std::chrono::microseconds;
/// UTC instant at microsecond resolution.
using Timestamp = std::chrono::sys_time<Micros>;
/// Wall-clock instant in the configured local zone.
using LocalTimestamp = std::chrono::local_time<Micros>;
using Date = std::chrono::year_month_day;

inline constexpr std::int64_t kMicrosPerSecond = 1'000'000;
inline constexpr std::int64_t kMicrosPerMinute = 60 * kMicrosPerSecond;
inline constexpr std::int64_t kMicrosPerDay = 1440 * kMicrosPerMinute;

inline Timestamp from_epoch_micros(std::int64_t us) { return Timestamp{Micros{us}}; }
inline std::int64_t epoch_micros(Timestamp t) { return t.time_since_epoch().count(); }

inline Date next_day(Date d) { return Date{std::chrono::sys_days{d} + std::chrono::days{1}}; }
inline Date prev_day(Date d) { return Date{std::chrono::sys_days{d} - std::chrono::days{1}}; }
inline Date add_days(Date d, int n) { return Date{std::chrono::sys_days{d} + std::chrono::days{n}}; }
inline int days_between(Date from, Date to) {
  return static_cast<int>((std::chrono::sys_days{to} - std::chrono::sys_days{from}).count());
}

namespace detail {

inline bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

inline std::string pad(long v, int width) {
  std::string s = std::to_string(v < 0 ? -v : v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return v < 0 ? "-" + s : s;
}

}  // namespace detail

/// "YYYY-MM-DD"
inline std::string format_date(Date d) {
  return detail::pad(int(d.year()), 4) + "-" + detail::pad(unsigned(d.month()), 2) + "-" +
         detail::pad(unsigned(d.day()), 2);
}

/// "YYYYMMDD"
inline std::string format_date_compact(Date d) {
  return detail::pad(int(d.year()), 4) + detail::pad(unsigned(d.month()), 2) +
         detail::pad(unsigned(d.day()), 2);
}

inline std::optional<Date> parse_date(std::string_view s) {
  int y = 0, m = 0, d = 0;
  if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
    if (!detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(5, 2), m) ||
        !detail::parse_int(s.substr(8, 2), d))
      return std::nullopt;
  } else if (s.size() == 8) {
    if (!detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(4, 2), m) ||
        !detail::parse_int(s.substr(6, 2), d))
      return std::nullopt;
  } else {
    return std::nullopt;
  }
  Date out{std::chrono::year{y}, std::chrono::month{unsigned(m)}, std::chrono::day{unsigned(d)}};
  if (!out.ok()) return std::nullopt;
  return out;
}

/// Clock time of day, second resolution. Used for profiles and scenario schedules.
struct ClockTime {
  int seconds = 0;  // since midnight, [0, 86400)

  int minutes() const { return seconds / 60; }
  auto operator<=>(const ClockTime&) const = default;
};

/// Accepts "HH:MM" or "HH:MM:SS". Hours up to 47 are allowed when `allow_next_day`.
inline std::optional<ClockTime> parse_clock(std::string_view s, bool allow_next_day = false) {
  if (s.size() != 5 && s.size() != 8) return std::nullopt;
  int h = 0, m = 0, sec = 0;
  if (s[2] != ':' || !detail::parse_int(s.substr(0, 2), h) || !detail::parse_int(s.substr(3, 2), m))
    return std::nullopt;
  if (s.size() == 8 && (s[5] != ':' || !detail::parse_int(s.substr(6, 2), sec))) return std::nullopt;
  if (h < 0 || h > (allow_next_day ? 47 : 23) || m < 0 || m > 59 || sec < 0 || sec > 59)
    return std::nullopt;
  return ClockTime{h * 3600 + m * 60 + sec};
}

inline std::string format_clock(ClockTime t) {
  std::string out = detail::pad(t.seconds / 3600, 2) + ":" + detail::pad((t.seconds / 60) % 60, 2);
  if (t.seconds % 60 != 0) out += ":" + detail::pad(t.seconds % 60, 2);
  return out;
}

/// ISO-8601 UTC, e.g. "2024-03-01T06:00:00Z" or with a microsecond fraction when non-zero.
inline std::string format_iso(Timestamp t) {
  auto day = std::chrono::floor<std::chrono::days>(t);
  Date d{day};
  std::int64_t us = (t - day).count();
  std::int64_t secs = us / kMicrosPerSecond;
  std::int64_t frac = us % kMicrosPerSecond;
  std::string out = format_date(d) + "T" + detail::pad(secs / 3600, 2) + ":" +
                    detail::pad((secs / 60) % 60, 2) + ":" + detail::pad(secs % 60, 2);
  if (frac != 0) out += "." + detail::pad(frac, 6);
  return out + "Z";
}

/// Parses "YYYY-MM-DDTHH:MM:SS[.ffffff]" followed by "Z" or a "+HH:MM"/"-HH:MM" offset.
inline std::optional<Timestamp> parse_iso(std::string_view s) {
  std::int64_t offset_s = 0;
  if (!s.empty() && s.back() == 'Z') {
    s.remove_suffix(1);
  } else if (s.size() >= 6 && (s[s.size() - 6] == '+' || s[s.size() - 6] == '-') &&
             s[s.size() - 3] == ':') {
    int h = 0, m = 0;
    auto off = s.substr(s.size() - 6);
    if (!detail::parse_int(off.substr(1, 2), h) || !detail::parse_int(off.substr(4, 2), m) ||
        h > 23 || m > 59)
      return std::nullopt;
    offset_s = (h * 3600 + m * 60) * (off[0] == '-' ? -1 : 1);
    s.remove_suffix(6);
  } else {
    return std::nullopt;
  }
  if (s.size() < 19 || s[10] != 'T') return std::nullopt;
  auto d = parse_date(s.substr(0, 10));
  auto c = parse_clock(s.substr(11, 8));
  if (!d || !c) return std::nullopt;
  std::int64_t frac = 0;
  std::string_view rest = s.substr(19);
  if (!rest.empty()) {
    if (rest[0] != '.' || rest.size() < 2 || rest.size() > 7) return std::nullopt;
    std::string digits(rest.substr(1));
    while (digits.size() < 6) digits += '0';
    int v = 0;
    if (!detail::parse_int(digits, v)) return std::nullopt;
    frac = v;
  }
  return Timestamp{std::chrono::sys_days{*d}} +
         Micros{(c->seconds - offset_s) * kMicrosPerSecond + frac};
}

class TimeZoneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Local-time conversions for one zone: UTC, a fixed offset ("+02:00"), or an IANA name
/// resolved through the system zoneinfo database.
class TimeZone {
 public:
  TimeZone() = default;

  static TimeZone utc() { return TimeZone{}; }

  static TimeZone parse(std::string_view name) {
    TimeZone tz;
    if (name.empty() || name == "UTC" || name == "Z" || name == "Etc/UTC") return tz;
    if ((name[0] == '+' || name[0] == '-') && name.size() == 6 && name[3] == ':') {
      int h = 0, m = 0;
      if (!detail::parse_int(name.substr(1, 2), h) || !detail::parse_int(name.substr(4, 2), m) ||
          h > 14 || m > 59)
        throw TimeZoneError("invalid UTC offset: " + std::string(name));
      tz.kind_ = Kind::Fixed;
      tz.fixed_offset_s_ = (h * 3600 + m * 60) * (name[0] == '-' ? -1 : 1);
      tz.name_ = std::string(name);
      return tz;
    }
    std::filesystem::path zoneinfo = "/usr/share/zoneinfo";
    if (name.find("..") != std::string_view::npos || !std::filesystem::exists(zoneinfo / name))
      throw TimeZoneError("unknown time zone: " + std::string(name));
    tz.kind_ = Kind::Named;
    tz.name_ = std::string(name);
    return tz;
  }

  const std::string& name() const { return name_; }

  /// Offset of local wall time from UTC at the given instant.
  std::chrono::seconds offset_at(Timestamp t) const {
    switch (kind_) {
      case Kind::Utc: return std::chrono::seconds{0};
      case Kind::Fixed: return std::chrono::seconds{fixed_offset_s_};
      case Kind::Named: break;
    }
    std::lock_guard lock(env_mutex());
    activate();
    time_t secs = static_cast<time_t>(std::chrono::floor<std::chrono::seconds>(t).time_since_epoch().count());
    struct tm parts {};
    localtime_r(&secs, &parts);
    return std::chrono::seconds{parts.tm_gmtoff};
  }

  LocalTimestamp to_local(Timestamp t) const {
    return LocalTimestamp{t.time_since_epoch() + offset_at(t)};
  }

  /// Inverse of to_local. Ambiguous wall times resolve to the earlier instant.
  Timestamp from_local(LocalTimestamp lt) const {
    switch (kind_) {
      case Kind::Utc: return Timestamp{lt.time_since_epoch()};
      case Kind::Fixed: return Timestamp{lt.time_since_epoch() - std::chrono::seconds{fixed_offset_s_}};
      case Kind::Named: break;
    }
    // Two fixed-point steps settle on the offset in effect at the resulting instant.
    Timestamp guess{lt.time_since_epoch()};
    for (int i = 0; i < 2; ++i) guess = Timestamp{lt.time_since_epoch() - offset_at(guess)};
    return guess;
  }

  Date local_date(Timestamp t) const {
    return Date{std::chrono::floor<std::chrono::days>(to_local(t))};
  }

  /// UTC instant of the given local wall-clock time on `d`.
  Timestamp at(Date d, std::chrono::seconds since_midnight) const {
    return from_local(LocalTimestamp{std::chrono::local_days{d}.time_since_epoch()} + since_midnight);
  }

  Timestamp midnight(Date d) const { return at(d, std::chrono::seconds{0}); }

  /// Microseconds since local midnight.
  std::int64_t micros_of_day(Timestamp t) const {
    auto lt = to_local(t);
    return (lt - std::chrono::floor<std::chrono::days>(lt)).count();
  }

 private:
  enum class Kind { Utc, Fixed, Named };

  static std::mutex& env_mutex() {
    static std::mutex m;
    return m;
  }

  static std::string& active_zone() {
    static std::string z;
    return z;
  }

  void activate() const {
    if (active_zone() == name_) return;
    setenv("TZ", name_.c_str(), 1);
    tzset();
    active_zone() = name_;
  }

  Kind kind_ = Kind::Utc;
  int fixed_offset_s_ = 0;
  std::string name_ = "UTC";
};

}  // namespace carenet
