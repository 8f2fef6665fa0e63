#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "carenet/time.hpp"
#include "carenet/window.hpp"

namespace carenet {

namespace feature_names {
inline const std::string kWakeAfter0400Min = "C4_F2_WakeAfter0400Min";
inline const std::string kSleepDurationZAbs30d = "C4_F4_SleepDurationZAbs30d";
inline const std::string kDaytimeIdleRatio0818 = "C4_F7_DaytimeIdleRatio0818";
inline const std::string kNightDayTrafficRatioBytes = "C4_F8_NightDayTrafficRatioBytes";
inline const std::string kDnsBurstRatePerHour = "C8_F2_DNSBurstRatePerHour";
inline const std::string kRepeatedQueryRatio60m = "C8_F4_RepeatedQueryRatio60m";
inline const std::string kMedianIksSec = "C8_F8_MedianIKSsec";
/// Raw nightly idle gap (minutes); feeds the sleep-duration baseline.
inline const std::string kNightlyIdleGapMin = "NightlyIdleGapMin";

inline const std::vector<std::string>& implemented() {
  static const std::vector<std::string> all{kWakeAfter0400Min,    kSleepDurationZAbs30d,   kDaytimeIdleRatio0818,
                                            kNightDayTrafficRatioBytes, kDnsBurstRatePerHour, kRepeatedQueryRatio60m,
                                            kMedianIksSec};
  return all;
}
}  // namespace feature_names

/// Tunables of the feature extraction stage. Clock bounds are local minutes since midnight.
struct FeatureEngineConfig {
  std::chrono::minutes delta{5};
  Micros session_gap = std::chrono::seconds{300};
  /// A window is active (non-idle) when the user sent or received at least this many packets.
  std::uint64_t active_min_packets = 10;
  std::size_t burst_min_distinct = 3;
  Micros burst_span = std::chrono::seconds{60};
  Micros repeat_span = std::chrono::minutes{60};
  std::size_t repeat_min_queries = 5;
  double iks_min_s = 0.03;
  double iks_max_s = 2.0;
  std::size_t iks_min_samples = 20;
  int baseline_days = 30;
  std::size_t baseline_min_days = 7;
  double validity_threshold = 0.5;
  int wake_anchor_min = 4 * 60;
  int sleep_search_from_min = 20 * 60;  // on the previous day
  int sleep_search_to_min = 10 * 60;
  int daytime_from_min = 8 * 60;
  int daytime_to_min = 18 * 60;
  int night_from_min = 22 * 60;
  int night_to_min = 6 * 60;

  int windows_per_day() const { return static_cast<int>(1440 / delta.count()); }
};

// Sessions ------------------------------------------------------------------

struct Session {
  Timestamp start{};
  Timestamp end{};

  Micros length() const { return end - start; }
  bool operator==(const Session&) const = default;
};

/// Maximal runs of sorted timestamps whose inter-arrival times are <= gap_threshold.
inline std::vector<Session> sessions_from_timestamps(std::span<const Timestamp> sorted, Micros gap_threshold) {
  std::vector<Session> out;
  for (auto t : sorted) {
    if (!out.empty() && t - out.back().end <= gap_threshold) {
      out.back().end = t;
    } else {
      out.push_back({t, t});
    }
  }
  return out;
}

struct ActivitySession {
  Timestamp first_window{};
  Timestamp last_window{};
  Timestamp start{};  // first packet seen in the first window
};

inline bool is_active(const WindowSummary& w, const FeatureEngineConfig& cfg) {
  return w.packet_count >= cfg.active_min_packets;
}

/// Sessions over active windows (window starts as activity timestamps).
inline std::vector<ActivitySession> activity_sessions(std::span<const WindowSummary> windows,
                                                      const FeatureEngineConfig& cfg) {
  std::vector<const WindowSummary*> active;
  for (const auto& w : windows)
    if (is_active(w, cfg)) active.push_back(&w);
  std::sort(active.begin(), active.end(), [](auto* a, auto* b) { return a->window_start < b->window_start; });
  std::vector<Timestamp> starts;
  starts.reserve(active.size());
  for (auto* w : active) starts.push_back(w->window_start);
  auto sessions = sessions_from_timestamps(starts, cfg.session_gap);
  std::vector<ActivitySession> out;
  std::size_t idx = 0;
  for (const auto& s : sessions) {
    while (active[idx]->window_start != s.start) ++idx;
    out.push_back({s.start, s.end, active[idx]->first_seen.value_or(s.start)});
  }
  return out;
}

// Baselines -----------------------------------------------------------------

/// Personal baseline over recent valid days.
struct BaselineWindow {
  std::string feature_name;
  std::string user_id;
  std::vector<double> history;

  std::size_t size() const { return history.size(); }

  double mean() const {
    if (history.empty()) return 0.0;
    double sum = 0.0;
    for (double v : history) sum += v;
    return sum / static_cast<double>(history.size());
  }

  /// Sample standard deviation (n - 1).
  double stddev() const {
    if (history.size() < 2) return 0.0;
    double m = mean();
    double ss = 0.0;
    for (double v : history) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(history.size() - 1));
  }
};

/// (value - mean) / std against the baseline; 0 when std is 0, missing when the baseline is short.
inline std::optional<double> rolling_z(double value, const BaselineWindow& baseline, std::size_t min_days = 7) {
  if (baseline.size() < min_days || !std::isfinite(value)) return std::nullopt;
  double sd = baseline.stddev();
  if (sd == 0.0) return 0.0;
  return (value - baseline.mean()) / sd;
}

// Validity ------------------------------------------------------------------

struct DayValidity {
  bool valid = false;
  double coverage = 0.0;
};

/// Coverage is the share of the day's windows carrying any data for the user.
inline DayValidity day_validity(std::span<const WindowSummary> day_windows, double threshold,
                                std::chrono::minutes delta = std::chrono::minutes{5}) {
  std::set<Timestamp> seen;
  for (const auto& w : day_windows)
    if (w.packet_count > 0) seen.insert(w.window_start);
  double total = 1440.0 / static_cast<double>(delta.count());
  double coverage = std::min(1.0, static_cast<double>(seen.size()) / total);
  return {coverage >= threshold, coverage};
}

// Daily features ------------------------------------------------------------

/// One user's windows for a local calendar date, plus the previous date for overnight spans.
struct DayInput {
  std::string user_id;
  Date date;
  std::span<const WindowSummary> today;
  std::span<const WindowSummary> previous;
};

struct C4Features {
  std::optional<double> wake_after_0400_min;
  std::optional<double> sleep_duration_zabs_30d;
  std::optional<double> daytime_idle_ratio_0818;
  std::optional<double> night_day_traffic_ratio_bytes;
  std::optional<double> nightly_idle_gap_min;
};

struct C8Features {
  std::optional<double> dns_burst_rate_per_hour;
  std::optional<double> repeated_query_ratio_60m;
  std::optional<double> median_iks_sec;
};

namespace detail {

inline int local_minute(Timestamp t, const TimeZone& tz) {
  return static_cast<int>(tz.micros_of_day(t) / kMicrosPerMinute);
}

inline std::vector<WindowSummary> combined_windows(const DayInput& in) {
  std::vector<WindowSummary> all(in.previous.begin(), in.previous.end());
  all.insert(all.end(), in.today.begin(), in.today.end());
  return all;
}

}  // namespace detail

/// Longest idle gap between consecutive activity sessions that intersects the overnight search
/// span (previous day 20:00 to 10:00). Minutes; missing when no bounded gap intersects.
inline std::optional<double> nightly_idle_gap_min(const DayInput& in, const FeatureEngineConfig& cfg,
                                                  const TimeZone& tz) {
  auto windows = detail::combined_windows(in);
  auto sessions = activity_sessions(windows, cfg);
  Timestamp night_start = tz.at(prev_day(in.date), std::chrono::minutes{cfg.sleep_search_from_min});
  Timestamp night_end = tz.at(in.date, std::chrono::minutes{cfg.sleep_search_to_min});
  std::optional<double> best;
  for (std::size_t i = 0; i + 1 < sessions.size(); ++i) {
    Timestamp idle_start = sessions[i].last_window + cfg.delta;
    Timestamp idle_end = sessions[i + 1].first_window;
    if (idle_start < night_end && idle_end > night_start) {
      double minutes = static_cast<double>((idle_end - idle_start).count()) / kMicrosPerMinute;
      if (!best || minutes > *best) best = minutes;
    }
  }
  return best;
}

/// Minutes from 04:00 local to the start of the first session beginning at or after 04:00.
inline std::optional<double> wake_after_0400_min(const DayInput& in, const FeatureEngineConfig& cfg,
                                                 const TimeZone& tz) {
  auto windows = detail::combined_windows(in);
  Timestamp anchor = tz.at(in.date, std::chrono::minutes{cfg.wake_anchor_min});
  Timestamp day_end = tz.midnight(next_day(in.date));
  for (const auto& s : activity_sessions(windows, cfg))
    if (s.start >= anchor && s.start < day_end)
      return static_cast<double>((s.start - anchor).count()) / kMicrosPerMinute;
  return std::nullopt;
}

inline double daytime_idle_ratio(std::span<const WindowSummary> today, const FeatureEngineConfig& cfg,
                                 const TimeZone& tz) {
  int total = (cfg.daytime_to_min - cfg.daytime_from_min) / static_cast<int>(cfg.delta.count());
  std::set<Timestamp> active;
  for (const auto& w : today) {
    int m = detail::local_minute(w.window_start, tz);
    if (m >= cfg.daytime_from_min && m < cfg.daytime_to_min && is_active(w, cfg)) active.insert(w.window_start);
  }
  return static_cast<double>(total - static_cast<int>(active.size())) / total;
}

inline std::optional<double> night_day_traffic_ratio(std::span<const WindowSummary> today,
                                                     const FeatureEngineConfig& cfg, const TimeZone& tz) {
  std::uint64_t night = 0, day = 0;
  for (const auto& w : today) {
    int m = detail::local_minute(w.window_start, tz);
    bool is_night = m >= cfg.night_from_min || m < cfg.night_to_min;
    (is_night ? night : day) += w.byte_count_up + w.byte_count_down;
  }
  if (day == 0) return std::nullopt;
  return static_cast<double>(night) / static_cast<double>(day);
}

inline C4Features compute_c4(const DayInput& in, const BaselineWindow& gap_baseline, const FeatureEngineConfig& cfg,
                             const TimeZone& tz) {
  C4Features f;
  f.wake_after_0400_min = wake_after_0400_min(in, cfg, tz);
  f.nightly_idle_gap_min = nightly_idle_gap_min(in, cfg, tz);
  if (f.nightly_idle_gap_min)
    if (auto z = rolling_z(*f.nightly_idle_gap_min, gap_baseline, cfg.baseline_min_days))
      f.sleep_duration_zabs_30d = std::abs(*z);
  f.daytime_idle_ratio_0818 = daytime_idle_ratio(in.today, cfg, tz);
  f.night_day_traffic_ratio_bytes = night_day_traffic_ratio(in.today, cfg, tz);
  return f;
}

/// Non-overlapping bursts of >= min_distinct registrable domains within `span`, counted
/// greedily left to right. Events must be sorted by time.
inline std::size_t count_dns_bursts(std::span<const DnsEvent> events, std::size_t min_distinct, Micros span) {
  std::size_t bursts = 0;
  std::size_t i = 0;
  while (i < events.size()) {
    std::set<std::string_view> distinct;
    std::optional<std::size_t> end;
    for (std::size_t j = i; j < events.size() && events[j].timestamp - events[i].timestamp <= span; ++j) {
      distinct.insert(events[j].etld1);
      if (distinct.size() >= min_distinct) {
        end = j;
        break;
      }
    }
    if (end) {
      ++bursts;
      i = *end + 1;
    } else {
      ++i;
    }
  }
  return bursts;
}

/// Maximum over spans [t_i, t_i + span) of the share of queries repeating a domain seen
/// earlier in the same span. Missing below `min_queries` events.
inline std::optional<double> repeated_query_ratio(std::span<const DnsEvent> events, Micros span,
                                                  std::size_t min_queries) {
  if (events.size() < min_queries) return std::nullopt;
  double best = 0.0;
  std::unordered_map<std::string_view, int> seen;
  for (std::size_t i = 0; i < events.size(); ++i) {
    seen.clear();
    std::size_t n = 0, repeats = 0;
    for (std::size_t j = i; j < events.size() && events[j].timestamp - events[i].timestamp < span; ++j) {
      ++n;
      if (seen[events[j].etld1]++ > 0) ++repeats;
    }
    best = std::max(best, static_cast<double>(repeats) / static_cast<double>(n));
  }
  return best;
}

/// Median of gaps strictly inside (min_s, max_s); missing below `min_samples` qualifying gaps.
inline std::optional<double> median_iks(std::span<const double> gaps, double min_s, double max_s,
                                        std::size_t min_samples) {
  std::vector<double> q;
  for (double g : gaps)
    if (g > min_s && g < max_s) q.push_back(g);
  if (q.size() < min_samples || q.empty()) return std::nullopt;
  std::sort(q.begin(), q.end());
  std::size_t n = q.size();
  return n % 2 == 1 ? q[n / 2] : (q[n / 2 - 1] + q[n / 2]) / 2.0;
}

inline std::vector<DnsEvent> day_dns_events(std::span<const WindowSummary> today) {
  std::vector<DnsEvent> events;
  for (const auto& w : today) events.insert(events.end(), w.dns_events.begin(), w.dns_events.end());
  std::sort(events.begin(), events.end());
  return events;
}

/// Local clock hours containing at least one active window.
inline std::size_t active_hours(std::span<const WindowSummary> today, const FeatureEngineConfig& cfg,
                                const TimeZone& tz) {
  std::set<int> hours;
  for (const auto& w : today)
    if (is_active(w, cfg)) hours.insert(detail::local_minute(w.window_start, tz) / 60);
  return hours.size();
}

inline C8Features compute_c8(std::span<const WindowSummary> today, const FeatureEngineConfig& cfg,
                             const TimeZone& tz) {
  C8Features f;
  auto events = day_dns_events(today);
  if (auto hours = active_hours(today, cfg, tz); hours > 0)
    f.dns_burst_rate_per_hour =
        static_cast<double>(count_dns_bursts(events, cfg.burst_min_distinct, cfg.burst_span)) / static_cast<double>(hours);
  f.repeated_query_ratio_60m = repeated_query_ratio(events, cfg.repeat_span, cfg.repeat_min_queries);
  std::vector<double> gaps;
  for (const auto& w : today) gaps.insert(gaps.end(), w.small_upstream_gaps.begin(), w.small_upstream_gaps.end());
  f.median_iks_sec = median_iks(gaps, cfg.iks_min_s, cfg.iks_max_s, cfg.iks_min_samples);
  return f;
}

// Feature vectors -----------------------------------------------------------

using FeatureValues = std::map<std::string, std::optional<double>>;

struct DailyFeatureVector {
  std::string user_id;
  Date date;
  FeatureValues values;
  bool valid = false;
  double coverage = 0.0;
  FeatureValues auxiliary;

  std::optional<double> value(const std::string& name) const {
    auto it = values.find(name);
    return it == values.end() ? std::nullopt : it->second;
  }

  bool operator==(const DailyFeatureVector&) const = default;
};

/// Baseline for `feature` (read from the auxiliary map) over valid days in the
/// `days` calendar days before `date`.
inline BaselineWindow baseline_from_history(std::span<const DailyFeatureVector> history, const std::string& user_id,
                                            const std::string& feature, Date date, int days) {
  BaselineWindow b{feature, user_id, {}};
  std::vector<const DailyFeatureVector*> rows;
  for (const auto& v : history) {
    int age = days_between(v.date, date);
    if (v.user_id == user_id && age >= 1 && age <= days && v.valid) rows.push_back(&v);
  }
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return std::chrono::sys_days{a->date} < std::chrono::sys_days{b->date}; });
  for (auto* v : rows)
    if (auto it = v->auxiliary.find(feature); it != v->auxiliary.end() && it->second) b.history.push_back(*it->second);
  return b;
}

/// All implemented features for one (user, date). `history` supplies earlier vectors for baselines.
inline DailyFeatureVector compute_daily_features(const DayInput& in, std::span<const DailyFeatureVector> history,
                                                 const FeatureEngineConfig& cfg, const TimeZone& tz) {
  DailyFeatureVector v;
  v.user_id = in.user_id;
  v.date = in.date;
  auto validity = day_validity(in.today, cfg.validity_threshold, cfg.delta);
  v.valid = validity.valid;
  v.coverage = validity.coverage;
  auto baseline = baseline_from_history(history, in.user_id, feature_names::kNightlyIdleGapMin, in.date, cfg.baseline_days);
  auto c4 = compute_c4(in, baseline, cfg, tz);
  auto c8 = compute_c8(in.today, cfg, tz);
  v.values[feature_names::kWakeAfter0400Min] = c4.wake_after_0400_min;
  v.values[feature_names::kSleepDurationZAbs30d] = c4.sleep_duration_zabs_30d;
  v.values[feature_names::kDaytimeIdleRatio0818] = c4.daytime_idle_ratio_0818;
  v.values[feature_names::kNightDayTrafficRatioBytes] = c4.night_day_traffic_ratio_bytes;
  v.values[feature_names::kDnsBurstRatePerHour] = c8.dns_burst_rate_per_hour;
  v.values[feature_names::kRepeatedQueryRatio60m] = c8.repeated_query_ratio_60m;
  v.values[feature_names::kMedianIksSec] = c8.median_iks_sec;
  v.auxiliary[feature_names::kNightlyIdleGapMin] = c4.nightly_idle_gap_min;
  return v;
}

inline nlohmann::ordered_json to_json(const DailyFeatureVector& v) {
  auto map_json = [](const FeatureValues& m) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, val] : m) j[k] = val ? nlohmann::ordered_json(*val) : nlohmann::ordered_json(nullptr);
    return j;
  };
  nlohmann::ordered_json j;
  j["user_id"] = v.user_id;
  j["date"] = format_date(v.date);
  j["values"] = map_json(v.values);
  j["valid"] = v.valid;
  j["coverage"] = v.coverage;
  j["auxiliary"] = map_json(v.auxiliary);
  return j;
}

inline DailyFeatureVector feature_vector_from_json(const nlohmann::json& j) {
  DailyFeatureVector v;
  v.user_id = j.at("user_id").get<std::string>();
  auto d = parse_date(j.at("date").get<std::string>());
  if (!d) throw RecordFormatError("bad feature vector date");
  v.date = *d;
  auto read_map = [](const nlohmann::json& m, FeatureValues& out) {
    for (auto it = m.begin(); it != m.end(); ++it)
      out[it.key()] = it.value().is_null() ? std::nullopt : std::optional<double>(it.value().get<double>());
  };
  read_map(j.at("values"), v.values);
  v.valid = j.at("valid").get<bool>();
  v.coverage = j.at("coverage").get<double>();
  if (j.contains("auxiliary")) read_map(j["auxiliary"], v.auxiliary);
  return v;
}

}  // namespace carenet
