#include <gtest/gtest.h>

#include <random>

#include "carenet/features.hpp"

using namespace carenet;
using namespace std::chrono;

namespace {

const TimeZone kUtc = TimeZone::utc();
const Date kDay = *parse_date("2026-03-10");

Timestamp at(Date d, int hh, int mm, int ss = 0) { return kUtc.at(d, hours{hh} + minutes{mm} + seconds{ss}); }

WindowSummary window(Timestamp start, std::uint64_t packets, std::uint64_t up = 0, std::uint64_t down = 0) {
  WindowSummary w;
  w.window_start = start;
  w.user_id = "u";
  w.packet_count = packets;
  w.byte_count_up = up;
  w.byte_count_down = down;
  if (packets) w.first_seen = w.last_seen = start + seconds{30};
  return w;
}

/// Active windows covering [from, to) on the 5-minute grid.
void fill(std::vector<WindowSummary>& out, Timestamp from, Timestamp to, std::uint64_t packets = 12) {
  for (auto t = from; t < to; t += minutes{5}) out.push_back(window(t, packets, 100, 100));
}

std::vector<DnsEvent> events_from(const std::vector<std::pair<double, std::string>>& v) {
  std::vector<DnsEvent> out;
  for (auto& [s, d] : v) out.push_back({from_epoch_micros(static_cast<std::int64_t>(s * 1e6)), d});
  return out;
}

// Exhaustive maximum number of disjoint index runs [i, j] with >= k distinct domains inside `span`.
std::size_t burst_oracle(const std::vector<DnsEvent>& ev, std::size_t k, Micros span) {
  std::vector<std::size_t> best(ev.size() + 1, 0);
  for (std::size_t i = ev.size(); i-- > 0;) {
    best[i] = best[i + 1];
    std::set<std::string> seen;
    for (std::size_t j = i; j < ev.size() && ev[j].timestamp - ev[i].timestamp <= span; ++j) {
      seen.insert(ev[j].etld1);
      if (seen.size() >= k) best[i] = std::max(best[i], 1 + best[j + 1]);
    }
  }
  return best[0];
}

}  // namespace

TEST(Sessions, SplitOnGapsAboveThreshold) {
  std::vector<Timestamp> ts{from_epoch_micros(0), from_epoch_micros(300'000'000), from_epoch_micros(600'000'001)};
  auto s = sessions_from_timestamps(ts, seconds{300});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].end, ts[1]);
  EXPECT_EQ(s[1].start, ts[2]);
}

TEST(Baseline, SampleStddevAndEdgeCases) {
  BaselineWindow b{"f", "u", {1, 2, 3, 4, 5, 6, 7}};
  EXPECT_DOUBLE_EQ(b.mean(), 4.0);
  EXPECT_NEAR(b.stddev(), std::sqrt(28.0 / 6.0), 1e-12);
  EXPECT_NEAR(*rolling_z(8.0, b), 4.0 / std::sqrt(28.0 / 6.0), 1e-12);
  BaselineWindow flat{"f", "u", std::vector<double>(7, 3.0)};
  EXPECT_EQ(rolling_z(10.0, flat), 0.0);
  BaselineWindow short_b{"f", "u", {1, 2, 3, 4, 5, 6}};
  EXPECT_FALSE(rolling_z(1.0, short_b));
}

TEST(Bursts, KnownCases) {
  auto ev = events_from({{0, "a.com"}, {10, "b.com"}, {60, "c.com"}, {61, "d.com"}, {62, "d.com"}, {63, "e.com"}});
  EXPECT_EQ(count_dns_bursts(ev, 3, seconds{60}), 1u);  // {a,b,c} at exactly 60 s; d,d,e has two distinct
  auto tight = events_from({{0, "a.com"}, {1, "a.com"}, {60, "b.com"}, {61, "c.com"}});
  EXPECT_EQ(count_dns_bursts(tight, 3, seconds{60}), 1u);  // a@1, b, c
}

TEST(Bursts, GreedyMatchesExhaustiveOptimum) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 3000; ++trial) {
    std::vector<DnsEvent> ev;
    double t = 0;
    int n = static_cast<int>(rng() % 25);
    for (int i = 0; i < n; ++i) {
      t += static_cast<double>(rng() % 40);
      ev.push_back({from_epoch_micros(static_cast<std::int64_t>(t * 1e6)), std::string(1, char('a' + rng() % 5)) + ".com"});
    }
    std::sort(ev.begin(), ev.end());
    ASSERT_EQ(count_dns_bursts(ev, 3, seconds{60}), burst_oracle(ev, 3, seconds{60})) << "trial " << trial;
  }
}

TEST(RepeatedQueries, HalfOpenSpanAndMinimum) {
  EXPECT_FALSE(repeated_query_ratio(events_from({{0, "a"}, {1, "a"}, {2, "a"}, {3, "a"}}), minutes{60}, 5));
  auto ev = events_from({{0, "a"}, {1, "a"}, {2, "b"}, {3, "a"}, {3600, "a"}});
  // The event at exactly t + 3600 s falls outside the first span.
  EXPECT_NEAR(*repeated_query_ratio(ev, minutes{60}, 5), 2.0 / 4.0, 1e-12);
  auto all_same = events_from({{0, "a"}, {1, "a"}, {2, "a"}, {3, "a"}, {4, "a"}});
  EXPECT_NEAR(*repeated_query_ratio(all_same, minutes{60}, 5), 0.8, 1e-12);
}

TEST(Iks, OpenIntervalAndSampleFloor) {
  std::vector<double> gaps(19, 0.2);
  EXPECT_FALSE(median_iks(gaps, 0.03, 2.0, 20));
  gaps.push_back(0.4);
  EXPECT_NEAR(*median_iks(gaps, 0.03, 2.0, 20), 0.2, 1e-12);
  gaps.push_back(0.03);
  gaps.push_back(2.0);
  EXPECT_NEAR(*median_iks(gaps, 0.03, 2.0, 20), 0.2, 1e-12);
  std::vector<double> even;
  for (int i = 1; i <= 20; ++i) even.push_back(0.01 * i + 0.05);
  EXPECT_NEAR(*median_iks(even, 0.03, 2.0, 20), (0.15 + 0.16) / 2, 1e-12);
}

TEST(DailyFeatures, HandBuiltDay) {
  FeatureEngineConfig cfg;
  std::vector<WindowSummary> prev, today;
  fill(prev, at(prev_day(kDay), 18, 0), at(prev_day(kDay), 23, 30));
  fill(today, at(kDay, 9, 0), at(kDay, 12, 0));      // 36 active windows
  fill(today, at(kDay, 12, 30), at(kDay, 13, 0));    // 6 more, in a second session
  fill(today, at(kDay, 22, 0), at(kDay, 23, 0));     // 12 night windows
  today.push_back(window(at(kDay, 14, 0), 3, 1000, 0));  // not active, but counted for coverage and bytes
  DayInput in{"u", kDay, today, prev};
  auto f = compute_daily_features(in, {}, cfg, kUtc);
  EXPECT_NEAR(*f.value(feature_names::kWakeAfter0400Min), 5 * 60 + 0.5, 1e-9);  // first_seen 09:00:30
  EXPECT_NEAR(*f.auxiliary[feature_names::kNightlyIdleGapMin], 9 * 60 + 30, 1e-9);  // 23:30 to 09:00
  EXPECT_FALSE(f.value(feature_names::kSleepDurationZAbs30d));  // no baseline yet
  EXPECT_NEAR(*f.value(feature_names::kDaytimeIdleRatio0818), (120.0 - 42.0) / 120.0, 1e-12);
  EXPECT_NEAR(*f.value(feature_names::kNightDayTrafficRatioBytes), (12 * 200.0) / (42 * 200.0 + 1000.0), 1e-12);
  EXPECT_NEAR(f.coverage, 55.0 / 288.0, 1e-12);
  EXPECT_FALSE(f.valid);
  EXPECT_FALSE(f.value(feature_names::kMedianIksSec));
  EXPECT_FALSE(f.value(feature_names::kRepeatedQueryRatio60m));
  EXPECT_NEAR(*f.value(feature_names::kDnsBurstRatePerHour), 0.0, 1e-12);
  EXPECT_EQ(feature_vector_from_json(nlohmann::json::parse(to_json(f).dump())), f);
}

TEST(DailyFeatures, WakeIgnoresSessionsBeforeFourAndDaysWithoutActivity) {
  FeatureEngineConfig cfg;
  std::vector<WindowSummary> prev, today;
  fill(today, at(kDay, 1, 0), at(kDay, 3, 0));
  DayInput in{"u", kDay, today, prev};
  EXPECT_FALSE(wake_after_0400_min(in, cfg, kUtc));
  // A session already running at 04:00 does not count as a wake.
  today.clear();
  fill(today, at(kDay, 3, 30), at(kDay, 5, 0));
  fill(today, at(kDay, 7, 0), at(kDay, 8, 0));
  EXPECT_NEAR(*wake_after_0400_min({"u", kDay, today, prev}, cfg, kUtc), 180.5, 1e-9);
}

TEST(DailyFeatures, SleepBaselineUsesValidPriorDaysOnly) {
  std::vector<DailyFeatureVector> hist;
  for (int i = 1; i <= 40; ++i) {
    DailyFeatureVector v;
    v.user_id = "u";
    v.date = add_days(kDay, -i);
    v.valid = i != 3;
    v.auxiliary[feature_names::kNightlyIdleGapMin] = 400.0 + i;
    hist.push_back(v);
  }
  auto b = baseline_from_history(hist, "u", feature_names::kNightlyIdleGapMin, kDay, 30);
  EXPECT_EQ(b.size(), 29u);
  EXPECT_EQ(b.history.front(), 430.0);  // oldest first
  EXPECT_EQ(b.history.back(), 401.0);
}

TEST(DailyFeatures, NamedZoneDstDayKeepsLocalBuckets) {
  auto tz = TimeZone::parse("Europe/Berlin");
  Date d = *parse_date("2026-03-29");
  FeatureEngineConfig cfg;
  std::vector<WindowSummary> today;
  for (auto t = tz.at(d, hours{8}); t < tz.at(d, hours{18}); t += minutes{5}) today.push_back(window(t, 12));
  EXPECT_NEAR(daytime_idle_ratio(today, cfg, tz), 0.0, 1e-12);
  EXPECT_EQ(active_hours(today, cfg, tz), 10u);
}
