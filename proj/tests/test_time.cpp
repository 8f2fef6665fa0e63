#include <gtest/gtest.h>

#include "carenet/time.hpp"

using namespace carenet;
using namespace std::chrono;

TEST(Dates, RoundTrip) {
  auto d = parse_date("2026-03-02");
  ASSERT_TRUE(d);
  EXPECT_EQ(format_date(*d), "2026-03-02");
  EXPECT_EQ(format_date_compact(*d), "20260302");
  EXPECT_EQ(parse_date("20260302"), d);
  EXPECT_FALSE(parse_date("2026-02-30"));
  EXPECT_FALSE(parse_date("2026-3-2"));
  EXPECT_EQ(days_between(*d, add_days(*d, 40)), 40);
  EXPECT_EQ(prev_day(next_day(*d)), *d);
}

TEST(Clock, ParsesNextDayHoursOnlyWhenAllowed) {
  EXPECT_EQ(parse_clock("14:02:30")->seconds, 14 * 3600 + 2 * 60 + 30);
  EXPECT_EQ(parse_clock("07:15")->seconds, 7 * 3600 + 15 * 60);
  EXPECT_FALSE(parse_clock("27:00"));
  EXPECT_EQ(parse_clock("27:00", true)->seconds, 27 * 3600);
  EXPECT_FALSE(parse_clock("48:00", true));
  EXPECT_FALSE(parse_clock("12:60"));
  EXPECT_EQ(format_clock(*parse_clock("09:05:07")), "09:05:07");
}

TEST(Iso, RoundTripWithOffset) {
  auto t = parse_iso("2026-03-02T10:00:00+02:00");
  ASSERT_TRUE(t);
  EXPECT_EQ(*t, parse_iso("2026-03-02T08:00:00Z"));
  EXPECT_EQ(parse_iso(format_iso(*t)), t);
  EXPECT_FALSE(parse_iso("yesterday"));
}

TEST(TimeZoneTest, FixedOffset) {
  auto tz = TimeZone::parse("+02:00");
  auto t = parse_iso("2026-06-01T22:30:00Z").value();
  EXPECT_EQ(format_date(tz.local_date(t)), "2026-06-02");
  EXPECT_EQ(tz.micros_of_day(t), 30 * kMicrosPerMinute);
  EXPECT_EQ(tz.at(*parse_date("2026-06-02"), minutes{30}), t);
  EXPECT_EQ(TimeZone::parse("-05:30").offset_at(t), seconds{-(5 * 3600 + 30 * 60)});
  EXPECT_THROW(TimeZone::parse("+25:00"), TimeZoneError);
  EXPECT_THROW(TimeZone::parse("Mars/Olympus"), TimeZoneError);
}

TEST(TimeZoneTest, NamedZoneFollowsDst) {
  auto tz = TimeZone::parse("Europe/Berlin");
  EXPECT_EQ(tz.offset_at(parse_iso("2026-01-15T12:00:00Z").value()), hours{1});
  EXPECT_EQ(tz.offset_at(parse_iso("2026-07-15T12:00:00Z").value()), hours{2});
  // 2026-03-29: clocks jump from 02:00 to 03:00, so the day is 23 hours long.
  auto d = *parse_date("2026-03-29");
  EXPECT_EQ(tz.midnight(next_day(d)) - tz.midnight(d), hours{23});
  EXPECT_EQ(tz.at(d, hours{4}), parse_iso("2026-03-29T02:00:00Z").value());
}

TEST(TimeZoneTest, LocalRoundTripProperty) {
  auto tz = TimeZone::parse("America/New_York");
  auto base = parse_iso("2026-01-01T00:00:00Z").value();
  for (int i = 0; i < 400; ++i) {
    auto t = base + hours{i * 23} + minutes{i % 60};
    EXPECT_EQ(tz.from_local(tz.to_local(t)), t) << format_iso(t);
    auto d = tz.local_date(t);
    EXPECT_LE(tz.midnight(d), t);
    EXPECT_GT(tz.midnight(next_day(d)), t);
  }
}
