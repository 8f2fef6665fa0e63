#pragma once

#include <span>
#include <string_view>

#include "carenet/features.hpp"

namespace carenet {

enum class RiskDirection { Pro, Contra, Both };
enum class Descriptor { HighLevel, LowLevel };  // daily aggregate vs session/burst measure

inline std::string_view to_string(RiskDirection d) {
  switch (d) {
    case RiskDirection::Pro: return "+";
    case RiskDirection::Contra: return "-";
    default: return "both";
  }
}

inline std::string_view to_string(Descriptor d) { return d == Descriptor::HighLevel ? "HLD" : "LLD"; }

/// One slot in the feature taxonomy. `feature` names the extractor output when one exists.
struct CatalogEntry {
  int criterion;
  std::string_view network_feature;
  std::string_view bom;
  RiskDirection direction;
  Descriptor descriptor;
  std::string_view signal_group;
  std::string_view feature;  // empty: slot only, no extractor
};

namespace detail {
using D = RiskDirection;
using L = Descriptor;
inline constexpr CatalogEntry kCatalog[] = {
    {1, "Distinct social domains (eTLD+1)", "Reduced social interaction", D::Contra, L::HighLevel, "Service", ""},
    {1, "Median chat session duration", "Reduced social interaction", D::Contra, L::LowLevel, "Session", ""},
    {1, "Long streaming session duration", "Passive media binge", D::Pro, L::LowLevel, "Session", ""},
    {1, "Down/Up byte ratio", "Passive media binge", D::Pro, L::HighLevel, "Volume", ""},
    {1, "Revisit diversity (Shannon index)", "Rumination loops", D::Contra, L::HighLevel, "Navigation", ""},
    {1, "Short-interval repeated visits", "Rumination loops", D::Pro, L::LowLevel, "Navigation", ""},
    {1, "Hourly traffic coefficient of variation", "Flattened diurnal rhythm", D::Contra, L::HighLevel, "Rhythm", ""},
    {1, "Night/Day traffic ratio", "Flattened diurnal rhythm", D::Pro, L::HighLevel, "Rhythm", ""},
    {2, "Domain diversity (count eTLD+1)", "Interest breadth", D::Contra, L::HighLevel, "Service", ""},
    {2, "Category entropy (topic mix)", "Interest breadth", D::Contra, L::HighLevel, "Service", ""},
    {2, "Chat session count per day", "Engagement", D::Contra, L::HighLevel, "Session", ""},
    {2, "Reply latency", "Engagement", D::Pro, L::LowLevel, "Interaction", ""},
    {2, "Passive/active ratio", "Passivity", D::Pro, L::HighLevel, "Volume", ""},
    {2, "Upload-burst rate per active hour", "Passivity", D::Contra, L::HighLevel, "Interaction", ""},
    {3, "Delivery activity deviation (z-score)", "Ordering activity", D::Both, L::HighLevel, "Service", ""},
    {3, "Late-night delivery share (>23:00)", "Ordering timing", D::Pro, L::HighLevel, "Rhythm", ""},
    {3, "Diet/nutrition domain exposure", "Diet focus", D::Both, L::HighLevel, "Service", ""},
    {4, "Digital sleep onset (min after 22:00)", "Shifted sleep timing", D::Pro, L::HighLevel, "Rhythm", ""},
    {4, "Wake time (min after 04:00)", "Shifted sleep timing", D::Pro, L::HighLevel, "Rhythm",
     "C4_F2_WakeAfter0400Min"},
    {4, "Onset-time variability (14-day circular SD)", "Shifted timing irregularity", D::Pro, L::HighLevel, "Rhythm", ""},
    {4, "Main nightly idle-gap length", "Sleep duration change", D::Both, L::HighLevel, "Rhythm",
     "C4_F4_SleepDurationZAbs30d"},
    {4, "Nocturnal micro-session count", "Sleep fragmentation", D::Pro, L::LowLevel, "Rhythm", ""},
    {4, "Inter-awakening gap (median)", "Sleep fragmentation", D::Contra, L::LowLevel, "Rhythm", ""},
    {4, "Daytime idle ratio (08-18 h)", "Daytime hypersomnia / flattening", D::Pro, L::HighLevel, "Rhythm",
     "C4_F7_DaytimeIdleRatio0818"},
    {4, "Night/Day traffic ratio", "Flattened rhythm", D::Pro, L::HighLevel, "Rhythm",
     "C4_F8_NightDayTrafficRatioBytes"},
    {5, "Wi-Fi re-associations / DHCP renewals", "Restlessness (device churn)", D::Pro, L::LowLevel, "Mgmt", ""},
    {5, "Very short sessions (<15 s) count", "Restlessness (micro-activity)", D::Pro, L::LowLevel, "Session", ""},
    {5, "Median inter-session gap", "Motor slowing vs. agitation", D::Both, L::HighLevel, "Session", ""},
    {6, "Midday idle minutes share", "Low energy", D::Pro, L::HighLevel, "Rhythm", ""},
    {6, "Daytime session count", "Low energy", D::Contra, L::HighLevel, "Session", ""},
    {6, "Sent bytes per active hour", "Effortful interaction", D::Contra, L::HighLevel, "Volume", ""},
    {6, "Upload-burst rate per active hour", "Effortful interaction", D::Contra, L::HighLevel, "Interaction", ""},
    {6, "Inter-click interval (mean/variance)", "Slow browsing tempo", D::Pro, L::LowLevel, "Interaction", ""},
    {7, "Mental-health resource domains (visits)", "Help-seeking / self-worth", D::Pro, L::HighLevel, "Service", ""},
    {7, "Therapist directory domains (visits)", "Help-seeking", D::Pro, L::HighLevel, "Service", ""},
    {8, "Median page dwell time", "Fragmented focus", D::Contra, L::LowLevel, "Navigation", ""},
    {8, "DNS lookup burst rate (tab-hopping)", "Fragmented focus", D::Pro, L::LowLevel, "Navigation",
     "C8_F2_DNSBurstRatePerHour"},
    {8, "Repeated-query ratio (60 min)", "Indecisive search", D::Pro, L::LowLevel, "Navigation",
     "C8_F4_RepeatedQueryRatio60m"},
    {8, "Median inter-keystroke interval", "Fragmented focus", D::Pro, L::LowLevel, "Interaction",
     "C8_F8_MedianIKSsec"},
    {9, "Crisis-line domains (visits)", "Crisis seeking", D::Pro, L::HighLevel, "Service", ""},
    {9, "Self-harm community domains (visits)", "Self-harm exposure", D::Pro, L::HighLevel, "Service", ""},
    {9, "Cloud-backup surge (GB/day)", "Digital affairs / planning", D::Pro, L::HighLevel, "Volume", ""},
};
}  // namespace detail

inline std::span<const CatalogEntry> feature_catalog() { return detail::kCatalog; }

inline nlohmann::ordered_json catalog_json(int criterion) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : feature_catalog()) {
    if (e.criterion != criterion) continue;
    arr.push_back({{"network_feature", e.network_feature},
                   {"bom", e.bom},
                   {"direction", to_string(e.direction)},
                   {"descriptor", to_string(e.descriptor)},
                   {"signal_group", e.signal_group},
                   {"feature", e.feature.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(e.feature)},
                   {"implemented", !e.feature.empty()}});
  }
  return arr;
}

}  // namespace carenet
