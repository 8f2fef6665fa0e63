#pragma once

#include <algorithm>
#include <bitset>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carenet/features.hpp"
#include "carenet/time.hpp"

namespace carenet {

/// Triangular membership with limits (lo, mid, hi). Shoulders (lo == mid or mid == hi) are
/// allowed; a fully degenerate lo == hi is not.
struct TriangularMF {
  double lo = 0.0;
  double mid = 0.0;
  double hi = 0.0;
  bool inverted = false;

  bool valid() const {
    return std::isfinite(lo) && std::isfinite(mid) && std::isfinite(hi) && lo <= mid && mid <= hi && lo < hi;
  }

  bool operator==(const TriangularMF&) const = default;
};

/// Piecewise-linear evidence in [0, 1]. At x == mid the ascending branch wins, so a right
/// shoulder (mid == hi) peaks at hi and drops to 0 beyond it. Missing for non-finite x.
inline std::optional<double> tri_membership(double x, const TriangularMF& mf) {
  if (!std::isfinite(x)) return std::nullopt;
  double mu = 0.0;
  if (x < mf.lo) {
    mu = 0.0;
  } else if (x == mf.lo) {
    mu = mf.lo == mf.mid ? 1.0 : 0.0;
  } else if (x <= mf.mid) {
    mu = (x - mf.lo) / (mf.mid - mf.lo);
  } else if (x < mf.hi) {
    mu = (mf.hi - x) / (mf.hi - mf.mid);
  } else {
    mu = 0.0;
  }
  return mf.inverted ? 1.0 - mu : mu;
}

enum class Sign : int { Pro = 1, Contra = -1 };

struct FeatureSpec {
  std::string name;
  double weight = 1.0;      // normalized within the component
  double raw_weight = 1.0;  // as written in the parameter document
  Sign sign = Sign::Pro;
  TriangularMF mf;
  std::string comment;

  bool operator==(const FeatureSpec&) const = default;
};

struct ComponentSpec {
  std::string name;
  std::vector<FeatureSpec> features;
  double v_weight = 1.0;  // normalized within the criterion
  double raw_v_weight = 1.0;

  bool operator==(const ComponentSpec&) const = default;
};

enum class AggregationMode { Direct, Signed };

struct CriterionConfig {
  int criterion_id = 0;
  std::string label;
  AggregationMode mode = AggregationMode::Direct;
  std::vector<ComponentSpec> components;
  bool core = false;
  std::string comment;

  bool operator==(const CriterionConfig&) const = default;
};

struct GateConfig {
  int window_days = 14;    // M
  int required_days = 6;   // N
  double theta = 0.6;
  int tau = 1;
  double validity_threshold = 0.5;

  bool operator==(const GateConfig&) const = default;
};

using Memberships = std::map<std::string, std::optional<double>>;

inline double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

/// Clipped signed sum over present memberships, weights renormalized over present features.
inline std::optional<double> component_evidence(const Memberships& memberships, const ComponentSpec& spec) {
  double weight_sum = 0.0, acc = 0.0;
  for (const auto& f : spec.features) {
    auto it = memberships.find(f.name);
    if (it == memberships.end() || !it->second) continue;
    weight_sum += f.weight;
    acc += f.weight * static_cast<int>(f.sign) * *it->second;
  }
  if (weight_sum <= 0.0) return std::nullopt;
  return clip(acc / weight_sum, -1.0, 1.0);
}

inline Memberships memberships_for(const DailyFeatureVector& day, const CriterionConfig& config) {
  Memberships out;
  for (const auto& c : config.components)
    for (const auto& f : c.features) {
      auto x = day.value(f.name);
      out[f.name] = x ? tri_membership(*x, f.mf) : std::nullopt;
    }
  return out;
}

/// Per-feature view used by reports and the HTTP API.
struct LikelihoodBreakdown {
  std::optional<double> likelihood;
  Memberships memberships;
  std::map<std::string, std::optional<double>> components;
};

inline LikelihoodBreakdown explain_likelihood(const DailyFeatureVector& day, const CriterionConfig& config,
                                              const GateConfig& gate) {
  LikelihoodBreakdown out;
  out.memberships = memberships_for(day, config);
  for (const auto& c : config.components) out.components[c.name] = component_evidence(out.memberships, c);
  // Validity is re-derived from coverage so a config change never needs new features.
  bool valid = day.coverage >= gate.validity_threshold;
  int present = 0;
  for (const auto& [_, mu] : out.memberships)
    if (mu) ++present;
  if (!valid || present < gate.tau) return out;

  if (config.mode == AggregationMode::Direct) {
    // Plain weighted sum over the single component, renormalized over present features.
    const auto& comp = config.components.front();
    double weight_sum = 0.0, acc = 0.0;
    for (const auto& f : comp.features)
      if (auto mu = out.memberships[f.name]) {
        weight_sum += f.weight;
        acc += f.weight * *mu;
      }
    if (weight_sum > 0.0) out.likelihood = clip(acc / weight_sum, 0.0, 1.0);
    return out;
  }

  double v_sum = 0.0, acc = 0.0;
  for (const auto& c : config.components)
    if (auto s = out.components[c.name]) {
      v_sum += c.v_weight;
      acc += c.v_weight * 0.5 * (*s + 1.0);
    }
  if (v_sum > 0.0) out.likelihood = clip(acc / v_sum, 0.0, 1.0);
  return out;
}

/// Daily criterion likelihood in [0, 1]; missing for invalid days or fewer than tau features.
inline std::optional<double> criterion_likelihood(const DailyFeatureVector& day, const CriterionConfig& config,
                                                  const GateConfig& gate) {
  return explain_likelihood(day, config, gate).likelihood;
}

// Gate ----------------------------------------------------------------------

struct DailyScore {
  Date date;
  std::optional<double> likelihood;
};

struct GateState {
  Date date;
  bool present = false;
  int positives = 0;
  int non_missing = 0;
};

/// Presence for every calendar day from the first to the last scored date, maintained with an
/// incremental sliding window of width M. Days absent from `series` count as missing.
inline std::vector<GateState> gate_series(std::span<const DailyScore> series, const GateConfig& cfg) {
  std::vector<GateState> out;
  if (series.empty()) return out;
  std::map<int, std::optional<double>> by_day;
  auto epoch = std::chrono::sys_days{series.front().date};
  for (const auto& s : series) by_day[static_cast<int>((std::chrono::sys_days{s.date} - epoch).count())] = s.likelihood;
  int first = by_day.begin()->first, last = by_day.rbegin()->first;

  auto positive = [&](int day) {
    auto it = by_day.find(day);
    return it != by_day.end() && it->second && *it->second >= cfg.theta;
  };
  auto present_day = [&](int day) {
    auto it = by_day.find(day);
    return it != by_day.end() && it->second.has_value();
  };

  int positives = 0, non_missing = 0;
  for (int day = first; day <= last; ++day) {
    positives += positive(day);
    non_missing += present_day(day);
    int leaving = day - cfg.window_days;
    if (leaving >= first) {
      positives -= positive(leaving);
      non_missing -= present_day(leaving);
    }
    GateState st;
    st.date = Date{epoch + std::chrono::days{day}};
    st.positives = positives;
    st.non_missing = non_missing;
    st.present = non_missing >= cfg.required_days && positives >= cfg.required_days;
    out.push_back(st);
  }
  return out;
}

/// Presence at date t using the last M calendar days ending at t.
inline GateState gate_at(std::span<const DailyScore> series, const GateConfig& cfg, Date t) {
  std::vector<DailyScore> window;
  auto lo = std::chrono::sys_days{t} - std::chrono::days{cfg.window_days - 1};
  for (const auto& s : series) {
    auto d = std::chrono::sys_days{s.date};
    if (d >= lo && d <= std::chrono::sys_days{t}) window.push_back(s);
  }
  // Anchor the window at t so the sliding pass ends exactly there.
  window.push_back({t, std::nullopt});
  std::stable_sort(window.begin(), window.end(),
                   [](const auto& a, const auto& b) { return std::chrono::sys_days{a.date} < std::chrono::sys_days{b.date}; });
  // Keep the real score when t itself was scored.
  std::vector<DailyScore> dedup;
  for (const auto& s : window) {
    if (!dedup.empty() && dedup.back().date == s.date) {
      if (!dedup.back().likelihood) dedup.back().likelihood = s.likelihood;
      continue;
    }
    dedup.push_back(s);
  }
  auto states = gate_series(dedup, cfg);
  return states.back();
}

inline bool gate(std::span<const DailyScore> series, const GateConfig& cfg, Date t) {
  return gate_at(series, cfg, t).present;
}

// Episode -------------------------------------------------------------------

inline constexpr int kCriteriaCount = 9;

/// >= 5 of the 9 criteria present, including criterion 1 or 2.
inline bool episode(const std::map<int, bool>& presence) {
  std::bitset<kCriteriaCount> bits;
  for (const auto& [k, present] : presence)
    if (k >= 1 && k <= kCriteriaCount && present) bits.set(static_cast<std::size_t>(k - 1));
  return bits.count() >= 5 && (bits.test(0) || bits.test(1));
}

}  // namespace carenet
