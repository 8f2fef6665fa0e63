// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 when any fails.

#include <bitset>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "scenario_runner.hpp"

using namespace carenet;
using namespace carenet::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check, double limit_s = 0) {
  auto t0 = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += "; runtime over the " + std::to_string(static_cast<int>(limit_s)) + " s limit";
  }
  if (!o.pass) ++failures;
  std::printf("%s %s: %s [%.3f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

fs::path scratch(const std::string& name) {
  return fs::temp_directory_path() / ("carenet-acceptance-" + name + "-" + std::to_string(::getpid()));
}

// Membership ------------------------------------------------------------------

Outcome membership_suite() {
  struct Case {
    double lo, mid, hi;
    std::vector<std::pair<double, double>> points;  // x -> exact expected membership
  };
  // Published limit triples; expected values written out by hand.
  std::vector<Case> cases{
      {120, 1085, 1085, {{120, 0}, {602.5, 0.5}, {1085, 1}, {1085.5, 0}, {100, 0}, {2000, 0}}},
      {0.25, 0.80, 0.80, {{0.25, 0}, {0.525, 0.5}, {0.80, 1}, {0.81, 0}, {0, 0}}},
      {0.00, 0.08, 0.16, {{0.00, 0}, {0.04, 0.5}, {0.08, 1}, {0.12, 0.5}, {0.16, 0}, {0.2, 0}, {-0.01, 0}}},
      {0.20, 1.00, 1.00, {{0.20, 0}, {0.60, 0.5}, {1.00, 1}, {1.01, 0}, {26.0, 0}}},
      {25, 61, 61, {{25, 0}, {43, 0.5}, {61, 1}, {61.01, 0}, {0, 0}}},
      {0.80, 1.00, 1.00, {{0.80, 0}, {0.90, 0.5}, {1.00, 1}, {0.5, 0}}},
      {0.12, 0.22, 0.22, {{0.12, 0}, {0.17, 0.5}, {0.22, 1}, {0.3, 0}, {0.05, 0}}},
  };
  std::size_t checked = 0;
  double worst = 0;
  for (const auto& c : cases)
    for (auto [x, want] : c.points) {
      auto mu = tri_membership(x, TriangularMF{c.lo, c.mid, c.hi});
      if (!mu) return {false, "missing membership at x=" + fmt(x)};
      worst = std::max(worst, std::abs(*mu - want));
      ++checked;
      if (std::abs(*mu - want) > 1e-12)
        return {false, "mu(" + fmt(x) + "; " + fmt(c.lo) + "," + fmt(c.mid) + "," + fmt(c.hi) + ") = " + fmt(*mu) +
                           ", expected " + fmt(want)};
    }
  // The shipped registry carries exactly these triples.
  std::size_t k = 0;
  auto reg = default_parameters();
  for (const auto& crit : reg.criteria)
    for (const auto& f : crit.components[0].features) {
      if (k >= cases.size() || f.mf.lo != cases[k].lo || f.mf.mid != cases[k].mid || f.mf.hi != cases[k].hi)
        return {false, "shipped limits differ from the published triple for " + f.name};
      ++k;
    }
  return {k == cases.size(), std::to_string(checked) + " points over " + std::to_string(cases.size()) +
                                 " limit triples, max error " + fmt(worst) + " (tol 1e-12)"};
}

// Gate -------------------------------------------------------------------------

Outcome gate_oracle() {
  Date start = *parse_date("2026-01-01");
  std::size_t evaluated = 0;
  auto check = [&](int m, int n, int bits, bool zero_is_missing) -> bool {
    GateConfig g;
    g.window_days = m;
    g.required_days = n;
    std::vector<DailyScore> s;
    for (int i = 0; i < m; ++i) {
      bool one = (bits >> i) & 1;
      std::optional<double> l = one ? 0.9 : (zero_is_missing ? std::nullopt : std::optional<double>(0.1));
      s.push_back({add_days(start, i), l});
    }
    int ones = std::bitset<32>(static_cast<unsigned>(bits)).count();
    int non_missing = zero_is_missing ? ones : m;
    bool want = ones >= n && non_missing >= n;
    Date t = add_days(start, m - 1);
    auto st = gate_at(s, g, t);
    auto series = gate_series(s, g);
    ++evaluated;
    return st.present == want && st.positives == ones && series.back().present == want;
  };
  for (bool missing : {false, true}) {
    for (int bits = 0; bits < (1 << 14); ++bits)
      if (!check(14, 6, bits, missing)) return {false, "M=14 N=6 pattern " + std::to_string(bits)};
    for (int n = 1; n <= 10; ++n)
      for (int bits = 0; bits < (1 << 10); ++bits)
        if (!check(10, n, bits, missing))
          return {false, "M=10 N=" + std::to_string(n) + " pattern " + std::to_string(bits)};
  }
  return {true, std::to_string(evaluated) +
                    " patterns (2^14 at M=14,N=6 and 2^10 x N=1..10 at M=10; zeros as negative and as missing), exact"};
}

Outcome episode_oracle() {
  for (int bits = 0; bits < (1 << 9); ++bits) {
    std::map<int, bool> presence;
    int count = 0;
    for (int k = 1; k <= 9; ++k) {
      presence[k] = (bits >> (k - 1)) & 1;
      count += presence[k];
    }
    bool want = count >= 5 && (presence[1] || presence[2]);
    if (episode(presence) != want) return {false, "presence vector " + std::to_string(bits)};
  }
  return {true, "512 presence vectors, exact"};
}

// Pipeline ---------------------------------------------------------------------

std::map<std::string, ScenarioRun> runs;

Outcome pipeline_vs_ledger() {
  auto t0 = Clock::now();
  std::ostringstream detail;
  bool ok = true;
  for (auto name : {"late-sleeper", "dns-burster", "baseline-quiet"}) {
    auto sc = load_scenario(fs::path(CARENET_SCENARIOS) / (std::string(name) + ".json"));
    if (sc.days != 30) return {false, std::string(name) + " must span 30 days"};
    auto r = run_scenario(sc, scratch(name));
    auto c = check_ledger(r, 1e-9);
    detail << name << " " << c.rows << " rows, " << c.mismatches << " mismatches, max err " << fmt(c.max_abs_error)
           << "; ";
    if (c.mismatches) {
      ok = false;
      detail << "first: " << c.samples.front() << "; ";
    }
    runs.emplace(name, std::move(r));
  }
  double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  detail << "tol 1e-9, total " << fmt(secs) << " s (limit 120 s)";
  return {ok && secs < 120.0, detail.str()};
}

// Independent restatement of the DIRECT formula over the published C4 calibration.
std::optional<double> hand_l4(const std::map<std::string, std::optional<double>>& x) {
  struct Term {
    const char* name;
    double w, lo, mid, hi;
  };
  const Term terms[] = {{"C4_F2_WakeAfter0400Min", 0.65, 120, 1085, 1085},
                        {"C4_F4_SleepDurationZAbs30d", 0.20, 0.25, 0.80, 0.80},
                        {"C4_F7_DaytimeIdleRatio0818", 0.05, 0.00, 0.08, 0.16},
                        {"C4_F8_NightDayTrafficRatioBytes", 0.15, 0.20, 1.00, 1.00}};
  double num = 0, den = 0;
  for (const auto& t : terms) {
    auto it = x.find(t.name);
    if (it == x.end() || !it->second) continue;
    double v = *it->second, mu = 0;
    if (v >= t.lo && v <= t.hi) {
      if (v <= t.mid) mu = t.mid == t.lo ? 1 : (v - t.lo) / (t.mid - t.lo);
      else mu = (t.hi - v) / (t.hi - t.mid);
    }
    num += (t.w / 1.05) * mu;
    den += t.w / 1.05;
  }
  if (den == 0) return std::nullopt;
  return num / den;
}

Outcome late_sleeper_behavior() {
  auto it = runs.find("late-sleeper");
  if (it == runs.end()) return {false, "late-sleeper run unavailable"};
  const auto& r = it->second;
  const std::string user = "resident-a";
  // Ledger values per date (constructed by the generator, not measured).
  std::map<Date, std::map<std::string, std::optional<double>>> ledger;
  for (const auto& row : r.trace.ledger)
    if (row.user_id == user) ledger[row.date][row.feature] = row.expected;

  DataStore store(r.data_dir);
  auto scores = score_features(r.scenario.name, store.all_features(r.scenario.name), default_parameters());
  const auto* series = scores.find(user, 4);
  if (!series || series->size() != ledger.size()) return {false, "likelihood series length mismatch"};

  double worst = 0;
  int at_mid = 0, at_peak = 0;
  std::vector<std::optional<double>> hand;
  for (const auto& d : *series) {
    auto h = hand_l4(ledger.at(d.date));
    hand.push_back(h);
    if (h.has_value() != d.likelihood.has_value()) return {false, "missing-ness differs on " + format_date(d.date)};
    if (h) worst = std::max(worst, std::abs(*h - *d.likelihood));
    auto wake = ledger.at(d.date).at(feature_names::kWakeAfter0400Min);
    if (wake && *wake == 602.5) ++at_mid;
    if (wake && *wake == 1085.0) ++at_peak;
  }
  if (worst > 1e-9) return {false, "max |L4 - hand| = " + fmt(worst) + " exceeds 1e-9"};
  if (at_mid != 15 || at_peak != 15)
    return {false, "wake split " + std::to_string(at_mid) + "/" + std::to_string(at_peak) + ", expected 15/15"};

  // First qualifying day from the hand-computed series: N=6 of the last M=14 days at >= 0.6.
  std::optional<int> first_hand;
  for (int t = 0; t < static_cast<int>(hand.size()) && !first_hand; ++t) {
    int pos = 0, present = 0;
    for (int d = std::max(0, t - 13); d <= t; ++d)
      if (hand[d]) {
        ++present;
        pos += *hand[d] >= 0.6;
      }
    if (pos >= 6 && present >= 6) first_hand = t;
  }
  std::optional<int> first_gate;
  auto gcfg = scores.registry.gate;
  for (int t = 0; t < static_cast<int>(series->size()) && !first_gate; ++t)
    if (gate(*series, gcfg, (*series)[t].date)) first_gate = t;
  // Late wakes fall on odd day indices, so the sixth one is day 11.
  bool ok = first_hand && first_gate && *first_hand == *first_gate && *first_gate == 11;
  return {ok, "30 days, max |L4 - hand| " + fmt(worst) + " (tol 1e-9); wake at midpoint 15 days, at peak 15 days; "
                  "first gate day index " + (first_gate ? std::to_string(*first_gate) : "none") + ", derived " +
                  (first_hand ? std::to_string(*first_hand) : "none") + ", expected 11"};
}

Outcome determinism() {
  auto sc = load_scenario(fs::path(CARENET_SCENARIOS) / "late-sleeper.json");
  auto a = run_scenario(sc, scratch("det-a"));
  auto b = run_scenario(sc, scratch("det-b"));
  auto fa = artifact_bytes(a.data_dir), fb = artifact_bytes(b.data_dir);
  std::size_t differing = 0;
  for (const auto& [path, bytes] : fa)
    if (auto it = fb.find(path); it == fb.end() || it->second != bytes) ++differing;
  fs::remove_all(a.data_dir);
  fs::remove_all(b.data_dir);
  return {differing == 0 && fa.size() == fb.size(),
          std::to_string(fa.size()) + " artifacts compared (run records excluded), " + std::to_string(differing) +
              " differ"};
}

Outcome gauge_harness() {
  // The published gauge values need an external 40-day capture that is not bundled, so they
  // are not targets here. This checks the harness (`carenet score`) computes plain means.
  auto it = runs.find("dns-burster");
  if (it == runs.end()) return {false, "dns-burster run unavailable"};
  DataStore store(it->second.data_dir);
  auto scores = score_features("dns-burster", store.all_features("dns-burster"), default_parameters());
  auto g = gauges(scores, "resident-b");
  for (int k : {4, 8}) {
    double sum = 0;
    int n = 0;
    for (const auto& d : *scores.find("resident-b", k))
      if (d.likelihood) {
        sum += *d.likelihood;
        ++n;
      }
    if (!g[k] || std::abs(*g[k] - sum / n) > 1e-12) return {false, "gauge mean mismatch for criterion " + std::to_string(k)};
  }
  return {true, "informational: reported C4=0.655 / C8=0.622 require the external 40-day dataset (not bundled, "
                "not a target); gauge harness verified on synthetic data (C4 " + fmt(*g[4]) + ", C8 " + fmt(*g[8]) + ")"};
}

Outcome config_normalization() {
  auto loaded = load_parameters(default_parameters_document());
  bool warned = false;
  for (const auto& w : loaded.warnings)
    warned |= w.path == "criteria[0].components[0].features" && w.message.find("1.05") != std::string::npos;
  if (!warned) return {false, "no normalization warning for the C4 weight sum"};
  const double raw[] = {0.65, 0.20, 0.05, 0.15};
  const auto& f = loaded.registry.criterion(4)->components[0].features;
  double worst = 0;
  for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(f[i].weight - raw[i] / 1.05));
  return {worst <= 1e-12, "warning raised; normalized weights {0.65,0.20,0.05,0.15}/1.05, max error " + fmt(worst) +
                              " (tol 1e-12)"};
}

}  // namespace

int main() {
  report("membership-suite", membership_suite, 1);
  report("gate-oracle", gate_oracle, 10);
  report("episode-oracle", episode_oracle, 1);
  report("pipeline-vs-ledger", pipeline_vs_ledger);
  report("late-sleeper-end-to-end", late_sleeper_behavior);
  report("determinism", determinism);
  report("reported-gauges-caveat", gauge_harness);
  report("config-normalization", config_normalization);
  for (const auto& [_, r] : runs) fs::remove_all(r.data_dir);
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
