#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carenet/fasl.hpp"
#include "carenet/features.hpp"
#include "carenet/identity.hpp"
#include "carenet/parameters.hpp"
#include "carenet/partition.hpp"
#include "carenet/pcap_reader.hpp"
#include "carenet/psl.hpp"
#include "carenet/window.hpp"

namespace carenet {

class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& msg)
      : std::runtime_error(stage + ": " + msg), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Recorded at ingest so later stages agree on day boundaries.
struct DatasetMeta {
  std::string timezone = "UTC";
  int delta_min = 5;
};

inline bool valid_dataset_name(std::string_view ds) {
  if (ds.empty() || ds.size() > 64 || ds.find("__") != std::string_view::npos) return false;
  for (char c : ds)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') return false;
  return ds != "." && ds != "..";
}

/// Plain-file layout under one data directory.
class DataStore {
 public:
  explicit DataStore(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path processed_dir(const std::string& ds) const { return root_ / "processed" / ds; }
  std::filesystem::path summaries_dir(const std::string& ds) const { return root_ / "summaries" / ds; }
  std::filesystem::path features_dir(const std::string& ds) const { return root_ / "features" / ds; }
  std::filesystem::path scores_dir(const std::string& ds, const std::string& hash) const {
    return root_ / "scores" / ds / hash;
  }
  std::filesystem::path runs_dir(const std::string& ds) const { return root_ / "runs" / ds; }
  std::filesystem::path parameters_path() const { return root_ / "parameters.json"; }
  std::filesystem::path meta_path(const std::string& ds) const { return root_ / "meta" / (ds + ".json"); }
  std::filesystem::path feature_path(const std::string& ds, const std::string& user, Date d) const {
    return features_dir(ds) / user / (format_date(d) + ".json");
  }

  std::vector<std::string> datasets() const {
    std::vector<std::string> out;
    for (const auto* sub : {"summaries", "features"}) {
      std::error_code ec;
      for (const auto& e : std::filesystem::directory_iterator(root_ / sub, ec))
        if (e.is_directory()) out.push_back(e.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  DatasetMeta read_meta(const std::string& ds) const {
    DatasetMeta m;
    if (auto doc = detail::read_json_file(meta_path(ds))) {
      m.timezone = doc->value("timezone", m.timezone);
      m.delta_min = doc->value("delta_min", m.delta_min);
    }
    return m;
  }

  void write_meta(const std::string& ds, const DatasetMeta& m) const {
    nlohmann::ordered_json j{{"dataset", ds}, {"timezone", m.timezone}, {"delta_min", m.delta_min}};
    detail::write_file_atomic(meta_path(ds), j.dump(2) + "\n");
  }

  std::vector<std::filesystem::path> partition_files(const std::string& ds) const {
    return sorted_files(processed_dir(ds), ".jsonl");
  }

  std::vector<Date> summary_dates(const std::string& ds) const {
    std::vector<Date> out;
    for (const auto& p : sorted_files(summaries_dir(ds), ".jsonl"))
      if (auto d = parse_date(p.stem().string())) out.push_back(*d);
    return out;
  }

  std::vector<WindowSummary> read_summaries(const std::string& ds, Date d) const {
    auto p = summaries_dir(ds) / (format_date(d) + ".jsonl");
    if (!std::filesystem::exists(p)) return {};
    return read_summary_file(p);
  }

  void write_features(const std::string& ds, const DailyFeatureVector& v) const {
    detail::write_file_atomic(feature_path(ds, v.user_id, v.date), to_json(v).dump(2) + "\n");
  }

  std::optional<DailyFeatureVector> read_features(const std::string& ds, const std::string& user, Date d) const {
    auto doc = detail::read_json_file(feature_path(ds, user, d));
    if (!doc) return std::nullopt;
    return feature_vector_from_json(*doc);
  }

  /// Every stored vector, ordered by (user, date).
  std::vector<DailyFeatureVector> all_features(const std::string& ds) const {
    std::vector<DailyFeatureVector> out;
    std::error_code ec;
    std::vector<std::filesystem::path> users;
    for (const auto& e : std::filesystem::directory_iterator(features_dir(ds), ec))
      if (e.is_directory()) users.push_back(e.path());
    std::sort(users.begin(), users.end());
    for (const auto& u : users)
      for (const auto& f : sorted_files(u, ".json"))
        if (auto doc = detail::read_json_file(f)) out.push_back(feature_vector_from_json(*doc));
    return out;
  }

  /// Parameter registry in effect; the shipped defaults when none was saved.
  LoadedParameters load_parameters_file() const {
    auto doc = detail::read_json_file(parameters_path());
    return load_parameters(doc ? nlohmann::json(*doc) : nlohmann::json(default_parameters_document()));
  }

  void save_parameters(const ParameterRegistry& p) const {
    detail::write_file_atomic(parameters_path(), to_document(p).dump(2) + "\n");
  }

 private:
  static std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir, std::string_view ext) {
    std::vector<std::filesystem::path> out;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(dir, ec))
      if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  }

  std::filesystem::path root_;
};

// Stages ---------------------------------------------------------------------

struct IngestOptions {
  std::string dataset;
  TimeZone tz;
  std::chrono::minutes delta{5};
  CaptureOptions capture;
};

struct IngestReport {
  CaptureStats stats;
  std::size_t records = 0;
  std::size_t partitions = 0;
  std::uint64_t rejected = 0;
};

/// Parses the captures together and (re)writes the partition files they cover.
inline IngestReport ingest(const DataStore& store, const std::vector<std::filesystem::path>& captures,
                           const IngestOptions& opts) {
  if (!valid_dataset_name(opts.dataset)) throw PipelineError("ingest", "invalid dataset name '" + opts.dataset + "'");
  IngestReport rep;
  std::vector<PacketRecord> records;
  for (const auto& path : captures) {
    CaptureStats st;
    auto recs = parse_capture_file(path.string(), &st, opts.capture);
    rep.stats.frames += st.frames;
    rep.stats.ip_packets += st.ip_packets;
    rep.stats.non_ip_skipped += st.non_ip_skipped;
    rep.stats.malformed += st.malformed;
    for (auto& w : st.warnings) rep.stats.warnings.push_back(path.filename().string() + ": " + w);
    records.insert(records.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  auto parts = partition(records, {opts.dataset, opts.delta, opts.tz});
  rep.records = records.size();
  rep.rejected = parts.rejected;
  rep.partitions = parts.files.size();
  for (const auto& [stem, recs] : parts.files)
    detail::write_file_atomic(store.processed_dir(opts.dataset) / (stem + ".jsonl"), to_jsonl(recs));
  store.write_meta(opts.dataset, {opts.tz.name(), static_cast<int>(opts.delta.count())});
  return rep;
}

struct SummarizeReport {
  std::size_t partitions = 0;
  std::size_t windows = 0;
  std::size_t dates = 0;
};

/// Rebuilds all window summaries of a dataset from its partitions, plus the passive device inventory.
inline SummarizeReport summarize(const DataStore& store, const std::string& ds, const IdentityRegistry& identity,
                                 const PublicSuffixList& psl, const TimeZone& tz, const SummarizeOptions& opts = {}) {
  SummarizeReport rep;
  std::map<std::string, std::vector<WindowSummary>> by_date;  // YYYY-MM-DD sorts chronologically
  std::map<std::string, std::set<IpAddress>> inventory;
  for (const auto& path : store.partition_files(ds)) {
    auto name = parse_partition_stem(path.stem().string());
    if (!name || name->dataset != ds) continue;
    auto records = read_partition_file(path);
    if (records.empty()) continue;
    ++rep.partitions;
    Timestamp start = tz.at(name->date, std::chrono::minutes{name->minute_of_day});
    auto date = format_date(name->date);
    auto windows = summarize_window(records, start, identity, psl, opts);
    rep.windows += windows.size();
    auto& bucket = by_date[date];
    bucket.insert(bucket.end(), std::make_move_iterator(windows.begin()), std::make_move_iterator(windows.end()));
    for (const auto& a : observed_local_addresses(records, opts.local_prefixes)) inventory[date].insert(a);
  }
  std::error_code ec;
  std::filesystem::remove_all(store.summaries_dir(ds), ec);
  nlohmann::ordered_json inv = nlohmann::ordered_json::object();
  for (auto& [date, windows] : by_date) {
    std::stable_sort(windows.begin(), windows.end(), [](const auto& a, const auto& b) {
      return std::tie(a.window_start, a.user_id) < std::tie(b.window_start, b.user_id);
    });
    std::string body;
    for (const auto& w : windows) body += to_json(w).dump() + "\n";
    detail::write_file_atomic(store.summaries_dir(ds) / (date + ".jsonl"), body);
    auto arr = nlohmann::ordered_json::array();
    for (const auto& a : inventory[date]) arr.push_back(a.to_string());
    inv[date] = std::move(arr);
  }
  if (!by_date.empty()) detail::write_file_atomic(store.summaries_dir(ds) / "inventory.json", inv.dump(2) + "\n");
  rep.dates = by_date.size();
  return rep;
}

struct DateRange {
  std::optional<Date> from;
  std::optional<Date> to;
};

struct FeatureReport {
  std::size_t days = 0;
  std::size_t vectors = 0;
  std::optional<Date> from, to;
};

/// Computes features in date order so each day's baseline sees the days before it.
inline FeatureReport compute_features(const DataStore& store, const std::string& ds, DateRange range,
                                      const FeatureEngineConfig& cfg, const TimeZone& tz) {
  FeatureReport rep;
  auto dates = store.summary_dates(ds);
  if (dates.empty()) return rep;
  Date from = range.from.value_or(dates.front());
  Date to = range.to.value_or(dates.back());
  if (days_between(from, to) < 0) return rep;
  rep.from = from;
  rep.to = to;

  std::vector<DailyFeatureVector> history;
  for (const auto& v : store.all_features(ds)) {
    int age = days_between(v.date, from);
    if (age >= 1 && age <= cfg.baseline_days) history.push_back(v);
  }

  auto previous = store.read_summaries(ds, prev_day(from));
  for (Date d = from; days_between(d, to) >= 0; d = next_day(d)) {
    auto today = store.read_summaries(ds, d);
    ++rep.days;
    std::set<std::string> users;
    for (const auto& w : today) users.insert(w.user_id);
    for (const auto& user : users) {
      std::vector<WindowSummary> mine, before;
      for (const auto& w : today)
        if (w.user_id == user) mine.push_back(w);
      for (const auto& w : previous)
        if (w.user_id == user) before.push_back(w);
      DayInput in{user, d, mine, before};
      auto v = compute_daily_features(in, history, cfg, tz);
      store.write_features(ds, v);
      history.push_back(std::move(v));
      ++rep.vectors;
    }
    previous = std::move(today);
  }
  return rep;
}

// Scores -----------------------------------------------------------------------

/// Likelihood series per (user, criterion), derived from stored features and one registry.
struct ScoreSet {
  std::string dataset;
  std::string config_hash;
  ParameterRegistry registry;
  std::map<std::string, std::map<int, std::vector<DailyScore>>> series;
  std::map<std::string, std::map<Date, double>> coverage;

  const std::vector<DailyScore>* find(const std::string& user, int criterion) const {
    auto u = series.find(user);
    if (u == series.end()) return nullptr;
    auto c = u->second.find(criterion);
    return c == u->second.end() ? nullptr : &c->second;
  }
};

inline ScoreSet score_features(const std::string& ds, std::span<const DailyFeatureVector> features,
                               const ParameterRegistry& registry) {
  ScoreSet out;
  out.dataset = ds;
  out.registry = registry;
  out.config_hash = config_hash(registry);
  std::vector<const DailyFeatureVector*> rows;
  for (const auto& v : features) rows.push_back(&v);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) {
    return std::tie(a->user_id, a->date) < std::tie(b->user_id, b->date);
  });
  for (const auto* v : rows) {
    out.coverage[v->user_id][v->date] = v->coverage;
    for (const auto& c : registry.criteria)
      out.series[v->user_id][c.criterion_id].push_back({v->date, criterion_likelihood(*v, c, registry.gate)});
  }
  return out;
}

struct IndicatorSnapshot {
  std::string user_id;
  Date date;
  std::string config_hash;
  struct Criterion {
    int criterion_id = 0;
    std::optional<double> likelihood;
    GateState gate;
    std::optional<double> mean_likelihood;  // over the gate window, non-missing days
  };
  std::vector<Criterion> criteria;
  bool episode = false;
  bool core_active = false;
  int present_count = 0;
};

inline IndicatorSnapshot snapshot(const ScoreSet& scores, const std::string& user, Date as_of) {
  IndicatorSnapshot s;
  s.user_id = user;
  s.date = as_of;
  s.config_hash = scores.config_hash;
  std::map<int, bool> presence;
  const auto& gcfg = scores.registry.gate;
  for (const auto& c : scores.registry.criteria) {
    IndicatorSnapshot::Criterion row;
    row.criterion_id = c.criterion_id;
    row.gate.date = as_of;
    if (const auto* series = scores.find(user, c.criterion_id)) {
      row.gate = gate_at(*series, gcfg, as_of);
      double sum = 0.0;
      int n = 0;
      for (const auto& d : *series) {
        int age = days_between(d.date, as_of);
        if (age == 0) row.likelihood = d.likelihood;
        if (age >= 0 && age < gcfg.window_days && d.likelihood) {
          sum += *d.likelihood;
          ++n;
        }
      }
      if (n > 0) row.mean_likelihood = sum / n;
    }
    presence[c.criterion_id] = row.gate.present;
    s.present_count += row.gate.present;
    s.criteria.push_back(row);
  }
  s.core_active = presence[1] || presence[2];
  s.episode = episode(presence);
  return s;
}

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const IndicatorSnapshot& s) {
  nlohmann::ordered_json j;
  j["user_id"] = s.user_id;
  j["date"] = format_date(s.date);
  j["config_hash"] = s.config_hash;
  j["criteria"] = nlohmann::ordered_json::array();
  for (const auto& c : s.criteria)
    j["criteria"].push_back({{"criterion_id", c.criterion_id},
                             {"likelihood", opt_json(c.likelihood)},
                             {"present", c.gate.present},
                             {"positives", c.gate.positives},
                             {"non_missing", c.gate.non_missing},
                             {"mean_likelihood", opt_json(c.mean_likelihood)}});
  j["present_count"] = s.present_count;
  j["core_active"] = s.core_active;
  j["episode"] = s.episode;
  return j;
}

/// Writes likelihoods, gate states, episodes and the effective registry under the config hash.
inline std::filesystem::path write_scores(const DataStore& store, const ScoreSet& scores) {
  auto dir = store.scores_dir(scores.dataset, scores.config_hash);
  std::string likelihoods, gates, episodes;
  for (const auto& [user, per_criterion] : scores.series) {
    std::map<Date, std::map<int, bool>> presence;
    for (const auto& [k, series] : per_criterion) {
      for (const auto& d : series)
        likelihoods += nlohmann::ordered_json{{"user_id", user},
                                              {"date", format_date(d.date)},
                                              {"criterion_id", k},
                                              {"likelihood", opt_json(d.likelihood)},
                                              {"coverage", scores.coverage.at(user).at(d.date)}}
                           .dump() +
                       "\n";
      for (const auto& g : gate_series(series, scores.registry.gate)) {
        presence[g.date][k] = g.present;
        gates += nlohmann::ordered_json{{"user_id", user},
                                        {"date", format_date(g.date)},
                                        {"criterion_id", k},
                                        {"present", g.present},
                                        {"positives", g.positives},
                                        {"non_missing", g.non_missing}}
                     .dump() +
                 "\n";
      }
    }
    for (const auto& [date, p] : presence) {
      auto present = nlohmann::ordered_json::array();
      for (const auto& [k, on] : p)
        if (on) present.push_back(k);
      episodes += nlohmann::ordered_json{{"user_id", user},
                                         {"date", format_date(date)},
                                         {"present_criteria", present},
                                         {"core_active", (p.contains(1) && p.at(1)) || (p.contains(2) && p.at(2))},
                                         {"episode", episode(p)}}
                      .dump() +
                  "\n";
    }
  }
  detail::write_file_atomic(dir / "likelihoods.jsonl", likelihoods);
  detail::write_file_atomic(dir / "gates.jsonl", gates);
  detail::write_file_atomic(dir / "episodes.jsonl", episodes);
  auto params = to_document(scores.registry);
  params["config_hash"] = scores.config_hash;
  detail::write_file_atomic(dir / "parameters.json", params.dump(2) + "\n");
  return dir;
}

/// Mean likelihood per criterion over all non-missing days of one user (the gauge ranking).
inline std::map<int, std::optional<double>> gauges(const ScoreSet& scores, const std::string& user,
                                                   DateRange range = {}) {
  std::map<int, std::optional<double>> out;
  for (const auto& c : scores.registry.criteria) {
    double sum = 0.0;
    int n = 0;
    if (const auto* series = scores.find(user, c.criterion_id))
      for (const auto& d : *series) {
        if (range.from && days_between(*range.from, d.date) < 0) continue;
        if (range.to && days_between(d.date, *range.to) < 0) continue;
        if (d.likelihood) {
          sum += *d.likelihood;
          ++n;
        }
      }
    out[c.criterion_id] = n > 0 ? std::optional<double>(sum / n) : std::nullopt;
  }
  return out;
}

// Orchestration ----------------------------------------------------------------

struct RunOptions {
  std::string dataset;
  std::vector<std::filesystem::path> captures;
  DateRange range;
  std::optional<TimeZone> tz;  // defaults to the dataset's recorded zone
  std::chrono::minutes delta{5};
  CaptureOptions capture;
  FeatureEngineConfig features;
};

struct PipelineRun {
  std::string run_id;
  std::string dataset;
  std::optional<Date> from, to;
  std::string config_hash;
  std::map<std::string, double> timings_ms;
  std::map<std::string, std::uint64_t> counts;
  std::vector<std::string> warnings;
};

inline nlohmann::ordered_json to_json(const PipelineRun& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["dataset"] = r.dataset;
  j["date_range"] = {{"from", r.from ? nlohmann::ordered_json(format_date(*r.from)) : nlohmann::ordered_json(nullptr)},
                     {"to", r.to ? nlohmann::ordered_json(format_date(*r.to)) : nlohmann::ordered_json(nullptr)}};
  j["config_hash"] = r.config_hash;
  j["timings_ms"] = r.timings_ms;
  j["counts"] = r.counts;
  j["warnings"] = r.warnings;
  return j;
}

inline TimeZone dataset_zone(const DataStore& store, const std::string& ds, const std::optional<TimeZone>& override_tz) {
  if (override_tz) return *override_tz;
  return TimeZone::parse(store.read_meta(ds).timezone);
}

/// ingest (when captures are given) -> summarize -> features -> score, recorded under runs/.
inline PipelineRun run_pipeline(const DataStore& store, const IdentityRegistry& identity, const PublicSuffixList& psl,
                                const ParameterRegistry& registry, const RunOptions& opts) {
  using clock = std::chrono::steady_clock;
  PipelineRun run;
  run.dataset = opts.dataset;
  run.config_hash = config_hash(registry);
  if (!valid_dataset_name(opts.dataset)) throw PipelineError("run", "invalid dataset name '" + opts.dataset + "'");
  auto timed = [&](const char* stage, auto&& fn) {
    auto t0 = clock::now();
    try {
      fn();
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError(stage, e.what());
    }
    run.timings_ms[stage] = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  TimeZone tz = opts.tz.value_or(TimeZone::utc());
  if (!opts.captures.empty()) {
    timed("ingest", [&] {
      auto rep = ingest(store, opts.captures, {opts.dataset, tz, opts.delta, opts.capture});
      run.counts["frames"] = rep.stats.frames;
      run.counts["records"] = rep.records;
      run.counts["malformed"] = rep.stats.malformed;
      run.counts["rejected"] = rep.rejected;
      run.counts["partitions"] = rep.partitions;
      run.warnings = rep.stats.warnings;
    });
  } else {
    tz = dataset_zone(store, opts.dataset, opts.tz);
  }
  FeatureEngineConfig fcfg = opts.features;
  fcfg.delta = std::chrono::minutes{store.read_meta(opts.dataset).delta_min};
  timed("summarize", [&] {
    auto rep = summarize(store, opts.dataset, identity, psl, tz);
    run.counts["windows"] = rep.windows;
    run.counts["summary_dates"] = rep.dates;
  });
  timed("features", [&] {
    auto rep = compute_features(store, opts.dataset, opts.range, fcfg, tz);
    run.from = rep.from;
    run.to = rep.to;
    run.counts["feature_days"] = rep.days;
    run.counts["feature_vectors"] = rep.vectors;
  });
  timed("score", [&] {
    auto features = store.all_features(opts.dataset);
    auto scores = score_features(opts.dataset, features, registry);
    write_scores(store, scores);
    run.counts["scored_vectors"] = features.size();
  });

  auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  auto iso = format_iso(Timestamp{std::chrono::duration_cast<Micros>(now.time_since_epoch())});
  std::string stamp;
  for (char c : iso)
    if (std::isdigit(static_cast<unsigned char>(c))) stamp += c;
  run.run_id = stamp + "-" + run.config_hash.substr(0, 8);
  detail::write_file_atomic(store.runs_dir(opts.dataset) / (run.run_id + ".json"), to_json(run).dump(2) + "\n");
  return run;
}

}  // namespace carenet
