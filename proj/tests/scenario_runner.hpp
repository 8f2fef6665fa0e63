#pragma once

// Shared by the pipeline tests and the acceptance binary: generate a scenario, push it
// through the pipeline into a fresh data directory, and compare against the ledger.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "carenet/carenet.hpp"

namespace carenet::testing {

struct ScenarioRun {
  synth::Scenario scenario;
  synth::GeneratedTrace trace;
  std::filesystem::path data_dir;
  PipelineRun run;
};

inline synth::Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario " + path.string());
  return synth::parse_scenario(nlohmann::json::parse(in));
}

inline ScenarioRun run_scenario(const synth::Scenario& sc, const std::filesystem::path& data_dir,
                                const ParameterRegistry& registry = default_parameters()) {
  ScenarioRun out{sc, synth::generate(sc), data_dir, {}};
  std::filesystem::remove_all(data_dir);
  auto w = synth::write_trace(out.trace, data_dir / "capture");
  std::filesystem::copy_file(w.profiles, data_dir / "profiles.json");
  std::filesystem::copy_file(w.mappings, data_dir / "ip_mappings.json");
  DataStore store(data_dir);
  IdentityStore identity(data_dir);
  RunOptions opts;
  opts.dataset = sc.name;
  opts.captures = {w.pcap};
  opts.tz = TimeZone::parse(sc.timezone);
  opts.delta = std::chrono::minutes{sc.delta_min};
  out.run = run_pipeline(store, *identity.snapshot(), PublicSuffixList::load_file(default_psl_path()), registry, opts);
  return out;
}

struct LedgerCheck {
  std::size_t rows = 0;
  std::size_t mismatches = 0;
  double max_abs_error = 0.0;
  std::vector<std::string> samples;  // first few mismatches, for diagnostics
};

inline LedgerCheck check_ledger(const ScenarioRun& r, double tol) {
  LedgerCheck c;
  DataStore store(r.data_dir);
  for (const auto& row : r.trace.ledger) {
    ++c.rows;
    auto v = store.read_features(r.scenario.name, row.user_id, row.date);
    std::optional<double> got;
    if (v) {
      auto it = v->values.find(row.feature);
      if (it != v->values.end()) got = it->second;
      else if (auto a = v->auxiliary.find(row.feature); a != v->auxiliary.end()) got = a->second;
    }
    bool ok = got.has_value() == row.expected.has_value();
    if (ok && got) {
      double err = std::abs(*got - *row.expected);
      c.max_abs_error = std::max(c.max_abs_error, err);
      ok = err <= tol;
    }
    if (!ok) {
      ++c.mismatches;
      if (c.samples.size() < 5)
        c.samples.push_back(row.user_id + " " + format_date(row.date) + " " + row.feature + " expected " +
                            (row.expected ? std::to_string(*row.expected) : "null") + " got " +
                            (got ? std::to_string(*got) : "null"));
    }
  }
  return c;
}

/// Every regular file under `root` except run records, as relative path -> bytes.
inline std::map<std::string, std::string> artifact_bytes(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    auto rel = std::filesystem::relative(e.path(), root).generic_string();
    if (rel.starts_with("runs/")) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[rel] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

}  // namespace carenet::testing
