// carenet: command-line front end for ingest, features, scoring, gates, simulation and serving.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carenet/carenet.hpp"

namespace {

using carenet::Date;
using Json = nlohmann::ordered_json;

struct Common {
  std::string data_dir;
  std::string config;
  std::string tz;
  std::string format = "json";
  std::string psl;
};

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::optional<Date> date_opt(const std::string& s, const char* flag) {
  if (s.empty()) return std::nullopt;
  auto d = carenet::parse_date(s);
  if (!d) throw CLI::ValidationError(flag, "expected YYYY-MM-DD, got '" + s + "'");
  return d;
}

carenet::LoadedParameters load_registry(const Common& c, const carenet::DataStore& store) {
  if (c.config.empty()) return store.load_parameters_file();
  std::ifstream in(c.config);
  if (!in) throw std::runtime_error("cannot open config " + c.config);
  return carenet::load_parameters(nlohmann::json::parse(in));
}

void report_warnings(const std::vector<carenet::ValidationIssue>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w.path << ": " << w.message << "\n";
}

std::optional<carenet::TimeZone> zone(const Common& c) {
  if (c.tz.empty()) return std::nullopt;
  return carenet::TimeZone::parse(c.tz);
}

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carenet - router-side behavioral indicators from packet headers"};
  app.require_subcommand(1);
  Common c;
  c.data_dir = env_or("CARENET_DATA_DIR", "carenet-data");
  c.tz = env_or("CARENET_TZ", "");
  app.add_option("--data", c.data_dir, "Data directory (env CARENET_DATA_DIR)");
  app.add_option("--config", c.config, "Parameter registry (default: <data>/parameters.json or shipped defaults)");
  app.add_option("--tz", c.tz, "Local time zone: UTC, +HH:MM or an IANA name (env CARENET_TZ)");
  app.add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--psl", c.psl, "Public Suffix List file");

  std::string dataset, from, to, as_of, user, scenario, out_dir, addr = "127.0.0.1:8080", token;
  std::vector<std::string> captures, local_prefixes;
  int delta = 5;
  std::optional<std::uint64_t> seed;

  auto* ingest = app.add_subcommand("ingest", "Parse captures into partitions and window summaries");
  ingest->add_option("captures", captures, "pcap / pcapng files")->required()->check(CLI::ExistingFile);
  ingest->add_option("--dataset", dataset)->required();
  ingest->add_option("--delta", delta, "Window length in minutes")->check(CLI::Range(1, 1440));
  ingest->add_option("--local-prefix", local_prefixes, "Local CIDR (repeatable; default RFC1918 + ULA + link-local)");

  auto* features = app.add_subcommand("features", "Compute daily feature vectors from stored summaries");
  features->add_option("--dataset", dataset)->required();
  features->add_option("--from", from);
  features->add_option("--to", to);

  auto* score = app.add_subcommand("score", "Score stored features; prints mean likelihood per criterion");
  score->add_option("--dataset", dataset)->required();
  score->add_option("--user", user);
  score->add_option("--from", from, "Gauge window start");
  score->add_option("--to", to, "Gauge window end");

  auto* gate = app.add_subcommand("gate", "Gate presence and episode indicators as of a date");
  gate->add_option("--dataset", dataset)->required();
  gate->add_option("--as-of", as_of)->required();
  gate->add_option("--user", user);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic capture with its expected feature ledger");
  simulate->add_option("--scenario", scenario)->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_dir)->required();
  simulate->add_option("--seed", seed);

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--addr", addr, "HOST:PORT");
  serve->add_option("--dataset", dataset, "Default dataset");
  serve->add_option("--token", token, "Bearer token (env CARENET_TOKEN)");

  auto* run = app.add_subcommand("run", "ingest (optional) -> features -> score in one step");
  run->add_option("captures", captures)->check(CLI::ExistingFile);
  run->add_option("--dataset", dataset)->required();
  run->add_option("--from", from);
  run->add_option("--to", to);
  run->add_option("--delta", delta)->check(CLI::Range(1, 1440));

  bool init = false;
  auto* config = app.add_subcommand("config", "Validate and print the effective parameter registry");
  config->add_flag("--init", init, "Write the shipped defaults to <data>/parameters.json");

  CLI11_PARSE(app, argc, argv);

  try {
    carenet::DataStore store(c.data_dir);
    auto psl_path = c.psl.empty() ? carenet::default_psl_path() : c.psl;
    auto load_psl = [&] { return carenet::PublicSuffixList::load_file(psl_path); };
    auto emit = [](const Json& j) { std::cout << j.dump(2) << "\n"; };

    if (*ingest) {
      carenet::CaptureOptions copts;
      if (!local_prefixes.empty()) {
        copts.local_prefixes.clear();
        for (const auto& p : local_prefixes) {
          auto cidr = carenet::Cidr::parse(p);
          if (!cidr) throw CLI::ValidationError("--local-prefix", "invalid CIDR '" + p + "'");
          copts.local_prefixes.push_back(*cidr);
        }
      }
      auto tz = zone(c).value_or(carenet::TimeZone::utc());
      std::vector<std::filesystem::path> paths(captures.begin(), captures.end());
      auto rep = carenet::ingest(store, paths, {dataset, tz, std::chrono::minutes{delta}, copts});
      carenet::IdentityStore identity(c.data_dir);
      carenet::SummarizeOptions sopts{copts.local_prefixes};
      auto sum = carenet::summarize(store, dataset, *identity.snapshot(), load_psl(), tz, sopts);
      for (const auto& w : rep.stats.warnings) std::cerr << "warning: " << w << "\n";
      emit({{"dataset", dataset},
            {"frames", rep.stats.frames},
            {"records", rep.records},
            {"non_ip_skipped", rep.stats.non_ip_skipped},
            {"malformed", rep.stats.malformed},
            {"rejected", rep.rejected},
            {"partitions", rep.partitions},
            {"windows", sum.windows},
            {"dates", sum.dates}});
    } else if (*features) {
      auto tz = carenet::dataset_zone(store, dataset, zone(c));
      carenet::FeatureEngineConfig cfg;
      cfg.delta = std::chrono::minutes{store.read_meta(dataset).delta_min};
      auto rep = carenet::compute_features(store, dataset, {date_opt(from, "--from"), date_opt(to, "--to")}, cfg, tz);
      emit({{"dataset", dataset},
            {"from", rep.from ? Json(carenet::format_date(*rep.from)) : Json(nullptr)},
            {"to", rep.to ? Json(carenet::format_date(*rep.to)) : Json(nullptr)},
            {"days", rep.days},
            {"vectors", rep.vectors}});
    } else if (*score) {
      auto loaded = load_registry(c, store);
      report_warnings(loaded.warnings);
      auto all = store.all_features(dataset);
      auto scores = carenet::score_features(dataset, all, loaded.registry);
      auto dir = carenet::write_scores(store, scores);
      carenet::DateRange range{date_opt(from, "--from"), date_opt(to, "--to")};
      if (c.format == "csv") {
        std::cout << "user_id,criterion_id,mean_likelihood\n";
        for (const auto& [u, _] : scores.series) {
          if (!user.empty() && u != user) continue;
          for (const auto& [k, mean] : carenet::gauges(scores, u, range))
            std::cout << u << "," << k << "," << csv_value(mean) << "\n";
        }
      } else {
        Json users = Json::object();
        for (const auto& [u, _] : scores.series) {
          if (!user.empty() && u != user) continue;
          Json g = Json::object();
          for (const auto& [k, mean] : carenet::gauges(scores, u, range)) g[std::to_string(k)] = carenet::opt_json(mean);
          users[u] = g;
        }
        emit({{"dataset", dataset}, {"config_hash", scores.config_hash}, {"scores_dir", dir.string()},
              {"mean_likelihood", users}});
      }
    } else if (*gate) {
      auto loaded = load_registry(c, store);
      report_warnings(loaded.warnings);
      auto d = date_opt(as_of, "--as-of");
      auto all = store.all_features(dataset);
      auto scores = carenet::score_features(dataset, all, loaded.registry);
      std::vector<carenet::IndicatorSnapshot> snaps;
      for (const auto& [u, _] : scores.series)
        if (user.empty() || u == user) snaps.push_back(carenet::snapshot(scores, u, *d));
      if (c.format == "csv") {
        std::cout << "user_id,date,criterion_id,likelihood,present,positives,non_missing,episode\n";
        for (const auto& s : snaps)
          for (const auto& row : s.criteria)
            std::cout << s.user_id << "," << carenet::format_date(s.date) << "," << row.criterion_id << ","
                      << csv_value(row.likelihood) << "," << row.gate.present << "," << row.gate.positives << ","
                      << row.gate.non_missing << "," << s.episode << "\n";
      } else {
        Json arr = Json::array();
        for (const auto& s : snaps) arr.push_back(carenet::to_json(s));
        emit({{"dataset", dataset}, {"snapshots", arr}});
      }
    } else if (*simulate) {
      std::ifstream in(scenario);
      auto sc = carenet::synth::parse_scenario(nlohmann::json::parse(in));
      auto trace = carenet::synth::generate(sc, seed);
      auto w = carenet::synth::write_trace(trace, out_dir);
      emit({{"scenario", sc.name},
            {"packets", trace.packets},
            {"pcap", w.pcap.string()},
            {"ledger", w.ledger.string()},
            {"profiles", w.profiles.string()},
            {"mappings", w.mappings.string()}});
    } else if (*serve) {
      auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw CLI::ValidationError("--addr", "expected HOST:PORT");
      std::string host = addr.substr(0, colon);
      int port = std::stoi(addr.substr(colon + 1));
      carenet::ServiceOptions sopts{c.data_dir, dataset, std::nullopt};
      if (token.empty()) token = env_or("CARENET_TOKEN", "");
      if (!token.empty()) sopts.token = token;
      carenet::GatewayService svc(sopts);
      report_warnings(svc.state()->warnings);
      std::cerr << "listening on " << host << ":" << port << " (data " << c.data_dir << ")\n";
      if (!svc.listen(host, port)) {
        std::cerr << "error: cannot bind " << addr << "\n";
        return 1;
      }
    } else if (*run) {
      auto loaded = load_registry(c, store);
      report_warnings(loaded.warnings);
      carenet::RunOptions ropts;
      ropts.dataset = dataset;
      ropts.captures.assign(captures.begin(), captures.end());
      ropts.range = {date_opt(from, "--from"), date_opt(to, "--to")};
      ropts.tz = zone(c);
      ropts.delta = std::chrono::minutes{delta};
      carenet::IdentityStore identity(c.data_dir);
      auto result = carenet::run_pipeline(store, *identity.snapshot(), load_psl(), loaded.registry, ropts);
      emit(carenet::to_json(result));
    } else if (*config) {
      if (init) store.save_parameters(carenet::default_parameters());
      auto loaded = load_registry(c, store);
      report_warnings(loaded.warnings);
      emit({{"config_hash", carenet::config_hash(loaded.registry)},
            {"warnings", carenet::issues_json(loaded.warnings)},
            {"normalized", carenet::to_normalized_json(loaded.registry)}});
    }
  } catch (const carenet::ValidationError& e) {
    for (const auto& i : e.issues()) std::cerr << "error: " << i.path << ": " << i.message << "\n";
    return 2;
  } catch (const carenet::synth::ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
