#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "carenet/feature_catalog.hpp"
#include "carenet/identity.hpp"
#include "carenet/parameters.hpp"
#include "carenet/pipeline.hpp"

namespace carenet {

struct ServiceOptions {
  std::filesystem::path data_dir;
  std::string default_dataset;       // empty: first dataset found
  std::optional<std::string> token;  // shared bearer token; none disables the check
};

/// HTTP surface over one data directory. Reads are served from immutable snapshots that are
/// swapped whole; configuration writes are serialized.
class GatewayService {
 public:
  struct State {
    ParameterRegistry registry;
    std::string config_hash;
    std::vector<ValidationIssue> warnings;
    std::map<std::string, std::shared_ptr<const ScoreSet>> scores;
  };

  explicit GatewayService(ServiceOptions opts) : opts_(std::move(opts)), store_(opts_.data_dir), identity_(opts_.data_dir) {
    auto loaded = store_.load_parameters_file();
    install(std::move(loaded.registry), std::move(loaded.warnings), true);
    routes();
  }

  httplib::Server& server() { return server_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }

  std::shared_ptr<const State> state() const {
    std::lock_guard lock(state_mutex_);
    return state_;
  }

  /// Re-reads stored features and recomputes likelihood and gate layers for every dataset.
  void recompute() {
    std::lock_guard writer(write_mutex_);
    auto s = state();
    {
      std::lock_guard lock(cache_mutex_);
      features_.clear();
    }
    install(s->registry, s->warnings, true);
  }

 private:
  using Json = nlohmann::ordered_json;

  std::shared_ptr<const std::vector<DailyFeatureVector>> features_for(const std::string& ds) {
    std::lock_guard lock(cache_mutex_);
    auto& slot = features_[ds];
    if (!slot) slot = std::make_shared<const std::vector<DailyFeatureVector>>(store_.all_features(ds));
    return slot;
  }

  void install(ParameterRegistry registry, std::vector<ValidationIssue> warnings, bool persist) {
    auto next = std::make_shared<State>();
    next->config_hash = config_hash(registry);
    next->warnings = std::move(warnings);
    for (const auto& ds : store_.datasets()) {
      auto features = features_for(ds);
      auto scores = std::make_shared<ScoreSet>(score_features(ds, *features, registry));
      if (persist) write_scores(store_, *scores);
      next->scores[ds] = std::move(scores);
    }
    next->registry = std::move(registry);
    std::lock_guard lock(state_mutex_);
    state_ = std::move(next);
  }

  static void send(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, int status, const std::string& message) {
    send(res, status, Json{{"error", {{"status", status}, {"message", message}}}});
  }

  struct Query {
    std::string dataset;
    std::shared_ptr<const ScoreSet> scores;
    std::string user;
  };

  /// Resolves dataset and user parameters; writes the error response and returns nullopt on failure.
  std::optional<Query> query(const State& s, const httplib::Request& req, httplib::Response& res) const {
    Query q;
    q.dataset = req.has_param("dataset") ? req.get_param_value("dataset") : opts_.default_dataset;
    if (q.dataset.empty() && !s.scores.empty()) q.dataset = s.scores.begin()->first;
    auto it = s.scores.find(q.dataset);
    if (it == s.scores.end()) {
      fail(res, 404, q.dataset.empty() ? "no dataset available" : "unknown dataset '" + q.dataset + "'");
      return std::nullopt;
    }
    q.scores = it->second;
    if (req.has_param("user")) {
      q.user = req.get_param_value("user");
    } else {
      for (const auto& [user, _] : q.scores->series)
        if (user != kAllOther) {
          q.user = user;
          break;
        }
      if (q.user.empty() && !q.scores->series.empty()) q.user = q.scores->series.begin()->first;
    }
    if (!q.scores->series.contains(q.user)) {
      fail(res, 404, "no scores for user '" + q.user + "'");
      return std::nullopt;
    }
    return q;
  }

  static std::optional<Date> date_param(const httplib::Request& req, const char* name, httplib::Response& res,
                                        std::optional<Date> fallback = std::nullopt) {
    if (!req.has_param(name)) {
      if (!fallback) fail(res, 400, std::string("missing query parameter '") + name + "'");
      return fallback;
    }
    auto d = parse_date(req.get_param_value(name));
    if (!d) fail(res, 400, std::string("invalid date in '") + name + "', expected YYYY-MM-DD");
    return d;
  }

  static std::optional<Date> last_date(const ScoreSet& scores, const std::string& user) {
    std::optional<Date> out;
    if (auto u = scores.series.find(user); u != scores.series.end())
      for (const auto& [_, series] : u->second)
        if (!series.empty() && (!out || days_between(*out, series.back().date) > 0)) out = series.back().date;
    return out;
  }

  static Json criterion_json(const CriterionConfig& c) {
    Json j{{"criterion_id", c.criterion_id}, {"label", c.label}, {"mode", to_string(c.mode)}, {"core", c.core}};
    j["components"] = Json::array();
    for (const auto& comp : c.components) {
      Json bj{{"name", comp.name}, {"v_weight", comp.raw_v_weight}, {"v_weight_normalized", comp.v_weight}};
      bj["features"] = Json::array();
      for (const auto& f : comp.features)
        bj["features"].push_back({{"name", f.name},
                                  {"weight", f.raw_weight},
                                  {"weight_normalized", f.weight},
                                  {"sign", static_cast<int>(f.sign)},
                                  {"mf", {{"lo", f.mf.lo}, {"mid", f.mf.mid}, {"hi", f.mf.hi}, {"inverted", f.mf.inverted}}}});
      j["components"].push_back(std::move(bj));
    }
    return j;
  }

  static Json gate_json(const GateConfig& g) {
    return {{"M", g.window_days}, {"N", g.required_days}, {"theta", g.theta}, {"tau", g.tau},
            {"validity_threshold", g.validity_threshold}};
  }

  static std::optional<nlohmann::json> body_json(const httplib::Request& req, httplib::Response& res) {
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      fail(res, 400, std::string("malformed JSON body: ") + e.what());
      return std::nullopt;
    }
  }

  static Json issues(const std::vector<ValidationIssue>& list) { return Json{{"errors", issues_json(list)}}; }

  void routes() {
    server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!opts_.token || req.path.rfind("/api/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + *opts_.token)
        return httplib::Server::HandlerResponse::Unhandled;
      fail(res, 401, "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        fail(res, 500, e.what());
      } catch (...) {
        fail(res, 500, "internal error");
      }
    });

    server_.Get("/api/datasets", [this](const httplib::Request&, httplib::Response& res) {
      auto s = state();
      Json arr = Json::array();
      for (const auto& [ds, scores] : s->scores) {
        Json users = Json::array();
        for (const auto& [u, _] : scores->series) users.push_back(u);
        arr.push_back({{"dataset", ds}, {"users", users}});
      }
      send(res, 200, Json{{"config_hash", s->config_hash}, {"datasets", arr}});
    });

    server_.Get("/api/criteria", [this](const httplib::Request&, httplib::Response& res) {
      auto s = state();
      Json out{{"config_hash", s->config_hash}, {"gate", gate_json(s->registry.gate)}};
      out["criteria"] = Json::array();
      for (const auto& c : s->registry.criteria) out["criteria"].push_back(criterion_json(c));
      out["catalog"] = Json::object();
      for (int k = 1; k <= kCriteriaCount; ++k) out["catalog"][std::to_string(k)] = catalog_json(k);
      send(res, 200, out);
    });

    server_.Get(R"(/api/criteria/(\d+)/likelihood)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = state();
      int k = std::stoi(req.matches[1]);
      if (!s->registry.criterion(k)) return fail(res, 404, "criterion " + std::to_string(k) + " is not configured");
      auto q = query(*s, req, res);
      if (!q) return;
      std::optional<Date> from, to;
      if (req.has_param("from") && !(from = date_param(req, "from", res))) return;
      if (req.has_param("to") && !(to = date_param(req, "to", res))) return;
      Json series = Json::array();
      if (const auto* rows = q->scores->find(q->user, k))
        for (const auto& d : *rows) {
          if (from && days_between(*from, d.date) < 0) continue;
          if (to && days_between(d.date, *to) < 0) continue;
          series.push_back({{"date", format_date(d.date)},
                            {"likelihood", opt_json(d.likelihood)},
                            {"coverage", q->scores->coverage.at(q->user).at(d.date)}});
        }
      send(res, 200, Json{{"dataset", q->dataset}, {"user", q->user}, {"criterion_id", k},
                          {"config_hash", q->scores->config_hash}, {"series", series}});
    });

    server_.Get("/api/gate", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = state();
      auto q = query(*s, req, res);
      if (!q) return;
      auto as_of = date_param(req, "as_of", res, last_date(*q->scores, q->user));
      if (!as_of) return;
      const auto& g = s->registry.gate;
      Json out{{"dataset", q->dataset}, {"user", q->user}, {"as_of", format_date(*as_of)},
               {"config_hash", q->scores->config_hash}, {"gate", gate_json(g)}};
      out["criteria"] = Json::array();
      for (const auto& c : s->registry.criteria) {
        const auto* series = q->scores->find(q->user, c.criterion_id);
        GateState st{*as_of};
        if (series) st = gate_at(*series, g, *as_of);
        Json days = Json::array();
        for (int back = g.window_days - 1; back >= 0; --back) {
          Date d = add_days(*as_of, -back);
          std::optional<double> l;
          if (series)
            for (const auto& row : *series)
              if (row.date == d) l = row.likelihood;
          days.push_back({{"date", format_date(d)},
                          {"likelihood", opt_json(l)},
                          {"status", !l ? "missing" : (*l >= g.theta ? "positive" : "negative")}});
        }
        out["criteria"].push_back({{"criterion_id", c.criterion_id},
                                   {"present", st.present},
                                   {"positives", st.positives},
                                   {"non_missing", st.non_missing},
                                   {"days", days}});
      }
      send(res, 200, out);
    });

    server_.Get("/api/episode", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = state();
      auto q = query(*s, req, res);
      if (!q) return;
      auto as_of = date_param(req, "as_of", res, last_date(*q->scores, q->user));
      if (!as_of) return;
      auto snap = to_json(snapshot(*q->scores, q->user, *as_of));
      snap["dataset"] = q->dataset;
      send(res, 200, snap);
    });

    server_.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
      auto s = state();
      res.set_header("ETag", "\"" + s->config_hash + "\"");
      send(res, 200, Json{{"config_hash", s->config_hash},
                          {"parameters", to_document(s->registry)},
                          {"warnings", issues_json(s->warnings)}});
    });

    server_.Put("/api/config", [this](const httplib::Request& req, httplib::Response& res) {
      auto doc = body_json(req, res);
      if (!doc) return;
      std::lock_guard writer(write_mutex_);
      auto current = state();
      if (req.has_header("If-Match")) {
        auto tag = req.get_header_value("If-Match");
        if (tag != current->config_hash && tag != "\"" + current->config_hash + "\"")
          return send(res, 409, Json{{"error", {{"status", 409}, {"message", "configuration changed concurrently"}}},
                                     {"config_hash", current->config_hash}});
      }
      LoadedParameters loaded;
      try {
        loaded = load_parameters(*doc);
      } catch (const ValidationError& e) {
        return send(res, 422, issues(e.issues()));
      }
      store_.save_parameters(loaded.registry);
      install(loaded.registry, loaded.warnings, true);
      auto s = state();
      res.set_header("ETag", "\"" + s->config_hash + "\"");
      send(res, 200, Json{{"config_hash", s->config_hash}, {"warnings", issues_json(s->warnings)}});
    });

    server_.Get("/api/profiles", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, profiles_document(*identity_.snapshot(), version_now()));
    });
    server_.Put("/api/profiles", [this](const httplib::Request& req, httplib::Response& res) {
      auto doc = body_json(req, res);
      if (!doc) return;
      try {
        auto current = identity_.snapshot();
        IdentityRegistry next(profiles_from_document(*doc), current->mappings());
        identity_.replace(std::move(next), version_now());
      } catch (const RegistryError& e) {
        return send(res, 422, issues({{e.path(), e.what()}}));
      } catch (const std::exception& e) {
        return send(res, 422, issues({{"$", e.what()}}));
      }
      send(res, 200, profiles_document(*identity_.snapshot(), version_now()));
    });

    server_.Get("/api/mappings", [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, mappings_document(*identity_.snapshot(), version_now()));
    });
    server_.Put("/api/mappings", [this](const httplib::Request& req, httplib::Response& res) {
      auto doc = body_json(req, res);
      if (!doc) return;
      try {
        auto current = identity_.snapshot();
        IdentityRegistry next(current->profiles(), mappings_from_document(*doc));
        identity_.replace(std::move(next), version_now());
      } catch (const RegistryError& e) {
        return send(res, 422, issues({{e.path(), e.what()}}));
      } catch (const std::exception& e) {
        return send(res, 422, issues({{"$", e.what()}}));
      }
      send(res, 200, mappings_document(*identity_.snapshot(), version_now()));
    });

    server_.Get(R"(/api/features/([^/]+)/(\d{4}-\d{2}-\d{2}))", [this](const httplib::Request& req,
                                                                        httplib::Response& res) {
      auto s = state();
      std::string user = req.matches[1];
      auto date = parse_date(std::string(req.matches[2]));
      if (!date) return fail(res, 400, "invalid date");
      std::string ds = req.has_param("dataset") ? req.get_param_value("dataset") : opts_.default_dataset;
      if (ds.empty() && !s->scores.empty()) ds = s->scores.begin()->first;
      if (!valid_dataset_name(ds) || user.find("..") != std::string::npos) return fail(res, 400, "invalid dataset or user");
      auto v = store_.read_features(ds, user, *date);
      if (!v) return fail(res, 404, "no features for " + user + " on " + format_date(*date));
      Json out = to_json(*v);
      out["dataset"] = ds;
      out["memberships"] = Json::object();
      for (const auto& c : s->registry.criteria) {
        auto br = explain_likelihood(*v, c, s->registry.gate);
        Json m = Json::object();
        for (const auto& [name, mu] : br.memberships) m[name] = opt_json(mu);
        out["memberships"][std::to_string(c.criterion_id)] = {{"likelihood", opt_json(br.likelihood)}, {"features", m}};
      }
      send(res, 200, out);
    });

    server_.Post("/api/recompute", [this](const httplib::Request&, httplib::Response& res) {
      recompute();
      auto s = state();
      Json datasets = Json::array();
      for (const auto& [ds, _] : s->scores) datasets.push_back(ds);
      send(res, 200, Json{{"config_hash", s->config_hash}, {"datasets", datasets}});
    });

    server_.Get("/api/inventory", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = state();
      std::string ds = req.has_param("dataset") ? req.get_param_value("dataset") : opts_.default_dataset;
      if (ds.empty() && !s->scores.empty()) ds = s->scores.begin()->first;
      if (!valid_dataset_name(ds)) return fail(res, 400, "invalid dataset");
      auto doc = detail::read_json_file(store_.summaries_dir(ds) / "inventory.json");
      send(res, 200, Json{{"dataset", ds}, {"addresses_by_date", doc ? Json(*doc) : Json::object()}});
    });
  }

  static Timestamp version_now() {
    return std::chrono::time_point_cast<Micros>(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
  }

  ServiceOptions opts_;
  DataStore store_;
  IdentityStore identity_;
  httplib::Server server_;
  mutable std::mutex state_mutex_;
  std::mutex write_mutex_;
  std::mutex cache_mutex_;
  std::shared_ptr<const State> state_;
  std::map<std::string, std::shared_ptr<const std::vector<DailyFeatureVector>>> features_;
};

}  // namespace carenet
