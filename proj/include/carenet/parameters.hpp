#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "carenet/fasl.hpp"
#include "carenet/features.hpp"

namespace carenet {

struct ValidationIssue {
  std::string path;
  std::string message;

  bool operator==(const ValidationIssue&) const = default;
};

/// Rejected parameter document; every issue names the offending field.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<ValidationIssue> issues)
      : std::runtime_error(summarize(issues)), issues_(std::move(issues)) {}

  const std::vector<ValidationIssue>& issues() const { return issues_; }

 private:
  static std::string summarize(const std::vector<ValidationIssue>& issues) {
    std::string s = "invalid parameters:";
    for (const auto& i : issues) s += " " + i.path + ": " + i.message + ";";
    return s;
  }

  std::vector<ValidationIssue> issues_;
};

struct ParameterRegistry {
  GateConfig gate;
  std::vector<CriterionConfig> criteria;
  std::string comment;

  const CriterionConfig* criterion(int id) const {
    for (const auto& c : criteria)
      if (c.criterion_id == id) return &c;
    return nullptr;
  }

  bool operator==(const ParameterRegistry&) const = default;
};

struct LoadedParameters {
  ParameterRegistry registry;
  std::vector<ValidationIssue> warnings;
};

inline std::string_view to_string(AggregationMode m) { return m == AggregationMode::Direct ? "DIRECT" : "SIGNED"; }

namespace detail {

class DocumentReader {
 public:
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;

  void error(const std::string& path, const std::string& msg) { errors.push_back({path, msg}); }

  std::optional<double> number(const nlohmann::json& obj, const std::string& key, const std::string& path,
                               std::optional<double> fallback = std::nullopt) {
    if (!obj.contains(key)) {
      if (!fallback) error(path + "." + key, "missing");
      return fallback;
    }
    const auto& v = obj[key];
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
      error(path + "." + key, "expected a finite number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<int> integer(const nlohmann::json& obj, const std::string& key, const std::string& path,
                             std::optional<int> fallback = std::nullopt) {
    if (!obj.contains(key)) {
      if (!fallback) error(path + "." + key, "missing");
      return fallback;
    }
    const auto& v = obj[key];
    if (!v.is_number_integer()) {
      error(path + "." + key, "expected an integer");
      return std::nullopt;
    }
    return v.get<int>();
  }

  std::string string(const nlohmann::json& obj, const std::string& key, const std::string& path, bool required) {
    if (!obj.contains(key)) {
      if (required) error(path + "." + key, "missing");
      return {};
    }
    if (!obj[key].is_string()) {
      error(path + "." + key, "expected a string");
      return {};
    }
    return obj[key].get<std::string>();
  }
};

/// Normalizes raw weights in place; warns when the raw sum is not 1.
template <typename T, typename Raw, typename Out>
void normalize_weights(std::vector<T>& items, Raw raw, Out out, const std::string& path, const char* what,
                       DocumentReader& rd) {
  double sum = 0.0;
  for (const auto& it : items) sum += it.*raw;
  if (sum <= 0.0 || !std::isfinite(sum)) return;
  if (std::abs(sum - 1.0) > 1e-9)
    rd.warnings.push_back({path, std::string(what) + " sum to " + nlohmann::json(sum).dump() + "; normalized to 1"});
  for (auto& it : items) it.*out = it.*raw / sum;
}

inline std::optional<GateConfig> read_gate(const nlohmann::json& doc, DocumentReader& rd) {
  if (!doc.contains("gate") || !doc["gate"].is_object()) {
    rd.error("gate", "expected an object");
    return std::nullopt;
  }
  const auto& g = doc["gate"];
  GateConfig out;
  auto m = rd.integer(g, "M", "gate");
  auto n = rd.integer(g, "N", "gate");
  auto theta = rd.number(g, "theta", "gate");
  auto tau = rd.integer(g, "tau", "gate", 1);
  auto validity = rd.number(g, "validity_threshold", "gate", 0.5);
  if (m && *m < 1) rd.error("gate.M", "must be >= 1");
  if (n && *n < 1) rd.error("gate.N", "must be >= 1");
  if (m && n && *n > *m) rd.error("gate.N", "must not exceed M");
  if (theta && !(*theta > 0.0 && *theta < 1.0)) rd.error("gate.theta", "must lie in (0, 1)");
  if (tau && *tau < 1) rd.error("gate.tau", "must be >= 1");
  if (validity && !(*validity > 0.0 && *validity <= 1.0)) rd.error("gate.validity_threshold", "must lie in (0, 1]");
  if (!m || !n || !theta || !tau || !validity) return std::nullopt;
  out.window_days = *m;
  out.required_days = *n;
  out.theta = *theta;
  out.tau = *tau;
  out.validity_threshold = *validity;
  return out;
}

inline std::optional<FeatureSpec> read_feature(const nlohmann::json& f, const std::string& path, DocumentReader& rd) {
  if (!f.is_object()) {
    rd.error(path, "expected an object");
    return std::nullopt;
  }
  FeatureSpec out;
  out.name = rd.string(f, "name", path, true);
  if (f.contains("name") && out.name.empty()) rd.error(path + ".name", "must not be empty");
  out.comment = rd.string(f, "comment", path, false);
  auto w = rd.number(f, "weight", path);
  if (w && *w <= 0.0) rd.error(path + ".weight", "must be > 0");
  auto sign = rd.integer(f, "sign", path);
  if (sign && *sign != 1 && *sign != -1) rd.error(path + ".sign", "must be +1 or -1");
  bool ok = w && *w > 0.0 && sign && (*sign == 1 || *sign == -1);
  std::string mp = path + ".mf";
  if (!f.contains("mf") || !f["mf"].is_object()) {
    rd.error(mp, "expected an object");
    return std::nullopt;
  }
  const auto& mf = f["mf"];
  auto lo = rd.number(mf, "lo", mp), mid = rd.number(mf, "mid", mp), hi = rd.number(mf, "hi", mp);
  bool inverted = false;
  if (mf.contains("inverted")) {
    if (!mf["inverted"].is_boolean()) rd.error(mp + ".inverted", "expected a boolean");
    else inverted = mf["inverted"].get<bool>();
  }
  if (lo && mid && *lo > *mid) rd.error(mp + ".lo", "must not exceed mid");
  if (mid && hi && *mid > *hi) rd.error(mp + ".mid", "must not exceed hi");
  if (lo && mid && hi && *lo <= *mid && *mid <= *hi && *lo == *hi) rd.error(mp, "lo, mid and hi must not all be equal");
  if (!ok || !lo || !mid || !hi) return std::nullopt;
  out.raw_weight = out.weight = *w;
  out.sign = *sign == 1 ? Sign::Pro : Sign::Contra;
  out.mf = TriangularMF{*lo, *mid, *hi, inverted};
  if (!out.mf.valid()) return std::nullopt;
  return out;
}

inline std::optional<CriterionConfig> read_criterion(const nlohmann::json& c, const std::string& path,
                                                     DocumentReader& rd) {
  if (!c.is_object()) {
    rd.error(path, "expected an object");
    return std::nullopt;
  }
  CriterionConfig out;
  bool ok = true;
  auto id = rd.integer(c, "criterion_id", path);
  if (id && (*id < 1 || *id > kCriteriaCount)) {
    rd.error(path + ".criterion_id", "must lie in 1..9");
    ok = false;
  }
  ok = ok && id.has_value();
  out.criterion_id = id.value_or(0);
  out.label = rd.string(c, "label", path, false);
  out.comment = rd.string(c, "comment", path, false);
  std::string mode = rd.string(c, "mode", path, true);
  if (mode == "DIRECT") {
    out.mode = AggregationMode::Direct;
  } else if (mode == "SIGNED") {
    out.mode = AggregationMode::Signed;
  } else {
    if (c.contains("mode")) rd.error(path + ".mode", "expected DIRECT or SIGNED");
    ok = false;
  }
  out.core = out.criterion_id == 1 || out.criterion_id == 2;
  if (c.contains("core")) {
    if (!c["core"].is_boolean()) {
      rd.error(path + ".core", "expected a boolean");
    } else if (id && c["core"].get<bool>() != out.core) {
      rd.error(path + ".core", "only criteria 1 and 2 are core");
      ok = false;
    }
  }
  if (!c.contains("components") || !c["components"].is_array() || c["components"].empty()) {
    rd.error(path + ".components", "expected a non-empty array");
    return std::nullopt;
  }
  std::set<std::string> names;
  for (std::size_t b = 0; b < c["components"].size(); ++b) {
    std::string cp = path + ".components[" + std::to_string(b) + "]";
    const auto& comp = c["components"][b];
    if (!comp.is_object()) {
      rd.error(cp, "expected an object");
      ok = false;
      continue;
    }
    ComponentSpec spec;
    spec.name = rd.string(comp, "name", cp, true);
    auto v = rd.number(comp, "v_weight", cp, 1.0);
    if (v && *v <= 0.0) {
      rd.error(cp + ".v_weight", "must be > 0");
      ok = false;
    }
    spec.raw_v_weight = spec.v_weight = v.value_or(1.0);
    if (!comp.contains("features") || !comp["features"].is_array() || comp["features"].empty()) {
      rd.error(cp + ".features", "expected a non-empty array");
      ok = false;
      continue;
    }
    for (std::size_t i = 0; i < comp["features"].size(); ++i) {
      std::string fp = cp + ".features[" + std::to_string(i) + "]";
      auto f = read_feature(comp["features"][i], fp, rd);
      if (!f) {
        ok = false;
        continue;
      }
      if (!names.insert(f->name).second) {
        rd.error(fp + ".name", "duplicate feature '" + f->name + "' in criterion");
        ok = false;
      }
      spec.features.push_back(std::move(*f));
    }
    normalize_weights(spec.features, &FeatureSpec::raw_weight, &FeatureSpec::weight, cp + ".features", "feature weights", rd);
    out.components.push_back(std::move(spec));
  }
  normalize_weights(out.components, &ComponentSpec::raw_v_weight, &ComponentSpec::v_weight, path + ".components",
                    "component weights", rd);
  if (ok && out.mode == AggregationMode::Direct) {
    if (out.components.size() != 1) {
      rd.error(path + ".components", "DIRECT mode requires exactly one component");
      ok = false;
    } else {
      for (std::size_t i = 0; i < out.components[0].features.size(); ++i)
        if (out.components[0].features[i].sign != Sign::Pro) {
          rd.error(path + ".components[0].features[" + std::to_string(i) + "].sign", "DIRECT mode requires sign +1");
          ok = false;
        }
    }
  }
  if (!ok) return std::nullopt;
  return out;
}

}  // namespace detail

/// Validates a parameter document and normalizes weights per level. Throws ValidationError.
inline LoadedParameters load_parameters(const nlohmann::json& doc) {
  detail::DocumentReader rd;
  LoadedParameters out;
  if (!doc.is_object()) throw ValidationError(std::vector<ValidationIssue>{{"$", "expected a JSON object"}});
  if (doc.contains("comment") && doc["comment"].is_string()) out.registry.comment = doc["comment"].get<std::string>();
  auto gate = detail::read_gate(doc, rd);
  if (gate) out.registry.gate = *gate;
  if (!doc.contains("criteria") || !doc["criteria"].is_array()) {
    rd.error("criteria", "expected an array");
  } else {
    std::set<int> ids;
    for (std::size_t k = 0; k < doc["criteria"].size(); ++k) {
      std::string path = "criteria[" + std::to_string(k) + "]";
      auto c = detail::read_criterion(doc["criteria"][k], path, rd);
      if (!c) continue;
      if (!ids.insert(c->criterion_id).second) {
        rd.error(path + ".criterion_id", "duplicate criterion " + std::to_string(c->criterion_id));
        continue;
      }
      for (std::size_t b = 0; b < c->components.size(); ++b)
        for (std::size_t i = 0; i < c->components[b].features.size(); ++i) {
          const auto& name = c->components[b].features[i].name;
          const auto& known = feature_names::implemented();
          if (std::find(known.begin(), known.end(), name) == known.end())
            rd.warnings.push_back({path + ".components[" + std::to_string(b) + "].features[" + std::to_string(i) + "].name",
                                   "feature '" + name + "' has no extractor; its membership will always be missing"});
        }
      out.registry.criteria.push_back(std::move(*c));
    }
  }
  if (!rd.errors.empty()) throw ValidationError(std::move(rd.errors));
  std::sort(out.registry.criteria.begin(), out.registry.criteria.end(),
            [](const auto& a, const auto& b) { return a.criterion_id < b.criterion_id; });
  out.warnings = std::move(rd.warnings);
  return out;
}

/// Document form (raw weights, as an operator would edit it).
inline nlohmann::ordered_json to_document(const ParameterRegistry& p) {
  nlohmann::ordered_json doc;
  doc["comment"] = p.comment;
  doc["gate"] = {{"M", p.gate.window_days},
                 {"N", p.gate.required_days},
                 {"theta", p.gate.theta},
                 {"tau", p.gate.tau},
                 {"validity_threshold", p.gate.validity_threshold}};
  doc["criteria"] = nlohmann::ordered_json::array();
  for (const auto& c : p.criteria) {
    nlohmann::ordered_json cj;
    cj["criterion_id"] = c.criterion_id;
    cj["label"] = c.label;
    cj["mode"] = to_string(c.mode);
    cj["core"] = c.core;
    cj["comment"] = c.comment;
    cj["components"] = nlohmann::ordered_json::array();
    for (const auto& comp : c.components) {
      nlohmann::ordered_json bj;
      bj["name"] = comp.name;
      bj["v_weight"] = comp.raw_v_weight;
      bj["features"] = nlohmann::ordered_json::array();
      for (const auto& f : comp.features) {
        nlohmann::ordered_json fj;
        fj["name"] = f.name;
        fj["weight"] = f.raw_weight;
        fj["sign"] = static_cast<int>(f.sign);
        fj["mf"] = {{"lo", f.mf.lo}, {"mid", f.mf.mid}, {"hi", f.mf.hi}, {"inverted", f.mf.inverted}};
        if (!f.comment.empty()) fj["comment"] = f.comment;
        bj["features"].push_back(std::move(fj));
      }
      cj["components"].push_back(std::move(bj));
    }
    doc["criteria"].push_back(std::move(cj));
  }
  return doc;
}

/// Normalized form, including effective weights; the basis of the config hash.
inline nlohmann::ordered_json to_normalized_json(const ParameterRegistry& p) {
  auto doc = to_document(p);
  for (std::size_t k = 0; k < p.criteria.size(); ++k)
    for (std::size_t b = 0; b < p.criteria[k].components.size(); ++b) {
      auto& bj = doc["criteria"][k]["components"][b];
      bj["v_weight_normalized"] = p.criteria[k].components[b].v_weight;
      for (std::size_t i = 0; i < p.criteria[k].components[b].features.size(); ++i)
        bj["features"][i]["weight_normalized"] = p.criteria[k].components[b].features[i].weight;
    }
  doc.erase("comment");
  for (auto& c : doc["criteria"]) {
    c.erase("comment");
    c.erase("label");
    for (auto& comp : c["components"])
      for (auto& f : comp["features"]) f.erase("comment");
  }
  return doc;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

/// Short stable identifier of the effective (normalized) configuration; comments excluded.
inline std::string config_hash(const ParameterRegistry& p) { return sha256_hex(to_normalized_json(p).dump()).substr(0, 16); }

/// Shipped defaults: the published C4 and C8 calibrations, aggregated in DIRECT mode.
inline nlohmann::ordered_json default_parameters_document() {
  auto feature = [](const std::string& name, double w, double lo, double mid, double hi, const char* comment) {
    return nlohmann::ordered_json{{"name", name},
                                  {"weight", w},
                                  {"sign", 1},
                                  {"mf", {{"lo", lo}, {"mid", mid}, {"hi", hi}, {"inverted", false}}},
                                  {"comment", comment}};
  };
  nlohmann::ordered_json doc;
  doc["comment"] = "Published C4/C8 calibrations (weights, triangular limits, gate M=14 N=6 theta=0.6 tau=1).";
  doc["gate"] = {{"M", 14}, {"N", 6}, {"theta", 0.6}, {"tau", 1}, {"validity_threshold", 0.5}};
  doc["criteria"] = nlohmann::ordered_json::array();
  doc["criteria"].push_back(
      {{"criterion_id", 4},
       {"label", "Sleep timing / duration"},
       {"mode", "DIRECT"},
       {"core", false},
       {"comment", "Published calibration; raw weights sum to 1.05 and are normalized at load."},
       {"components",
        {{{"name", "SleepRhythm"},
          {"v_weight", 1.0},
          {"features",
           {feature(feature_names::kWakeAfter0400Min, 0.65, 120, 1085, 1085, "published: w=0.65 lo=120 mid=1085 hi=1085"),
            feature(feature_names::kSleepDurationZAbs30d, 0.20, 0.25, 0.80, 0.80, "published: w=0.20 lo=0.25 mid=0.80 hi=0.80"),
            feature(feature_names::kDaytimeIdleRatio0818, 0.05, 0.00, 0.08, 0.16, "published: w=0.05 lo=0.00 mid=0.08 hi=0.16"),
            feature(feature_names::kNightDayTrafficRatioBytes, 0.15, 0.20, 1.00, 1.00,
                    "published: w=0.15 lo=0.20 mid=1.00 hi=1.00")}}}}}});
  doc["criteria"].push_back(
      {{"criterion_id", 8},
       {"label", "Difficulty concentrating / indecisiveness"},
       {"mode", "DIRECT"},
       {"core", false},
       {"comment", "Published calibration."},
       {"components",
        {{{"name", "AttentionStability"},
          {"v_weight", 1.0},
          {"features",
           {feature(feature_names::kDnsBurstRatePerHour, 0.40, 25, 61, 61, "published: w=0.40 lo=25 mid=61 hi=61"),
            feature(feature_names::kRepeatedQueryRatio60m, 0.40, 0.80, 1.00, 1.00, "published: w=0.40 lo=0.80 mid=1.00 hi=1.00"),
            feature(feature_names::kMedianIksSec, 0.20, 0.12, 0.22, 0.22, "published: w=0.20 lo=0.12 mid=0.22 hi=0.22")}}}}}});
  return doc;
}

inline ParameterRegistry default_parameters() { return load_parameters(default_parameters_document()).registry; }

inline nlohmann::ordered_json issues_json(const std::vector<ValidationIssue>& issues) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& i : issues) arr.push_back({{"path", i.path}, {"message", i.message}});
  return arr;
}

}  // namespace carenet
