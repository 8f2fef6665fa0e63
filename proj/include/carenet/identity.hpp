#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "carenet/ip.hpp"
#include "carenet/time.hpp"

namespace carenet {

/// Fallback group for traffic that no mapping claims.
inline const std::string kAllOther = "ALL_OTHER";

enum class Weekday { Mon, Tue, Wed, Thu, Fri, Sat, Sun };

inline constexpr std::array<std::string_view, 7> kWeekdayNames{"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};

struct UserProfile {
  std::string user_id;
  std::string display_name;
  ClockTime habitual_wake{7 * 3600};
  ClockTime habitual_sleep{23 * 3600};
  std::set<Weekday> workdays{Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri};
  std::string notes;

  bool operator==(const UserProfile&) const = default;
};

struct IpMapping {
  IpAddress address;
  std::string user_id;
  Timestamp valid_from{};
  std::optional<Timestamp> valid_to;  // exclusive

  bool active_at(Timestamp t) const { return valid_from <= t && (!valid_to || t < *valid_to); }

  bool overlaps(const IpMapping& other) const {
    if (address != other.address) return false;
    bool this_before = valid_to && *valid_to <= other.valid_from;
    bool other_before = other.valid_to && *other.valid_to <= valid_from;
    return !this_before && !other_before;
  }

  bool operator==(const IpMapping&) const = default;
};

class RegistryError : public std::runtime_error {
 public:
  RegistryError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// JSON forms ----------------------------------------------------------------

inline nlohmann::ordered_json to_json(const UserProfile& p) {
  nlohmann::ordered_json j;
  j["user_id"] = p.user_id;
  j["display_name"] = p.display_name;
  j["habitual_wake"] = format_clock(p.habitual_wake);
  j["habitual_sleep"] = format_clock(p.habitual_sleep);
  auto days = nlohmann::ordered_json::array();
  for (auto d : p.workdays) days.push_back(kWeekdayNames[static_cast<int>(d)]);
  j["workdays"] = days;
  j["notes"] = p.notes;
  return j;
}

inline UserProfile profile_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw RegistryError(path, "expected an object");
  UserProfile p;
  auto str = [&](const char* key, bool required) -> std::optional<std::string> {
    if (!j.contains(key)) {
      if (required) throw RegistryError(path + "." + key, "missing");
      return std::nullopt;
    }
    if (!j[key].is_string()) throw RegistryError(path + "." + key, "expected a string");
    return j[key].get<std::string>();
  };
  p.user_id = *str("user_id", true);
  if (p.user_id.empty()) throw RegistryError(path + ".user_id", "must not be empty");
  if (p.user_id == kAllOther) throw RegistryError(path + ".user_id", "reserved identifier");
  if (p.user_id.find_first_of("/\\") != std::string::npos || p.user_id.starts_with('.'))
    throw RegistryError(path + ".user_id", "must not contain path separators");
  p.display_name = str("display_name", false).value_or(p.user_id);
  for (auto [key, field] : {std::pair{"habitual_wake", &p.habitual_wake}, std::pair{"habitual_sleep", &p.habitual_sleep}}) {
    if (auto s = str(key, false)) {
      auto c = parse_clock(*s);
      if (!c) throw RegistryError(path + "." + key, "invalid clock time '" + *s + "'");
      *field = *c;
    }
  }
  if (j.contains("workdays")) {
    if (!j["workdays"].is_array()) throw RegistryError(path + ".workdays", "expected an array");
    p.workdays.clear();
    for (std::size_t i = 0; i < j["workdays"].size(); ++i) {
      const auto& d = j["workdays"][i];
      auto it = d.is_string() ? std::find(kWeekdayNames.begin(), kWeekdayNames.end(), d.get<std::string>())
                              : kWeekdayNames.end();
      if (it == kWeekdayNames.end())
        throw RegistryError(path + ".workdays[" + std::to_string(i) + "]", "expected Mon..Sun");
      p.workdays.insert(static_cast<Weekday>(it - kWeekdayNames.begin()));
    }
  }
  p.notes = str("notes", false).value_or("");
  return p;
}

inline nlohmann::ordered_json to_json(const IpMapping& m) {
  nlohmann::ordered_json j;
  j["address"] = m.address.to_string();
  j["user_id"] = m.user_id;
  j["valid_from"] = format_iso(m.valid_from);
  j["valid_to"] = m.valid_to ? nlohmann::ordered_json(format_iso(*m.valid_to)) : nlohmann::ordered_json(nullptr);
  return j;
}

inline IpMapping mapping_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw RegistryError(path, "expected an object");
  IpMapping m;
  if (!j.contains("address") || !j["address"].is_string()) throw RegistryError(path + ".address", "expected a string");
  auto addr = IpAddress::parse(j["address"].get<std::string>());
  if (!addr) throw RegistryError(path + ".address", "invalid IP address");
  m.address = *addr;
  if (!j.contains("user_id") || !j["user_id"].is_string() || j["user_id"].get<std::string>().empty())
    throw RegistryError(path + ".user_id", "expected a non-empty string");
  m.user_id = j["user_id"].get<std::string>();
  auto ts = [&](const char* key) -> std::optional<Timestamp> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (j[key].is_number_integer()) return from_epoch_micros(j[key].get<std::int64_t>());
    if (!j[key].is_string()) throw RegistryError(path + "." + key, "expected an ISO-8601 timestamp");
    auto t = parse_iso(j[key].get<std::string>());
    if (!t) throw RegistryError(path + "." + key, "expected an ISO-8601 timestamp");
    return t;
  };
  m.valid_from = ts("valid_from").value_or(Timestamp{});
  m.valid_to = ts("valid_to");
  if (m.valid_to && *m.valid_to <= m.valid_from) throw RegistryError(path + ".valid_to", "must be after valid_from");
  return m;
}

/// Immutable registry snapshot: profiles plus address mappings, validated on construction.
class IdentityRegistry {
 public:
  IdentityRegistry() = default;

  IdentityRegistry(std::vector<UserProfile> profiles, std::vector<IpMapping> mappings)
      : profiles_(std::move(profiles)), mappings_(std::move(mappings)) {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < profiles_.size(); ++i)
      if (!ids.insert(profiles_[i].user_id).second)
        throw RegistryError("profiles[" + std::to_string(i) + "].user_id", "duplicate user_id '" + profiles_[i].user_id + "'");
    for (std::size_t i = 0; i < mappings_.size(); ++i)
      for (std::size_t k = 0; k < i; ++k)
        if (mappings_[i].overlaps(mappings_[k]))
          throw RegistryError("mappings[" + std::to_string(i) + "]",
                              "overlaps mappings[" + std::to_string(k) + "] for " + mappings_[i].address.to_string());
    std::sort(profiles_.begin(), profiles_.end(), [](auto& a, auto& b) { return a.user_id < b.user_id; });
    std::stable_sort(mappings_.begin(), mappings_.end(), [](auto& a, auto& b) {
      return std::tie(a.address, a.valid_from) < std::tie(b.address, b.valid_from);
    });
  }

  const std::vector<UserProfile>& profiles() const { return profiles_; }
  const std::vector<IpMapping>& mappings() const { return mappings_; }

  const UserProfile* profile(std::string_view user_id) const {
    for (const auto& p : profiles_)
      if (p.user_id == user_id) return &p;
    return nullptr;
  }

  /// User owning `addr` at instant `at`, or ALL_OTHER.
  const std::string& resolve(const IpAddress& addr, Timestamp at) const {
    auto it = std::lower_bound(mappings_.begin(), mappings_.end(), addr,
                               [](const IpMapping& m, const IpAddress& a) { return m.address < a; });
    for (; it != mappings_.end() && it->address == addr; ++it)
      if (it->active_at(at)) return it->user_id;
    return kAllOther;
  }

  IdentityRegistry with_profile(UserProfile p, bool create_only) const {
    auto profiles = profiles_;
    auto it = std::find_if(profiles.begin(), profiles.end(), [&](auto& x) { return x.user_id == p.user_id; });
    if (it != profiles.end()) {
      if (create_only) throw RegistryError("user_id", "duplicate user_id '" + p.user_id + "'");
      *it = std::move(p);
    } else {
      profiles.push_back(std::move(p));
    }
    return IdentityRegistry(std::move(profiles), mappings_);
  }

  /// Inserts a mapping, or replaces the one with the same address and valid_from.
  IdentityRegistry with_mapping(IpMapping m) const {
    auto mappings = mappings_;
    auto it = std::find_if(mappings.begin(), mappings.end(),
                           [&](auto& x) { return x.address == m.address && x.valid_from == m.valid_from; });
    if (it != mappings.end()) {
      *it = std::move(m);
    } else {
      mappings.push_back(std::move(m));
    }
    return IdentityRegistry(profiles_, std::move(mappings));
  }

 private:
  std::vector<UserProfile> profiles_;
  std::vector<IpMapping> mappings_;
};

inline const std::string& resolve_identity(const IpAddress& addr, Timestamp at, const IdentityRegistry& registry) {
  return registry.resolve(addr, at);
}

inline std::vector<UserProfile> profiles_from_document(const nlohmann::json& doc) {
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("profiles")) throw RegistryError("profiles", "missing");
    list = &doc["profiles"];
  }
  if (!list->is_array()) throw RegistryError("profiles", "expected an array");
  std::vector<UserProfile> out;
  for (std::size_t i = 0; i < list->size(); ++i)
    out.push_back(profile_from_json((*list)[i], "profiles[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<IpMapping> mappings_from_document(const nlohmann::json& doc) {
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("mappings")) throw RegistryError("mappings", "missing");
    list = &doc["mappings"];
  }
  if (!list->is_array()) throw RegistryError("mappings", "expected an array");
  std::vector<IpMapping> out;
  for (std::size_t i = 0; i < list->size(); ++i)
    out.push_back(mapping_from_json((*list)[i], "mappings[" + std::to_string(i) + "]"));
  return out;
}

inline nlohmann::ordered_json profiles_document(const IdentityRegistry& r, Timestamp version) {
  nlohmann::ordered_json doc;
  doc["version"] = format_iso(version);
  doc["profiles"] = nlohmann::ordered_json::array();
  for (const auto& p : r.profiles()) doc["profiles"].push_back(to_json(p));
  return doc;
}

inline nlohmann::ordered_json mappings_document(const IdentityRegistry& r, Timestamp version) {
  nlohmann::ordered_json doc;
  doc["version"] = format_iso(version);
  doc["mappings"] = nlohmann::ordered_json::array();
  for (const auto& m : r.mappings()) doc["mappings"].push_back(to_json(m));
  return doc;
}

namespace detail {

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::optional<nlohmann::json> read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  return nlohmann::json::parse(in);
}

}  // namespace detail

/// File-backed registry (`profiles.json`, `ip_mappings.json`). One writer at a time; readers
/// take immutable snapshots, so a reader never sees a half-applied update.
class IdentityStore {
 public:
  explicit IdentityStore(std::filesystem::path data_dir) : dir_(std::move(data_dir)) { reload(); }

  std::filesystem::path profiles_path() const { return dir_ / "profiles.json"; }
  std::filesystem::path mappings_path() const { return dir_ / "ip_mappings.json"; }

  void reload() {
    std::vector<UserProfile> profiles;
    std::vector<IpMapping> mappings;
    if (auto doc = detail::read_json_file(profiles_path())) profiles = profiles_from_document(*doc);
    if (auto doc = detail::read_json_file(mappings_path())) mappings = mappings_from_document(*doc);
    auto next = std::make_shared<const IdentityRegistry>(std::move(profiles), std::move(mappings));
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
  }

  std::shared_ptr<const IdentityRegistry> snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

  /// Validates then persists; `version` stamps the written documents.
  void replace(IdentityRegistry next, Timestamp version) {
    std::lock_guard writer(write_mutex_);
    commit(std::move(next), version);
  }

  UserProfile upsert_profile(UserProfile p, bool create_only, Timestamp version) {
    std::lock_guard writer(write_mutex_);
    auto next = snapshot()->with_profile(p, create_only);
    commit(std::move(next), version);
    return p;
  }

  IpMapping upsert_mapping(IpMapping m, Timestamp version) {
    std::lock_guard writer(write_mutex_);
    auto next = snapshot()->with_mapping(m);
    commit(std::move(next), version);
    return m;
  }

 private:
  void commit(IdentityRegistry next, Timestamp version) {
    detail::write_file_atomic(profiles_path(), profiles_document(next, version).dump(2) + "\n");
    detail::write_file_atomic(mappings_path(), mappings_document(next, version).dump(2) + "\n");
    auto ptr = std::make_shared<const IdentityRegistry>(std::move(next));
    std::lock_guard lock(mutex_);
    current_ = std::move(ptr);
  }

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::mutex write_mutex_;
  std::shared_ptr<const IdentityRegistry> current_ = std::make_shared<const IdentityRegistry>();
};

}  // namespace carenet
