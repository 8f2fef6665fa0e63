#include <gtest/gtest.h>

#include <filesystem>

#include "carenet/identity.hpp"

using namespace carenet;
namespace fs = std::filesystem;

namespace {

IpMapping mapping(const char* addr, const char* user, const char* from, std::optional<const char*> to = std::nullopt) {
  IpMapping m;
  m.address = *IpAddress::parse(addr);
  m.user_id = user;
  m.valid_from = *parse_iso(from);
  if (to) m.valid_to = parse_iso(*to);
  return m;
}

fs::path temp_dir(const char* name) {
  auto dir = fs::temp_directory_path() / ("carenet-" + std::string(name) + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Identity, ResolvesByValidityInterval) {
  IdentityRegistry r({}, {mapping("192.168.1.20", "alice", "2026-01-01T00:00:00Z", "2026-02-01T00:00:00Z"),
                          mapping("192.168.1.20", "bob", "2026-02-01T00:00:00Z")});
  auto addr = *IpAddress::parse("192.168.1.20");
  EXPECT_EQ(r.resolve(addr, *parse_iso("2026-01-31T23:59:59Z")), "alice");
  EXPECT_EQ(r.resolve(addr, *parse_iso("2026-02-01T00:00:00Z")), "bob");
  EXPECT_EQ(r.resolve(addr, *parse_iso("2025-12-31T00:00:00Z")), kAllOther);
  EXPECT_EQ(r.resolve(*IpAddress::parse("192.168.1.21"), *parse_iso("2026-01-15T00:00:00Z")), kAllOther);
}

TEST(Identity, RejectsOverlapsAndDuplicates) {
  EXPECT_THROW(IdentityRegistry({}, {mapping("10.0.0.1", "a", "2026-01-01T00:00:00Z"),
                                     mapping("10.0.0.1", "b", "2026-03-01T00:00:00Z")}),
               RegistryError);
  UserProfile p;
  p.user_id = "a";
  EXPECT_THROW(IdentityRegistry({p, p}, {}), RegistryError);
  IdentityRegistry r({p}, {});
  EXPECT_THROW(r.with_profile(p, true), RegistryError);
  EXPECT_NO_THROW(r.with_profile(p, false));
}

TEST(Identity, DocumentValidationNamesTheField) {
  try {
    profiles_from_document(nlohmann::json::parse(R"({"profiles":[{"user_id":"x","habitual_wake":"25:00"}]})"));
    FAIL();
  } catch (const RegistryError& e) {
    EXPECT_EQ(e.path(), "profiles[0].habitual_wake");
  }
  try {
    mappings_from_document(nlohmann::json::parse(R"({"mappings":[{"address":"1.2.3","user_id":"x"}]})"));
    FAIL();
  } catch (const RegistryError& e) {
    EXPECT_EQ(e.path(), "mappings[0].address");
  }
  EXPECT_THROW(profiles_from_document(nlohmann::json::parse(R"([{"user_id":"ALL_OTHER"}])")), RegistryError);
  EXPECT_THROW(profiles_from_document(nlohmann::json::parse(R"([{"user_id":"../x"}])")), RegistryError);
}

TEST(Identity, DocumentsRoundTrip) {
  UserProfile p;
  p.user_id = "alice";
  p.display_name = "Alice";
  p.habitual_wake = *parse_clock("06:45");
  p.workdays = {Weekday::Sat};
  p.notes = "night shifts";
  IdentityRegistry r({p}, {mapping("fd00::20", "alice", "2026-01-01T00:00:00Z")});
  Timestamp v = *parse_iso("2026-05-01T00:00:00Z");
  auto profiles = profiles_from_document(nlohmann::json::parse(profiles_document(r, v).dump()));
  auto mappings = mappings_from_document(nlohmann::json::parse(mappings_document(r, v).dump()));
  EXPECT_EQ(profiles, r.profiles());
  EXPECT_EQ(mappings, r.mappings());
}

TEST(Identity, StorePersistsAndSnapshotsStayImmutable) {
  auto dir = temp_dir("identity");
  IdentityStore store(dir);
  auto before = store.snapshot();
  UserProfile p;
  p.user_id = "alice";
  store.upsert_profile(p, true, *parse_iso("2026-05-01T00:00:00Z"));
  store.upsert_mapping(mapping("192.168.1.20", "alice", "2026-01-01T00:00:00Z"), *parse_iso("2026-05-01T00:00:00Z"));
  EXPECT_TRUE(before->profiles().empty());
  IdentityStore reopened(dir);
  ASSERT_EQ(reopened.snapshot()->profiles().size(), 1u);
  EXPECT_EQ(reopened.snapshot()->resolve(*IpAddress::parse("192.168.1.20"), *parse_iso("2026-03-01T00:00:00Z")),
            "alice");
  EXPECT_THROW(store.upsert_profile(p, true, Timestamp{}), RegistryError);
  fs::remove_all(dir);
}
