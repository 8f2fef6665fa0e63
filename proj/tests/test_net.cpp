#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "carenet/ip.hpp"
#include "carenet/psl.hpp"

using namespace carenet;

TEST(Ip, ParseAndFormat) {
  EXPECT_EQ(IpAddress::parse("192.168.001.010"), std::nullopt);
  EXPECT_EQ(IpAddress::parse("10.0.0.1")->to_string(), "10.0.0.1");
  EXPECT_EQ(IpAddress::parse("2001:DB8::1")->to_string(), "2001:db8::1");
  EXPECT_FALSE(IpAddress::parse("256.1.1.1"));
  EXPECT_FALSE(IpAddress::parse("host"));
  EXPECT_TRUE(IpAddress::parse("10.0.0.1")->is_v4());
  EXPECT_FALSE(IpAddress::parse("fd00::1")->is_v4());
}

TEST(Ip, CidrAndLocality) {
  auto c = Cidr::parse("172.16.0.0/12").value();
  EXPECT_TRUE(c.contains(*IpAddress::parse("172.31.255.255")));
  EXPECT_FALSE(c.contains(*IpAddress::parse("172.32.0.0")));
  EXPECT_FALSE(c.contains(*IpAddress::parse("fd00::1")));
  EXPECT_FALSE(Cidr::parse("10.0.0.0/33"));
  auto local = default_local_prefixes();
  for (auto s : {"10.1.2.3", "192.168.0.5", "172.16.4.10", "fd12::5", "fe80::1"})
    EXPECT_TRUE(is_local(*IpAddress::parse(s), local)) << s;
  for (auto s : {"8.8.8.8", "203.0.113.5", "2001:db8::1"}) EXPECT_FALSE(is_local(*IpAddress::parse(s), local)) << s;
}

TEST(Ip, Direction) {
  auto local = default_local_prefixes();
  auto a = *IpAddress::parse("192.168.1.2"), b = *IpAddress::parse("192.168.1.3"), w = *IpAddress::parse("1.1.1.1");
  EXPECT_EQ(classify_direction(a, w, local), Direction::Upstream);
  EXPECT_EQ(classify_direction(w, a, local), Direction::Downstream);
  EXPECT_EQ(classify_direction(a, b, local), Direction::Internal);
  EXPECT_EQ(classify_direction(w, w, local), Direction::External);
}

namespace {

const char* kRules = R"(// test rules
com
org
uk
co.uk
*.ck
!www.ck
jp
*.kawasaki.jp
!city.kawasaki.jp
de
blogspot.com
)";

PublicSuffixList test_psl() {
  std::istringstream in(kRules);
  return PublicSuffixList::load(in);
}

std::vector<std::string> labels_of(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, '.')) out.push_back(part);
  return out;
}

bool rule_matches(const std::vector<std::string>& rule, const std::vector<std::string>& name) {
  if (rule.size() > name.size()) return false;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const auto& r = rule[rule.size() - 1 - i];
    if (r != "*" && r != name[name.size() - 1 - i]) return false;
  }
  return true;
}

// Straight reading of the matching algorithm: exceptions win, else the longest rule, else "*".
std::optional<std::string> naive_etld1(const std::string& name) {
  std::istringstream in(kRules);
  std::string line;
  auto labels = labels_of(name);
  std::size_t best = 1;
  std::optional<std::size_t> exception;
  while (std::getline(in, line)) {
    if (line.empty() || line.starts_with("//")) continue;
    bool ex = line[0] == '!';
    auto rule = labels_of(ex ? line.substr(1) : line);
    if (!rule_matches(rule, labels)) continue;
    if (ex) exception = rule.size() - 1;
    else best = std::max(best, rule.size());
  }
  std::size_t n = exception ? *exception : best;
  if (labels.size() <= n) return std::nullopt;
  std::string out;
  for (std::size_t i = labels.size() - n - 1; i < labels.size(); ++i) out += (out.empty() ? "" : ".") + labels[i];
  return out;
}

}  // namespace

TEST(Psl, KnownCases) {
  auto psl = test_psl();
  EXPECT_EQ(psl.lookup("www.news-portal.co.uk").domain, "news-portal.co.uk");
  EXPECT_EQ(psl.lookup("WWW.Example.COM.").domain, "example.com");
  EXPECT_EQ(psl.lookup("a.b.foo.ck").domain, "b.foo.ck");
  EXPECT_EQ(psl.lookup("www.ck").domain, "www.ck");
  EXPECT_EQ(psl.lookup("x.city.kawasaki.jp").domain, "city.kawasaki.jp");
  EXPECT_EQ(psl.lookup("unlisted.example").domain, "unlisted.example");
  EXPECT_EQ(psl.lookup("co.uk").status, Etld1::Status::PublicSuffix);
  EXPECT_EQ(psl.lookup("bad..name").status, Etld1::Status::Invalid);
  EXPECT_EQ(psl.lookup("").status, Etld1::Status::Invalid);
}

TEST(Psl, TrieAgreesWithNaiveMatcher) {
  auto psl = test_psl();
  std::vector<std::string> pool{"com", "org", "uk", "co", "ck", "www", "jp", "kawasaki", "city", "de",
                                "blogspot", "foo", "bar", "example"};
  std::mt19937_64 rng(42);
  for (int i = 0; i < 20000; ++i) {
    int n = 1 + static_cast<int>(rng() % 5);
    std::string name;
    for (int k = 0; k < n; ++k) name += (k ? "." : "") + pool[rng() % pool.size()];
    auto got = psl.lookup(name);
    auto want = naive_etld1(name);
    if (want) {
      EXPECT_TRUE(got.registrable()) << name;
      EXPECT_EQ(got.domain, *want) << name;
    } else {
      EXPECT_EQ(got.status, Etld1::Status::PublicSuffix) << name;
    }
  }
}

TEST(Psl, ShippedSnapshotLoads) {
  auto psl = PublicSuffixList::load_file(default_psl_path());
  EXPECT_GT(psl.size(), 5000u);
  EXPECT_EQ(psl.lookup("www.bbc.co.uk").domain, "bbc.co.uk");
  EXPECT_EQ(psl.lookup("user.github.io").domain, "user.github.io");
  EXPECT_EQ(psl.lookup("www.site-1-2.de").domain, "site-1-2.de");
}
