#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace carenet {

/// Outcome of a registrable-domain lookup.
struct Etld1 {
  enum class Status { Registrable, PublicSuffix, Invalid };

  Status status = Status::Invalid;
  std::string domain;  // eTLD+1 when registrable, the normalized name when a public suffix

  bool registrable() const { return status == Status::Registrable; }
};

/// Public Suffix List matcher: normal, wildcard and exception rules, with the implicit "*"
/// default rule. Rules are stored in a label trie keyed from the rightmost label.
class PublicSuffixList {
 public:
  PublicSuffixList() = default;

  static PublicSuffixList load(std::istream& in) {
    PublicSuffixList psl;
    std::string line;
    while (std::getline(in, line)) {
      auto end = line.find_first_of(" \t\r");
      if (end != std::string::npos) line.resize(end);
      if (line.empty() || line.starts_with("//")) continue;
      psl.add_rule(line);
    }
    return psl;
  }

  static PublicSuffixList load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open public suffix list: " + path);
    return load(in);
  }

  void add_rule(std::string_view rule) {
    bool exception = false;
    if (rule.starts_with('!')) {
      exception = true;
      rule.remove_prefix(1);
    }
    auto labels = split_reversed(to_lower(rule));
    Node* node = &root_;
    for (const auto& label : labels) {
      auto& child = node->children[label];
      if (!child) child = std::make_unique<Node>();
      node = child.get();
    }
    (exception ? node->exception : node->rule) = true;
    ++rule_count_;
  }

  std::size_t size() const { return rule_count_; }

  /// Number of labels in the public suffix of an already-normalized name.
  std::size_t suffix_labels(const std::vector<std::string>& reversed) const {
    std::size_t best = 1;  // implicit "*"
    std::size_t exception_at = 0;
    walk(&root_, reversed, 0, best, exception_at);
    if (exception_at > 0) return exception_at - 1;
    return best;
  }

  Etld1 lookup(std::string_view qname) const {
    Etld1 out;
    std::string name = to_lower(qname);
    if (!name.empty() && name.back() == '.') name.pop_back();
    if (!valid_name(name)) return out;
    auto reversed = split_reversed(name);
    std::size_t n = suffix_labels(reversed);
    if (reversed.size() <= n) {
      out.status = Etld1::Status::PublicSuffix;
      out.domain = name;
      return out;
    }
    out.status = Etld1::Status::Registrable;
    for (std::size_t i = n + 1; i-- > 0;) {
      out.domain += reversed[i];
      if (i != 0) out.domain += '.';
    }
    return out;
  }

  static bool valid_name(std::string_view name) {
    if (name.empty() || name.size() > 253) return false;
    std::size_t label_len = 0;
    for (char c : name) {
      if (c == '.') {
        if (label_len == 0) return false;
        label_len = 0;
        continue;
      }
      auto u = static_cast<unsigned char>(c);
      bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_' || u >= 0x80;
      if (!ok || ++label_len > 63) return false;
    }
    return label_len > 0;
  }

 private:
  struct Node {
    bool rule = false;
    bool exception = false;
    std::map<std::string, std::unique_ptr<Node>, std::less<>> children;
  };

  static std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
  }

  static std::vector<std::string> split_reversed(std::string_view name) {
    std::vector<std::string> labels;
    std::size_t start = 0;
    while (start <= name.size()) {
      auto dot = name.find('.', start);
      if (dot == std::string_view::npos) dot = name.size();
      labels.emplace_back(name.substr(start, dot - start));
      start = dot + 1;
    }
    std::reverse(labels.begin(), labels.end());
    return labels;
  }

  static void walk(const Node* node, const std::vector<std::string>& labels, std::size_t depth,
                   std::size_t& best, std::size_t& exception_at) {
    if (depth == labels.size()) return;
    if (auto it = node->children.find(labels[depth]); it != node->children.end()) {
      const Node* child = it->second.get();
      if (child->exception) exception_at = std::max(exception_at, depth + 1);
      if (child->rule) best = std::max(best, depth + 1);
      walk(child, labels, depth + 1, best, exception_at);
    }
    if (auto it = node->children.find("*"); it != node->children.end()) {
      const Node* child = it->second.get();
      if (child->rule) best = std::max(best, depth + 1);
      walk(child, labels, depth + 1, best, exception_at);
    }
  }

  Node root_;
  std::size_t rule_count_ = 0;
};

inline Etld1 etld1(std::string_view qname, const PublicSuffixList& psl) { return psl.lookup(qname); }

/// CARENET_PSL from the environment, else the snapshot bundled with the build.
inline std::string default_psl_path() {
  if (const char* env = std::getenv("CARENET_PSL"); env && *env) return env;
#ifdef CARENET_DEFAULT_PSL
  return CARENET_DEFAULT_PSL;
#else
  return "data/public_suffix_list.dat";
#endif
}

}  // namespace carenet
