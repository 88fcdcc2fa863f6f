#ifndef HEMBED_HIERARCHY_HPP
#define HEMBED_HIERARCHY_HPP

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hembed/common.hpp"

namespace hembed {

using NodeCode = std::string;
using Term = std::string;

// Ordinal closeness between two coded terms. Only the order carries meaning.
enum class DistanceCategory : int {
  Synonym = 0,      // same code
  Sibling = 1,      // distinct codes sharing a parent
  ParentChild = 2,  // one is the parent of the other
  Unrelated = 3,    // everything else, including cross-tree pairs
};

constexpr int to_index(DistanceCategory c) { return static_cast<int>(c); }

inline DistanceCategory category_from_index(int i) {
  if (i < 0 || i > 3) throw ConfigInvalid("distance category out of range: " + std::to_string(i));
  return static_cast<DistanceCategory>(i);
}

struct ForestStats {
  size_t node_count = 0;
  size_t tree_count = 0;
  size_t min_depth = 0;  // min over trees of longest root-to-leaf node count
  size_t max_depth = 0;  // max over trees of the same
  size_t synonym_count = 0;

  bool operator==(const ForestStats&) const = default;
};

// Immutable forest of coded nodes: parent-child edges plus a code -> synonym
// strings map. All queries are pure and safe for concurrent readers.
class HierarchyForest {
 public:
  HierarchyForest() = default;

  // Builds and validates a forest from raw edges and a code -> strings map.
  static HierarchyForest from_edges(
      const std::vector<std::pair<NodeCode, NodeCode>>& edges,
      const std::vector<std::pair<NodeCode, Term>>& string_rows);

  // Parses the two-file TSV format: `parent<TAB>child` rows and
  // `code<TAB>string` rows, each with a mandatory header when non-empty.
  static HierarchyForest parse(std::istream& hierarchy_file, std::istream& string_file);

  size_t size() const { return codes_.size(); }
  const std::vector<NodeCode>& codes() const { return codes_; }
  bool contains(const NodeCode& code) const { return index_.count(code) != 0; }

  const std::vector<Term>& strings_of(const NodeCode& code) const {
    return strings_[idx(code)];
  }

  std::optional<NodeCode> parent_of(const NodeCode& code) const {
    const int32_t p = parent_[idx(code)];
    return p < 0 ? std::nullopt : std::optional<NodeCode>(codes_[p]);
  }

  std::vector<NodeCode> children_of(const NodeCode& code) const {
    std::vector<NodeCode> out;
    for (uint32_t c : children_[idx(code)]) out.push_back(codes_[c]);
    return out;
  }

  std::vector<NodeCode> roots() const {
    std::vector<NodeCode> out;
    for (uint32_t r : roots_) out.push_back(codes_[r]);
    return out;
  }

  // Root code of the tree containing `code`.
  NodeCode root_of(const NodeCode& code) const { return codes_[root_[idx(code)]]; }

  DistanceCategory distance(const NodeCode& a, const NodeCode& b) const {
    const uint32_t ia = idx(a), ib = idx(b);
    if (ia == ib) return DistanceCategory::Synonym;
    const int32_t pa = parent_[ia], pb = parent_[ib];
    if (pa >= 0 && pa == pb) return DistanceCategory::Sibling;
    if (pa == static_cast<int32_t>(ib) || pb == static_cast<int32_t>(ia))
      return DistanceCategory::ParentChild;
    return DistanceCategory::Unrelated;
  }

  ForestStats stats() const;

  struct PairSample {
    std::vector<std::pair<NodeCode, NodeCode>> pairs;
    bool exhausted = false;  // fewer than the requested limit exist
  };

  // Up to `limit` unordered code pairs at the given distance, sampled
  // uniformly without replacement. Deterministic for fixed inputs. When fewer
  // than `limit` pairs exist the result is flagged exhausted; an empty
  // category yields an empty, exhausted sample rather than an error.
  PairSample enumerate_pairs(DistanceCategory category, size_t limit, uint64_t seed) const;

  // Writes the same TSV format parse() accepts; parse(serialize(f)) == f.
  void serialize(std::ostream& hierarchy_file, std::ostream& string_file) const;

  // New forest containing only the trees rooted at `keep_roots`.
  HierarchyForest subforest(const std::vector<NodeCode>& keep_roots) const;

  bool operator==(const HierarchyForest& o) const {
    return codes_ == o.codes_ && parent_ == o.parent_ && strings_ == o.strings_;
  }

 private:
  std::vector<NodeCode> codes_;  // sorted; index space for everything below
  std::unordered_map<std::string, uint32_t> index_;
  std::vector<int32_t> parent_;                 // -1 for roots
  std::vector<std::vector<uint32_t>> children_; // ascending indices
  std::vector<std::vector<Term>> strings_;      // input order preserved
  std::vector<uint32_t> root_;                  // root index per node
  std::vector<uint32_t> roots_;                 // ascending

  uint32_t idx(const NodeCode& code) const {
    auto it = index_.find(code);
    if (it == index_.end()) throw UnknownCode("unknown code: " + code);
    return it->second;
  }

  static void check_code(const std::string& code, const char* where) {
    if (code.empty())
      throw MalformedLine(std::string(where) + ": empty code");
    if (code.find('\t') != std::string::npos || code.find('\n') != std::string::npos)
      throw MalformedLine(std::string(where) + ": code contains tab or newline");
  }
};

inline HierarchyForest HierarchyForest::from_edges(
    const std::vector<std::pair<NodeCode, NodeCode>>& edges,
    const std::vector<std::pair<NodeCode, Term>>& string_rows) {
  if (string_rows.empty()) throw EmptyInput("string map is empty");

  HierarchyForest f;

  // Collect codes (sorted, unique) and their synonym lists in row order.
  std::map<NodeCode, std::vector<Term>> by_code;
  std::unordered_map<std::string, NodeCode> owner_of_string;
  for (const auto& [code, raw_term] : string_rows) {
    check_code(code, "string map");
    const Term term = trim(raw_term);
    if (term.empty()) throw MalformedLine("string map: empty term for code " + code);
    auto [it, fresh] = owner_of_string.emplace(term, code);
    if (!fresh) {
      if (it->second != code)
        throw AmbiguousString("string \"" + term + "\" maps to codes " + it->second +
                              " and " + code);
      continue;  // exact duplicate row, keep first
    }
    by_code[code].push_back(term);
  }

  f.codes_.reserve(by_code.size());
  for (auto& [code, terms] : by_code) {
    f.index_.emplace(code, static_cast<uint32_t>(f.codes_.size()));
    f.codes_.push_back(code);
    f.strings_.push_back(std::move(terms));
  }

  const size_t n = f.codes_.size();
  f.parent_.assign(n, -1);
  f.children_.assign(n, {});

  std::set<std::pair<uint32_t, uint32_t>> seen_edges;
  for (const auto& [parent, child] : edges) {
    check_code(parent, "hierarchy map");
    check_code(child, "hierarchy map");
    auto pit = f.index_.find(parent);
    auto cit = f.index_.find(child);
    if (pit == f.index_.end())
      throw OrphanCode("edge parent " + parent + " missing from string map");
    if (cit == f.index_.end())
      throw OrphanCode("edge child " + child + " missing from string map");
    const uint32_t p = pit->second, c = cit->second;
    if (!seen_edges.insert({p, c}).second) continue;  // duplicate edge row
    if (f.parent_[c] >= 0)
      throw DuplicateParent("node " + child + " has parents " +
                            f.codes_[f.parent_[c]] + " and " + parent);
    f.parent_[c] = static_cast<int32_t>(p);
    f.children_[p].push_back(c);
  }
  for (auto& ch : f.children_) std::sort(ch.begin(), ch.end());

  // Cycle check: walk parent chains with tricolor marking.
  std::vector<uint8_t> color(n, 0);  // 0 white, 1 grey, 2 black
  for (uint32_t s = 0; s < n; ++s) {
    if (color[s]) continue;
    std::vector<uint32_t> path;
    int32_t v = static_cast<int32_t>(s);
    while (v >= 0 && color[v] == 0) {
      color[v] = 1;
      path.push_back(static_cast<uint32_t>(v));
      v = f.parent_[v];
    }
    if (v >= 0 && color[v] == 1)
      throw CycleDetected("cycle through code " + f.codes_[v]);
    for (uint32_t u : path) color[u] = 2;
  }

  // Roots and per-node root assignment.
  for (uint32_t i = 0; i < n; ++i)
    if (f.parent_[i] < 0) f.roots_.push_back(i);
  f.root_.assign(n, 0);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t v = i;
    while (f.parent_[v] >= 0) v = static_cast<uint32_t>(f.parent_[v]);
    f.root_[i] = v;
  }
  return f;
}

namespace detail {

struct TsvFile {
  std::vector<std::vector<std::string>> rows;
};

// Reads a two-or-three column TSV with an exact header; `#` comment lines are
// skipped only when allow_comments is set. An entirely empty stream is legal
// and yields zero rows.
inline TsvFile read_tsv(std::istream& in, const std::string& header, size_t columns,
                        bool allow_comments) {
  TsvFile out;
  std::string line;
  bool saw_header = false;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (allow_comments && line[0] == '#') continue;
    if (!saw_header) {
      if (line != header)
        throw MalformedLine("line " + std::to_string(lineno) + ": expected header \"" +
                            header + "\"");
      saw_header = true;
      continue;
    }
    auto fields = split(line, '\t');
    if (fields.size() != columns)
      throw MalformedLine("line " + std::to_string(lineno) + ": expected " +
                          std::to_string(columns) + " tab-separated columns, got " +
                          std::to_string(fields.size()));
    out.rows.push_back(std::move(fields));
  }
  return out;
}

}  // namespace detail

inline HierarchyForest HierarchyForest::parse(std::istream& hierarchy_file,
                                              std::istream& string_file) {
  const auto hier = detail::read_tsv(hierarchy_file, "parent\tchild", 2, true);
  const auto strs = detail::read_tsv(string_file, "code\tstring", 2, false);

  std::vector<std::pair<NodeCode, NodeCode>> edges;
  edges.reserve(hier.rows.size());
  for (const auto& r : hier.rows) edges.emplace_back(trim(r[0]), trim(r[1]));

  std::vector<std::pair<NodeCode, Term>> string_rows;
  string_rows.reserve(strs.rows.size());
  for (const auto& r : strs.rows) string_rows.emplace_back(trim(r[0]), r[1]);

  return from_edges(edges, string_rows);
}

inline ForestStats HierarchyForest::stats() const {
  ForestStats s;
  s.node_count = codes_.size();
  s.tree_count = roots_.size();
  for (const auto& terms : strings_) s.synonym_count += terms.size();
  bool first = true;
  for (uint32_t r : roots_) {
    // Longest root-to-leaf path, counted in nodes.
    size_t depth = 0;
    std::vector<std::pair<uint32_t, size_t>> stack{{r, 1}};
    while (!stack.empty()) {
      auto [v, d] = stack.back();
      stack.pop_back();
      depth = std::max(depth, d);
      for (uint32_t c : children_[v]) stack.push_back({c, d + 1});
    }
    if (first) {
      s.min_depth = s.max_depth = depth;
      first = false;
    } else {
      s.min_depth = std::min(s.min_depth, depth);
      s.max_depth = std::max(s.max_depth, depth);
    }
  }
  return s;
}

inline HierarchyForest::PairSample HierarchyForest::enumerate_pairs(
    DistanceCategory category, size_t limit, uint64_t seed) const {
  if (limit < 1) throw ConfigInvalid("enumerate_pairs: limit must be >= 1");
  Rng rng(mix(seed, static_cast<uint64_t>(to_index(category))));
  const uint32_t n = static_cast<uint32_t>(codes_.size());

  std::vector<std::pair<uint32_t, uint32_t>> candidates;
  switch (category) {
    case DistanceCategory::Synonym:
      for (uint32_t i = 0; i < n; ++i)
        if (strings_[i].size() >= 2) candidates.push_back({i, i});
      break;
    case DistanceCategory::Sibling:
      for (uint32_t p = 0; p < n; ++p) {
        const auto& ch = children_[p];
        for (size_t a = 0; a < ch.size(); ++a)
          for (size_t b = a + 1; b < ch.size(); ++b)
            candidates.push_back({ch[a], ch[b]});
      }
      break;
    case DistanceCategory::ParentChild:
      for (uint32_t c = 0; c < n; ++c)
        if (parent_[c] >= 0)
          candidates.push_back({std::min<uint32_t>(parent_[c], c),
                                std::max<uint32_t>(parent_[c], c)});
      break;
    case DistanceCategory::Unrelated: {
      // The category-3 universe is quadratic; rejection-sample with a cap of
      // 50x the requested limit before declaring it exhausted.
      PairSample out;
      if (n >= 2) {
        std::set<std::pair<uint32_t, uint32_t>> seen;
        const size_t max_attempts = 50 * limit;
        for (size_t attempt = 0; attempt < max_attempts && out.pairs.size() < limit;
             ++attempt) {
          uint32_t a = static_cast<uint32_t>(rng.below(n));
          uint32_t b = static_cast<uint32_t>(rng.below(n));
          if (a == b) continue;
          if (a > b) std::swap(a, b);
          if (distance(codes_[a], codes_[b]) != DistanceCategory::Unrelated) continue;
          if (!seen.insert({a, b}).second) continue;
          out.pairs.emplace_back(codes_[a], codes_[b]);
        }
      }
      out.exhausted = out.pairs.size() < limit;
      return out;
    }
  }

  PairSample out;
  if (candidates.size() <= limit) {
    out.exhausted = candidates.size() < limit;
    for (auto [a, b] : candidates) out.pairs.emplace_back(codes_[a], codes_[b]);
    return out;
  }
  // Partial Fisher-Yates: uniform without replacement, order deterministic.
  for (size_t i = 0; i < limit; ++i) {
    const size_t j = i + rng.index(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
    out.pairs.emplace_back(codes_[candidates[i].first], codes_[candidates[i].second]);
  }
  return out;
}

inline void HierarchyForest::serialize(std::ostream& hierarchy_file,
                                       std::ostream& string_file) const {
  hierarchy_file << "parent\tchild\n";
  for (uint32_t p = 0; p < codes_.size(); ++p)
    for (uint32_t c : children_[p])
      hierarchy_file << codes_[p] << '\t' << codes_[c] << '\n';
  string_file << "code\tstring\n";
  for (uint32_t i = 0; i < codes_.size(); ++i)
    for (const Term& t : strings_[i]) string_file << codes_[i] << '\t' << t << '\n';
}

inline HierarchyForest HierarchyForest::subforest(
    const std::vector<NodeCode>& keep_roots) const {
  std::unordered_set<uint32_t> keep;
  for (const auto& r : keep_roots) {
    const uint32_t ri = idx(r);
    if (parent_[ri] >= 0)
      throw ConfigInvalid("subforest: " + r + " is not a root");
    keep.insert(ri);
  }
  std::vector<std::pair<NodeCode, NodeCode>> edges;
  std::vector<std::pair<NodeCode, Term>> string_rows;
  for (uint32_t i = 0; i < codes_.size(); ++i) {
    if (!keep.count(root_[i])) continue;
    for (const Term& t : strings_[i]) string_rows.emplace_back(codes_[i], t);
    for (uint32_t c : children_[i]) edges.emplace_back(codes_[i], codes_[c]);
  }
  return from_edges(edges, string_rows);
}

}  // namespace hembed

#endif  // HEMBED_HIERARCHY_HPP
