#ifndef HEMBED_MINING_HPP
#define HEMBED_MINING_HPP

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hembed/common.hpp"
#include "hembed/encoder.hpp"
#include "hembed/hierarchy.hpp"

namespace hembed {

struct MinerConfig {
  double margin = 0.25;
  // Members sampled per anchor for distance categories 0..3.
  std::array<uint32_t, 4> per_category_counts{2, 2, 2, 4};
  uint64_t seed = 0;
  // Hard mining keeps triplets with cos(a,p) - cos(a,n) < margin. The literal
  // flipped direction (> margin, retaining the easy triplets) stays reachable
  // for comparison runs.
  bool keep_easy = false;

  void validate() const {
    if (!(margin > 0)) throw ConfigInvalid("miner: margin must be > 0");
    if (per_category_counts[0] == 0)
      throw ConfigInvalid("miner: need a positive (category-0) count > 0");
    if (per_category_counts[1] + per_category_counts[2] + per_category_counts[3] == 0)
      throw ConfigInvalid("miner: need at least one negative count > 0");
  }
};

struct Triplet {
  Term anchor;
  Term positive;
  Term negative;
};

struct AnchorMember {
  Term term;
  DistanceCategory category;

  bool operator==(const AnchorMember&) const = default;
};

// An anchor with its comparison set, partitioned implicitly by category: for
// any threshold d0, members with category <= d0 are the close side and the
// rest the far side.
struct AnchorGroup {
  Term anchor;
  std::vector<AnchorMember> members;
};

struct Minibatch {
  std::vector<AnchorGroup> groups;
};

// Keeps the triplets whose positive-negative cosine gap is below the margin
// (the ones still violating or nearly violating it); with keep_easy set,
// keeps the complement (gap > margin). Embeds each distinct term once;
// survivor order matches input order.
inline std::vector<Triplet> mine_hard_triplets(const EmbeddingModel& model,
                                               const std::vector<Triplet>& candidates,
                                               const MinerConfig& config) {
  config.validate();
  std::unordered_map<std::string, EmbeddingVector> cache;
  auto vec = [&](const Term& t) -> const EmbeddingVector& {
    auto it = cache.find(t);
    if (it == cache.end()) it = cache.emplace(t, model.embed(t)).first;
    return it->second;
  };
  std::vector<Triplet> kept;
  for (const Triplet& t : candidates) {
    if (t.positive == t.negative)
      throw ConfigInvalid("miner: triplet with positive == negative");
    const double gap = cosine(vec(t.anchor), vec(t.positive)) -
                       cosine(vec(t.anchor), vec(t.negative));
    const bool take = config.keep_easy ? gap > config.margin : gap < config.margin;
    if (take) kept.push_back(t);
  }
  return kept;
}

namespace detail {

// Draw up to k items from a deterministically ordered candidate list.
template <class T>
inline std::vector<T> sample_without_replacement(std::vector<T> candidates, size_t k,
                                                 Rng& rng) {
  if (candidates.size() <= k) return candidates;
  std::vector<T> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + rng.index(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
    out.push_back(candidates[i]);
  }
  return out;
}

inline Term pick_string(const HierarchyForest& forest, const NodeCode& code, Rng& rng) {
  const auto& strs = forest.strings_of(code);
  return strs[rng.index(strs.size())];
}

}  // namespace detail

// Builds one anchor group per anchor code: the anchor term is a seeded choice
// among the code's strings, members are sampled per distance category from
// the forest (synonyms for 0, siblings for 1, parent/children for 2, far
// codes for 3). Per-anchor randomness derives from (seed, code), so the
// result does not depend on anchor processing order. Anchors that yield no
// members are dropped and counted in *dropped.
inline Minibatch build_anchor_groups(const HierarchyForest& forest,
                                     const std::vector<NodeCode>& anchors,
                                     const MinerConfig& config, size_t* dropped = nullptr) {
  config.validate();
  Minibatch batch;
  size_t drop_count = 0;

  for (const NodeCode& code : anchors) {
    const auto& own_strings = forest.strings_of(code);  // throws UnknownCode
    Rng rng(mix(config.seed, fnv1a64(code)));
    AnchorGroup group;
    const size_t anchor_pick = rng.index(own_strings.size());
    group.anchor = own_strings[anchor_pick];

    // Category 0: the code's other synonym strings.
    {
      std::vector<Term> pool;
      for (size_t i = 0; i < own_strings.size(); ++i)
        if (i != anchor_pick) pool.push_back(own_strings[i]);
      for (auto& t : detail::sample_without_replacement(std::move(pool),
                                                        config.per_category_counts[0], rng))
        group.members.push_back({std::move(t), DistanceCategory::Synonym});
    }

    // Category 1: strings of sibling codes.
    const auto parent = forest.parent_of(code);
    {
      std::vector<NodeCode> siblings;
      if (parent)
        for (auto& c : forest.children_of(*parent))
          if (c != code) siblings.push_back(std::move(c));
      for (const auto& c : detail::sample_without_replacement(
               std::move(siblings), config.per_category_counts[1], rng))
        group.members.push_back({detail::pick_string(forest, c, rng),
                                 DistanceCategory::Sibling});
    }

    // Category 2: the parent and the children.
    {
      std::vector<NodeCode> near;
      if (parent) near.push_back(*parent);
      for (auto& c : forest.children_of(code)) near.push_back(std::move(c));
      for (const auto& c : detail::sample_without_replacement(
               std::move(near), config.per_category_counts[2], rng))
        group.members.push_back({detail::pick_string(forest, c, rng),
                                 DistanceCategory::ParentChild});
    }

    // Category 3: half same-tree non-relatives, half cross-tree codes, when
    // both exist; shortfalls on one side are topped up from the other.
    {
      const uint32_t want = config.per_category_counts[3];
      const NodeCode anchor_root = forest.root_of(code);
      const auto& codes = forest.codes();
      std::unordered_set<std::string> taken;
      std::vector<NodeCode> far;
      auto draw = [&](uint32_t k, int side) {  // 0 same-tree, 1 cross-tree, 2 any
        for (size_t attempt = 0; attempt < 50 * static_cast<size_t>(k) && k > 0;
             ++attempt) {
          const NodeCode& c = codes[rng.index(codes.size())];
          if (taken.count(c)) continue;
          if (forest.distance(code, c) != DistanceCategory::Unrelated) continue;
          const bool same_tree = forest.root_of(c) == anchor_root;
          if (side == 0 && !same_tree) continue;
          if (side == 1 && same_tree) continue;
          taken.insert(c);
          far.push_back(c);
          --k;
        }
        return k;  // remaining shortfall
      };
      if (want > 0) {
        uint32_t shortfall = 0;
        if (forest.roots().size() >= 2) {
          shortfall += draw(want / 2, 0);
          shortfall += draw(want - want / 2, 1);
        } else {
          shortfall = draw(want, 0);
        }
        if (shortfall > 0) draw(shortfall, 2);
      }
      for (const auto& c : far)
        group.members.push_back({detail::pick_string(forest, c, rng),
                                 DistanceCategory::Unrelated});
    }

    if (group.members.empty()) {
      ++drop_count;
      continue;
    }
    batch.groups.push_back(std::move(group));
  }

  if (dropped) *dropped = drop_count;
  return batch;
}

struct LabeledPair {
  Term a;
  Term b;
  DistanceCategory category;

  bool operator==(const LabeledPair&) const = default;
};

// Stratified evaluation pairs: up to per_category code pairs per distance
// category, each materialized as one seeded string choice per side (two
// distinct strings for category 0). Shortfalls report how many pairs were
// missing per category.
inline std::vector<LabeledPair> sample_eval_pairs(const HierarchyForest& forest,
                                                  size_t per_category, uint64_t seed,
                                                  std::array<size_t, 4>* shortfalls = nullptr) {
  if (per_category < 1) throw ConfigInvalid("sample_eval_pairs: per_category must be >= 1");
  std::vector<LabeledPair> out;
  std::array<size_t, 4> missing{per_category, per_category, per_category, per_category};

  for (int cat = 0; cat <= 3; ++cat) {
    const DistanceCategory category = category_from_index(cat);
    const auto sample = forest.enumerate_pairs(category, per_category, seed);
    for (const auto& [ca, cb] : sample.pairs) {
      Rng rng(mix(mix(seed, fnv1a64(ca)), mix(fnv1a64(cb), static_cast<uint64_t>(cat))));
      if (category == DistanceCategory::Synonym) {
        const auto& strs = forest.strings_of(ca);
        const size_t i = rng.index(strs.size());
        size_t j = rng.index(strs.size() - 1);
        if (j >= i) ++j;
        out.push_back({strs[i], strs[j], category});
      } else {
        out.push_back({detail::pick_string(forest, ca, rng),
                       detail::pick_string(forest, cb, rng), category});
      }
    }
    missing[cat] -= sample.pairs.size();
  }

  if (shortfalls) *shortfalls = missing;
  return out;
}

// ---------------------------------------------------------------------------
// Flat pair files and labeled pair files (TSV)
// ---------------------------------------------------------------------------

// `term_a<TAB>term_b`, one positive pair per line.
inline std::vector<std::pair<Term, Term>> read_pair_file(std::istream& in) {
  const auto tsv = detail::read_tsv(in, "term_a\tterm_b", 2, false);
  std::vector<std::pair<Term, Term>> out;
  out.reserve(tsv.rows.size());
  for (const auto& r : tsv.rows) {
    Term a = trim(r[0]), b = trim(r[1]);
    if (a.empty() || b.empty()) throw MalformedLine("pair file: empty term");
    out.emplace_back(std::move(a), std::move(b));
  }
  return out;
}

// `term_a<TAB>term_b<TAB>distance`.
inline void write_labeled_pairs(std::ostream& out, const std::vector<LabeledPair>& pairs) {
  out << "term_a\tterm_b\tdistance\n";
  for (const auto& p : pairs)
    out << p.a << '\t' << p.b << '\t' << to_index(p.category) << '\n';
}

inline std::vector<LabeledPair> read_labeled_pairs(std::istream& in) {
  const auto tsv = detail::read_tsv(in, "term_a\tterm_b\tdistance", 3, false);
  std::vector<LabeledPair> out;
  out.reserve(tsv.rows.size());
  for (const auto& r : tsv.rows) {
    Term a = trim(r[0]), b = trim(r[1]);
    if (a.empty() || b.empty()) throw MalformedLine("labeled pairs: empty term");
    int cat;
    try {
      cat = std::stoi(trim(r[2]));
    } catch (const std::exception&) {
      throw MalformedLine("labeled pairs: bad distance \"" + r[2] + "\"");
    }
    out.push_back({std::move(a), std::move(b), category_from_index(cat)});
  }
  return out;
}

}  // namespace hembed

#endif  // HEMBED_MINING_HPP
