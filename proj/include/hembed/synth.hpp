#ifndef HEMBED_SYNTH_HPP
#define HEMBED_SYNTH_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hembed/common.hpp"
#include "hembed/hierarchy.hpp"

namespace hembed {

struct SynthConfig {
  uint32_t n_trees = 20;
  uint32_t depth = 5;      // levels, counted in nodes (root = level 1)
  uint32_t branching = 3;
  uint32_t synonyms_per_node = 4;
  uint32_t noise_tokens = 1;
  uint64_t seed = 0;

  uint64_t node_count() const {
    uint64_t per_tree = 0, level = 1;
    for (uint32_t d = 0; d < depth; ++d) {
      per_tree += level;
      level *= branching;
      if (per_tree > 100000000ULL) throw ConfigInvalid("synth: forest too large");
    }
    return per_tree * n_trees;
  }

  void validate() const {
    if (n_trees < 1) throw ConfigInvalid("synth: n_trees must be >= 1");
    if (depth < 2) throw ConfigInvalid("synth: depth must be >= 2");
    if (branching < 2) throw ConfigInvalid("synth: branching must be >= 2");
    if (synonyms_per_node < 1) throw ConfigInvalid("synth: synonyms_per_node must be >= 1");
    if (node_count() < 2) throw ConfigInvalid("synth: forest must have >= 2 nodes");
  }
};

namespace detail {

// Pronounceable 4-6 letter token: alternating consonant/vowel syllables.
inline std::string make_token(Rng& rng) {
  static constexpr char kConsonants[] = "bcdfghjklmnpqrstvwxz";
  static constexpr char kVowels[] = "aeiou";
  const size_t len = 4 + rng.index(3);
  std::string t;
  t.reserve(len);
  for (size_t i = 0; i < len; ++i)
    t.push_back(i % 2 == 0 ? kConsonants[rng.index(20)] : kVowels[rng.index(5)]);
  return t;
}

// Token pools sliced from one seeded vocabulary, shared across all trees of
// a generation so structure learned on some trees transfers to held-out
// ones. Variant and noise tokens are drawn from the same pool as node
// tokens: synonym-side variation then cannot be separated from structural
// signal by zeroing out a dedicated token class.
struct SynthVocab {
  std::vector<std::string> own;    // node stems; also variants and noise
  std::vector<std::string> level;  // sibling-group tokens, keyed on the parent
  std::vector<std::string> variant;
  std::vector<std::string> noise;

  explicit SynthVocab(uint64_t seed) {
    Rng rng(mix(seed, 0x766f6361ULL));  // "voca"
    std::unordered_set<std::string> seen;
    std::vector<std::string> all;
    while (all.size() < 352) {
      std::string t = make_token(rng);
      if (seen.insert(t).second) all.push_back(std::move(t));
    }
    own.assign(all.begin(), all.begin() + 256);
    level.assign(all.begin() + 256, all.begin() + 352);
    variant = own;
    noise = own;
  }
};

}  // namespace detail

// Generates a complete `branching`-ary forest whose strings carry lexical
// signal correlated with tree proximity: a node's canonical string is the
// concatenation, along its root path, of a sibling-group token (keyed on the
// parent) and a node token, so ancestors share prefixes and siblings overlap
// more than parent-child pairs. Sibling node tokens are single-character
// mutations of a stem drawn by their parent, which keeps token-set overlap
// ordered by distance while making siblings nearly identical at the
// character level, the regime where synonym-vs-sibling discrimination is
// genuinely hard. Extra synonyms append a variant token and shuffle word
// order; noise tokens are appended to every string.
inline HierarchyForest generate(const SynthConfig& config) {
  config.validate();
  const detail::SynthVocab vocab(config.seed);

  const uint64_t own_key = mix(config.seed, 1);
  const uint64_t level_key = mix(config.seed, 2);
  const uint64_t var_key = mix(config.seed, 3);
  const uint64_t noise_key = mix(config.seed, 4);
  const uint64_t stem_key = mix(config.seed, 5);

  std::vector<std::pair<NodeCode, NodeCode>> edges;
  std::vector<std::pair<NodeCode, Term>> string_rows;
  std::unordered_set<std::string> used_strings;

  // Token lists per node, reused as prefixes by descendants.
  std::unordered_map<NodeCode, std::vector<std::string>> base_tokens;

  auto join = [](const std::vector<std::string>& tokens) {
    std::string s;
    for (const auto& t : tokens) {
      if (!s.empty()) s.push_back(' ');
      s += t;
    }
    return s;
  };

  auto append_noise = [&](std::vector<std::string>& tokens, const NodeCode& code,
                          uint32_t syn, uint64_t salt) {
    for (uint32_t k = 0; k < config.noise_tokens; ++k) {
      const std::string key =
          code + "|" + std::to_string(syn) + "|" + std::to_string(k);
      tokens.push_back(
          vocab.noise[fnv1a64(key, mix(noise_key, salt)) % vocab.noise.size()]);
    }
  };

  // Roots draw their node token directly; children realize a stem drawn by
  // the parent with one character rewritten per sibling ordinal.
  auto own_token = [&](const NodeCode& code, const NodeCode* parent, uint32_t ordinal,
                       uint64_t salt) {
    if (!parent) return vocab.own[fnv1a64(code, mix(own_key, salt)) % vocab.own.size()];
    std::string stem =
        vocab.own[fnv1a64(*parent, mix(stem_key, salt)) % vocab.own.size()];
    static constexpr char kLetters[] = "abcdefghijklmnopqrstuvwxyz";
    const size_t pos = fnv1a64(*parent, mix(own_key, 11)) % stem.size();
    stem[pos] = kLetters[(fnv1a64(*parent, mix(own_key, 13)) + ordinal + salt) % 26];
    return stem;
  };

  auto emit_node = [&](const NodeCode& code, const NodeCode* parent, uint32_t ordinal) {
    // Canonical tokens: parent prefix, then sibling-group token, then own.
    std::vector<std::string> tokens;
    if (parent) {
      tokens = base_tokens.at(*parent);
      tokens.push_back(
          vocab.level[fnv1a64(*parent, level_key) % vocab.level.size()]);
    }
    std::string canonical;
    for (uint64_t salt = 0;; ++salt) {
      std::vector<std::string> attempt = tokens;
      attempt.push_back(own_token(code, parent, ordinal, salt));
      std::vector<std::string> with_noise = attempt;
      append_noise(with_noise, code, 0, salt);
      canonical = join(with_noise);
      if (used_strings.insert(canonical).second) {
        tokens = std::move(attempt);
        break;
      }
      if (salt > 100) throw ConfigInvalid("synth: cannot find unique strings");
    }
    base_tokens.emplace(code, tokens);
    string_rows.emplace_back(code, canonical);

    for (uint32_t j = 1; j < config.synonyms_per_node; ++j) {
      const std::string jkey = code + "#" + std::to_string(j);
      for (uint64_t salt = 0;; ++salt) {
        std::vector<std::string> syn = tokens;
        syn.push_back(
            vocab.variant[fnv1a64(jkey, mix(var_key, salt)) % vocab.variant.size()]);
        Rng shuffle_rng(mix(config.seed, fnv1a64(jkey, salt)));
        shuffle_rng.shuffle(syn);
        append_noise(syn, code, j, salt);
        const std::string text = join(syn);
        if (used_strings.insert(text).second) {
          string_rows.emplace_back(code, text);
          break;
        }
        if (salt > 100) throw ConfigInvalid("synth: cannot find unique strings");
      }
    }
  };

  for (uint32_t t = 0; t < config.n_trees; ++t) {
    const NodeCode root = "t" + std::to_string(t);
    emit_node(root, nullptr, 0);
    std::vector<NodeCode> frontier{root};
    for (uint32_t level = 1; level < config.depth; ++level) {
      std::vector<NodeCode> next;
      next.reserve(frontier.size() * config.branching);
      for (const NodeCode& parent : frontier) {
        for (uint32_t i = 0; i < config.branching; ++i) {
          const NodeCode child = parent + "." + std::to_string(i);
          edges.emplace_back(parent, child);
          emit_node(child, &parent, i);
          next.push_back(child);
        }
      }
      frontier = std::move(next);
    }
  }

  return HierarchyForest::from_edges(edges, string_rows);
}

}  // namespace hembed

#endif  // HEMBED_SYNTH_HPP
