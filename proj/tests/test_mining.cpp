#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>

#include "hembed/mining.hpp"
#include "oracles.hpp"

using namespace hembed;

namespace {

// Model where single-character terms hit exactly one bucket each, so cosines
// between them can be dialed in directly.
struct HandModel {
  EmbeddingModel model;

  explicit HandModel() : model(EmbeddingModel::zeros(config())) {}

  static EncoderConfig config() {
    EncoderConfig cfg;
    cfg.dim = 2;
    cfg.n_buckets = 4096;
    cfg.include_word_unigrams = false;
    return cfg;
  }

  void set(const std::string& term, double x, double y) {
    const auto fs = model.featurize(term);
    REQUIRE(fs.bucket_ids.size() == 1);
    auto row = model.row(fs.bucket_ids[0]);
    row[0] = static_cast<float>(x);
    row[1] = static_cast<float>(y);
  }
};

// Unit vector at a chosen cosine against (1, 0).
std::pair<double, double> at_cosine(double c) { return {c, std::sqrt(1.0 - c * c)}; }

HierarchyForest lab_forest() {
  std::istringstream h(
      "parent\tchild\n"
      "LP29693-6\tLP158133-1\n"
      "LP29693-6\tLP7798-4\n");
  std::istringstream s(
      "code\tstring\n"
      "LP29693-6\tLaboratory\n"
      "LP158133-1\tHNA\n"
      "LP7798-4\tFertility testing\n");
  return HierarchyForest::parse(h, s);
}

}  // namespace

TEST_CASE("miner keeps hard triplets and drops easy ones") {
  HandModel hm;
  hm.set("a", 1.0, 0.0);
  auto [px, py] = at_cosine(0.9);
  hm.set("p", px, py);
  auto [nx, ny] = at_cosine(0.2);
  hm.set("n", nx, ny);
  auto [qx, qy] = at_cosine(0.6);
  hm.set("q", qx, qy);
  auto [mx, my] = at_cosine(0.55);
  hm.set("m", mx, my);

  MinerConfig cfg;
  const std::vector<Triplet> cands{
      {"a", "p", "n"},  // gap 0.7  >= margin: easy, dropped
      {"a", "q", "m"},  // gap 0.05 <  margin: hard, kept
  };
  auto kept = mine_hard_triplets(hm.model, cands, cfg);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].positive == "q");

  SECTION("equal cosines sit inside the margin") {
    const std::vector<Triplet> boundary{{"a", "q", "q q"}};
    // "q q" has the same single bucket as "q" with multiplicity 2: same
    // direction, so cos(a, q) == cos(a, "q q") exactly.
    const auto out = mine_hard_triplets(hm.model, boundary, cfg);
    CHECK(out.size() == 1);
  }

  SECTION("literal direction flips the selection") {
    MinerConfig literal = cfg;
    literal.keep_easy = true;
    const auto out = mine_hard_triplets(hm.model, cands, literal);
    REQUIRE(out.size() == 1);
    CHECK(out[0].positive == "p");
  }

  SECTION("survivor order matches input order") {
    const std::vector<Triplet> many{{"a", "q", "m"}, {"a", "p", "n"}, {"a", "m", "q"}};
    const auto out = mine_hard_triplets(hm.model, many, cfg);
    REQUIRE(out.size() == 2);
    CHECK(out[0].positive == "q");
    CHECK(out[1].positive == "m");
  }
}

TEST_CASE("miner equals the brute-force filter in both directions") {
  Rng rng(606);
  EncoderConfig cfg;
  cfg.dim = 8;
  cfg.n_buckets = 1024;
  const auto model = EmbeddingModel::random_init(cfg, 44);
  static const char* words[] = {"ameba", "brill", "casto", "dunes", "ephor",
                                "fjord", "gusto", "helix", "irate", "jolts"};
  auto term = [&]() {
    std::string t = words[rng.index(10)];
    if (rng.index(3) == 0) t += " " + std::string(words[rng.index(10)]);
    return t;
  };
  std::vector<Triplet> candidates;
  while (candidates.size() < 300) {
    Triplet t{term(), term(), term()};
    if (t.positive == t.negative) continue;
    candidates.push_back(std::move(t));
  }
  for (bool keep_easy : {false, true}) {
    MinerConfig mc;
    mc.keep_easy = keep_easy;
    const auto got = mine_hard_triplets(model, candidates, mc);
    // Brute force: recompute both cosines per triplet, no caching.
    std::vector<Triplet> expected;
    for (const auto& t : candidates) {
      const double gap = cosine(model.embed(t.anchor), model.embed(t.positive)) -
                         cosine(model.embed(t.anchor), model.embed(t.negative));
      if (keep_easy ? gap > mc.margin : gap < mc.margin) expected.push_back(t);
    }
    REQUIRE(got.size() == expected.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].anchor == expected[i].anchor);
      CHECK(got[i].positive == expected[i].positive);
      CHECK(got[i].negative == expected[i].negative);
    }
  }
}

TEST_CASE("anchor groups on the lab forest") {
  const auto forest = lab_forest();
  MinerConfig cfg;
  cfg.per_category_counts = {2, 2, 2, 2};
  cfg.seed = 12;
  size_t dropped = 0;
  const auto batch = build_anchor_groups(forest, {"LP158133-1"}, cfg, &dropped);
  REQUIRE(batch.groups.size() == 1);
  CHECK(dropped == 0);
  const auto& g = batch.groups[0];
  CHECK(g.anchor == "HNA");
  REQUIRE(g.members.size() == 2);
  CHECK(g.members[0] == AnchorMember{"Fertility testing", DistanceCategory::Sibling});
  CHECK(g.members[1] == AnchorMember{"Laboratory", DistanceCategory::ParentChild});
}

TEST_CASE("anchors with no partners are dropped with a count") {
  std::istringstream h(""), s("code\tstring\nX\tlone term\n");
  const auto forest = HierarchyForest::parse(h, s);
  MinerConfig cfg;
  size_t dropped = 0;
  const auto batch = build_anchor_groups(forest, {"X"}, cfg, &dropped);
  CHECK(batch.groups.empty());
  CHECK(dropped == 1);
  CHECK_THROWS_AS(build_anchor_groups(forest, {"nope"}, cfg), UnknownCode);
}

TEST_CASE("anchor groups are deterministic and order-independent") {
  Rng rng(31337);
  const auto forest = oracle::build(oracle::random_forest(rng, 90));
  MinerConfig cfg;
  cfg.seed = 5;
  std::vector<NodeCode> anchors(forest.codes().begin(), forest.codes().end());

  const auto a = build_anchor_groups(forest, anchors, cfg);
  const auto b = build_anchor_groups(forest, anchors, cfg);
  REQUIRE(a.groups.size() == b.groups.size());
  for (size_t i = 0; i < a.groups.size(); ++i) {
    CHECK(a.groups[i].anchor == b.groups[i].anchor);
    CHECK(a.groups[i].members == b.groups[i].members);
  }

  // Reversed processing order: per-anchor content is unchanged.
  std::vector<NodeCode> reversed(anchors.rbegin(), anchors.rend());
  const auto c = build_anchor_groups(forest, reversed, cfg);
  std::map<Term, std::vector<AnchorMember>> by_anchor;
  for (const auto& g : c.groups) by_anchor[g.anchor] = g.members;
  for (const auto& g : a.groups) {
    REQUIRE(by_anchor.count(g.anchor) == 1);
    CHECK(by_anchor[g.anchor] == g.members);
  }
}

TEST_CASE("anchor group members carry true distances and partition cleanly") {
  Rng rng(7711);
  const auto raw = oracle::random_forest(rng, 120);
  const auto forest = oracle::build(raw);

  // Reverse string -> code map; generated strings are unique.
  std::map<Term, NodeCode> code_of;
  for (const auto& [code, term] : raw.strings) code_of[term] = code;

  MinerConfig cfg;
  cfg.seed = 21;
  const auto batch = build_anchor_groups(forest, forest.codes(), cfg);
  REQUIRE_FALSE(batch.groups.empty());
  for (const auto& g : batch.groups) {
    const NodeCode anchor_code = code_of.at(g.anchor);
    for (const auto& m : g.members)
      CHECK(forest.distance(anchor_code, code_of.at(m.term)) == m.category);
    for (int d0 = 0; d0 <= 2; ++d0) {
      size_t close = 0, far = 0;
      for (const auto& m : g.members)
        (to_index(m.category) <= d0 ? close : far) += 1;
      CHECK(close + far == g.members.size());
    }
    for (const auto& m : g.members) {
      const uint32_t cap = cfg.per_category_counts[to_index(m.category)];
      size_t same = 0;
      for (const auto& n : g.members) same += n.category == m.category ? 1 : 0;
      CHECK(same <= cap);
    }
  }
}

TEST_CASE("eval pair sampling on the lab forest") {
  const auto forest = lab_forest();
  std::array<size_t, 4> shortfalls{};
  const auto pairs = sample_eval_pairs(forest, 5, 3, &shortfalls);
  REQUIRE(pairs.size() == 3);
  CHECK(pairs[0] == LabeledPair{"HNA", "Fertility testing", DistanceCategory::Sibling});
  size_t parent_child = 0;
  for (const auto& p : pairs)
    parent_child += p.category == DistanceCategory::ParentChild ? 1 : 0;
  CHECK(parent_child == 2);
  CHECK(shortfalls == std::array<size_t, 4>{5, 4, 3, 5});

  CHECK_THROWS_AS(sample_eval_pairs(forest, 0, 3), ConfigInvalid);
}

TEST_CASE("two isolated roots yield only far pairs") {
  std::istringstream h(""), s("code\tstring\nA\tfirst term\nB\tsecond term\n");
  const auto forest = HierarchyForest::parse(h, s);
  std::array<size_t, 4> shortfalls{};
  const auto pairs = sample_eval_pairs(forest, 4, 1, &shortfalls);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].category == DistanceCategory::Unrelated);
  CHECK(shortfalls == std::array<size_t, 4>{4, 4, 4, 3});
}

TEST_CASE("eval pairs relabel correctly under the distance metric") {
  Rng rng(9302);
  const auto raw = oracle::random_forest(rng, 150);
  const auto forest = oracle::build(raw);
  std::map<Term, NodeCode> code_of;
  for (const auto& [code, term] : raw.strings) code_of[term] = code;

  const auto pairs = sample_eval_pairs(forest, 30, 17);
  REQUIRE_FALSE(pairs.empty());
  for (const auto& p : pairs) {
    CHECK(forest.distance(code_of.at(p.a), code_of.at(p.b)) == p.category);
    if (p.category == DistanceCategory::Synonym) CHECK(p.a != p.b);
  }
  CHECK(pairs == sample_eval_pairs(forest, 30, 17));
}

TEST_CASE("pair file round trip") {
  std::ostringstream out;
  const std::vector<LabeledPair> pairs{
      {"alpha one", "beta two", DistanceCategory::Sibling},
      {"gamma", "delta", DistanceCategory::Unrelated}};
  write_labeled_pairs(out, pairs);
  std::istringstream in(out.str());
  CHECK(read_labeled_pairs(in) == pairs);

  std::istringstream flat("term_a\tterm_b\nheart attack\tmyocardial infarction\n");
  const auto fp = read_pair_file(flat);
  REQUIRE(fp.size() == 1);
  CHECK(fp[0].first == "heart attack");

  std::istringstream bad("term_a\tterm_b\tdistance\nx\ty\tnine\n");
  CHECK_THROWS_AS(read_labeled_pairs(bad), MalformedLine);
}
