#ifndef HEMBED_METRICS_HPP
#define HEMBED_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hembed/common.hpp"
#include "hembed/encoder.hpp"
#include "hembed/mining.hpp"

namespace hembed {

struct LabeledScore {
  double score = 0.0;
  int label = 0;  // 1 = closer category of the pair under test
};

namespace detail {

inline void check_scores(std::span<const LabeledScore> scores) {
  for (const auto& s : scores)
    if (!std::isfinite(s.score)) throw NonFiniteInput("metrics: non-finite score");
}

// Average-tie ranks (1-based) of the given values.
inline std::vector<double> tie_ranks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace detail

// Mann-Whitney statistic: probability that a random positive scores above a
// random negative, ties counted half. Computed via tie-averaged ranks.
inline double roc_auc(std::span<const LabeledScore> scores) {
  detail::check_scores(scores);
  size_t n_pos = 0, n_neg = 0;
  std::vector<double> values;
  values.reserve(scores.size());
  for (const auto& s : scores) {
    values.push_back(s.score);
    (s.label == 1 ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0) throw OneClassOnly("roc_auc: need both labels");
  const auto ranks = detail::tie_ranks(values);
  double rank_sum = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    if (scores[i].label == 1) rank_sum += ranks[i];
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

// Spearman correlation between scores and binary labels: Pearson on
// average-tie ranks of both sides.
inline double spearman(std::span<const LabeledScore> scores) {
  detail::check_scores(scores);
  if (scores.size() < 2) throw DegenerateInput("spearman: need at least 2 entries");
  std::vector<double> s, l;
  s.reserve(scores.size());
  l.reserve(scores.size());
  for (const auto& e : scores) {
    s.push_back(e.score);
    l.push_back(static_cast<double>(e.label));
  }
  const bool scores_constant = std::all_of(s.begin(), s.end(), [&](double x) { return x == s[0]; });
  const bool labels_constant = std::all_of(l.begin(), l.end(), [&](double x) { return x == l[0]; });
  if (scores_constant || labels_constant)
    throw DegenerateInput("spearman: zero variance input");

  const auto rs = detail::tie_ranks(s);
  const auto rl = detail::tie_ranks(l);
  const double n = static_cast<double>(scores.size());
  const double ms = std::accumulate(rs.begin(), rs.end(), 0.0) / n;
  const double ml = std::accumulate(rl.begin(), rl.end(), 0.0) / n;
  double cov = 0, vs = 0, vl = 0;
  for (size_t i = 0; i < rs.size(); ++i) {
    cov += (rs[i] - ms) * (rl[i] - ml);
    vs += (rs[i] - ms) * (rs[i] - ms);
    vl += (rl[i] - ml) * (rl[i] - ml);
  }
  return cov / std::sqrt(vs * vl);
}

// Area under the precision-recall curve as the mean of precision at each
// positive's rank; descending stable sort, ties broken by input order.
inline double average_precision(std::span<const LabeledScore> scores) {
  detail::check_scores(scores);
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a].score > scores[b].score; });
  size_t positives_seen = 0;
  double precision_sum = 0;
  for (size_t rank = 1; rank <= order.size(); ++rank) {
    if (scores[order[rank - 1]].label == 1) {
      ++positives_seen;
      precision_sum += static_cast<double>(positives_seen) / static_cast<double>(rank);
    }
  }
  if (positives_seen == 0) throw OneClassOnly("average_precision: no positives");
  return precision_sum / static_cast<double>(positives_seen);
}

// Per-category-pair evaluation report. Keys run "0v1".."2v3"; metrics that
// cannot be computed for a pair (a side has no data, or zero variance for
// Spearman) are absent rather than faked.
struct EvalReport {
  std::map<std::string, std::optional<double>> auc;
  std::map<std::string, std::optional<double>> spearman;
  std::map<std::string, std::optional<double>> average_precision;
  std::array<std::optional<double>, 4> mean_similarity_by_distance{};
  std::array<size_t, 4> pair_counts{};
  std::array<size_t, 4> shortfalls{};
};

// Embeds all distinct terms once, scores every labeled pair by cosine, and
// fills the 6 category-pair discrimination metrics (label 1 = the closer
// category) plus the mean similarity per category.
inline EvalReport evaluate(const EmbeddingModel& model,
                           const std::vector<LabeledPair>& pairs) {
  std::unordered_map<std::string, EmbeddingVector> cache;
  auto vec = [&](const Term& t) -> const EmbeddingVector& {
    auto it = cache.find(t);
    if (it == cache.end()) it = cache.emplace(t, model.embed(t)).first;
    return it->second;
  };

  std::array<std::vector<double>, 4> sims_by_cat;
  for (const auto& p : pairs)
    sims_by_cat[to_index(p.category)].push_back(cosine(vec(p.a), vec(p.b)));

  int categories_present = 0;
  for (const auto& v : sims_by_cat) categories_present += v.empty() ? 0 : 1;
  if (categories_present < 2)
    throw InsufficientCategories("evaluate: pairs must cover at least two categories");

  EvalReport report;
  for (int c = 0; c < 4; ++c) {
    report.pair_counts[c] = sims_by_cat[c].size();
    if (!sims_by_cat[c].empty()) {
      double sum = 0;
      for (double s : sims_by_cat[c]) sum += s;
      report.mean_similarity_by_distance[c] = sum / static_cast<double>(sims_by_cat[c].size());
    }
  }

  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      const std::string key = std::to_string(i) + "v" + std::to_string(j);
      report.auc[key] = std::nullopt;
      report.spearman[key] = std::nullopt;
      report.average_precision[key] = std::nullopt;
      if (sims_by_cat[i].empty() || sims_by_cat[j].empty()) continue;
      std::vector<LabeledScore> scores;
      scores.reserve(sims_by_cat[i].size() + sims_by_cat[j].size());
      for (double s : sims_by_cat[i]) scores.push_back({s, 1});
      for (double s : sims_by_cat[j]) scores.push_back({s, 0});
      report.auc[key] = roc_auc(scores);
      report.average_precision[key] = hembed::average_precision(scores);
      try {
        report.spearman[key] = hembed::spearman(scores);
      } catch (const DegenerateInput&) {
        // all similarities identical: correlation undefined, leave absent
      }
    }
  }
  return report;
}

}  // namespace hembed

#endif  // HEMBED_METRICS_HPP
