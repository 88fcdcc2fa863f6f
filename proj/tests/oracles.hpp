#ifndef HEMBED_TESTS_ORACLES_HPP
#define HEMBED_TESTS_ORACLES_HPP

// Brute-force / direct-definition oracles for the test suites. Everything in
// here deliberately avoids the library's computation paths: metrics are
// evaluated straight from their pairwise definitions, the distance classifier
// reads the raw edge list, and gradients come from central finite
// differences of the scalar loss.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hembed/encoder.hpp"
#include "hembed/hierarchy.hpp"
#include "hembed/loss.hpp"
#include "hembed/metrics.hpp"
#include "hembed/mining.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Rank statistics
// ---------------------------------------------------------------------------

// AUC via the O(n^2) pairwise count: P(pos > neg) + 0.5 P(pos == neg).
inline double auc(const std::vector<hembed::LabeledScore>& scores) {
  double wins = 0;
  size_t pairs = 0;
  for (const auto& p : scores) {
    if (p.label != 1) continue;
    for (const auto& n : scores) {
      if (n.label != 0) continue;
      ++pairs;
      if (p.score > n.score)
        wins += 1.0;
      else if (p.score == n.score)
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Tie-averaged ranks by counting: rank_i = 1 + #smaller + (#equal - 1)/2.
inline std::vector<double> counting_ranks(const std::vector<double>& v) {
  std::vector<double> ranks(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    size_t smaller = 0, equal = 0;
    for (size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++smaller;
      if (v[j] == v[i]) ++equal;
    }
    ranks[i] = 1.0 + static_cast<double>(smaller) +
               (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double cov = 0, vx = 0, vy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

inline double spearman(const std::vector<hembed::LabeledScore>& scores) {
  std::vector<double> s, l;
  for (const auto& e : scores) {
    s.push_back(e.score);
    l.push_back(static_cast<double>(e.label));
  }
  return pearson(counting_ranks(s), counting_ranks(l));
}

// AP from the definition: for each positive, its 1-based rank in the
// descending ordering (ties broken by input position), precision there.
inline double average_precision(const std::vector<hembed::LabeledScore>& scores) {
  std::vector<size_t> order;
  for (size_t i = 0; i < scores.size(); ++i) order.push_back(i);
  // selection of the descending order, input position as tiebreak
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a].score != scores[b].score) return scores[a].score > scores[b].score;
    return a < b;
  });
  double sum = 0;
  size_t positives = 0;
  for (size_t rank = 1; rank <= order.size(); ++rank) {
    if (scores[order[rank - 1]].label != 1) continue;
    ++positives;
    size_t hits = 0;
    for (size_t r = 0; r < rank; ++r)
      if (scores[order[r]].label == 1) ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return sum / static_cast<double>(positives);
}

// ---------------------------------------------------------------------------
// Distance classifier straight off the raw edge list
// ---------------------------------------------------------------------------

inline hembed::DistanceCategory distance_from_edges(
    const std::vector<std::pair<std::string, std::string>>& edges, const std::string& a,
    const std::string& b) {
  using hembed::DistanceCategory;
  if (a == b) return DistanceCategory::Synonym;
  std::string parent_a, parent_b;
  for (const auto& [p, c] : edges) {
    if (c == a) parent_a = p;
    if (c == b) parent_b = p;
    if ((p == a && c == b) || (p == b && c == a)) return DistanceCategory::ParentChild;
  }
  if (!parent_a.empty() && parent_a == parent_b) return DistanceCategory::Sibling;
  return DistanceCategory::Unrelated;
}

// ---------------------------------------------------------------------------
// Scalar multi-similarity loss
// ---------------------------------------------------------------------------

// One anchor's threshold term, straight from the formula.
inline double ms_threshold_term(const std::vector<std::pair<double, int>>& members,
                                double alpha, double beta, double lambda, int d0) {
  double pos = 0, neg = 0;
  for (const auto& [sim, cat] : members) {
    if (cat <= d0)
      pos += std::exp(-alpha * (sim - lambda));
    else
      neg += std::exp(beta * (sim - lambda));
  }
  return std::log(1.0 + pos) / alpha + std::log(1.0 + neg) / beta;
}

inline double ms_loss_value(const std::vector<std::vector<std::pair<double, int>>>& anchors,
                            double alpha, double beta, double lambda) {
  double total = 0;
  for (const auto& m : anchors) total += ms_threshold_term(m, alpha, beta, lambda, 0);
  return total;
}

inline double hierarchical_loss_value(
    const std::vector<std::vector<std::pair<double, int>>>& anchors, double alpha,
    double beta, double lambda) {
  double total = 0;
  for (int d0 = 0; d0 <= 2; ++d0)
    for (const auto& m : anchors) total += ms_threshold_term(m, alpha, beta, lambda, d0);
  return total;
}

// ---------------------------------------------------------------------------
// Finite-difference weight gradient
// ---------------------------------------------------------------------------

// Central difference of the scalar batch loss with respect to one stored
// weight. The endpoints are the float32-rounded perturbed values, and the
// divisor is their exact double difference, so quantization does not leak
// into the quotient.
inline double fd_weight_gradient(hembed::EmbeddingModel model, const hembed::Minibatch& batch,
                                 const hembed::LossParams& params, hembed::LossMode mode,
                                 size_t flat_index, double h = 1e-5) {
  const float w0 = model.weights()[flat_index];
  const float wp = static_cast<float>(static_cast<double>(w0) + h);
  const float wm = static_cast<float>(static_cast<double>(w0) - h);
  model.weights()[flat_index] = wp;
  const double fp = hembed::batch_loss_value(model, batch, params, mode);
  model.weights()[flat_index] = wm;
  const double fm = hembed::batch_loss_value(model, batch, params, mode);
  model.weights()[flat_index] = w0;
  return (fp - fm) / (static_cast<double>(wp) - static_cast<double>(wm));
}

// ---------------------------------------------------------------------------
// Random forest inputs for property tests
// ---------------------------------------------------------------------------

struct RawForest {
  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<std::pair<std::string, std::string>> strings;
};

inline RawForest random_forest(hembed::Rng& rng, size_t max_nodes) {
  RawForest f;
  const size_t n = 2 + rng.index(max_nodes - 1);
  for (size_t i = 0; i < n; ++i) {
    const std::string code = "n" + std::to_string(i);
    // ~20% of nodes start new trees; others attach to a random earlier node.
    if (i > 0 && rng.index(5) != 0) {
      const std::string parent = "n" + std::to_string(rng.index(i));
      f.edges.emplace_back(parent, code);
    }
    const size_t synonyms = 1 + rng.index(3);
    for (size_t s = 0; s < synonyms; ++s)
      f.strings.emplace_back(code, "term " + std::to_string(i) + " v" + std::to_string(s));
  }
  return f;
}

inline hembed::HierarchyForest build(const RawForest& raw) {
  return hembed::HierarchyForest::from_edges(raw.edges, raw.strings);
}

}  // namespace oracle

#endif  // HEMBED_TESTS_ORACLES_HPP
