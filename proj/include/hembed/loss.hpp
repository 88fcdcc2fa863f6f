#ifndef HEMBED_LOSS_HPP
#define HEMBED_LOSS_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hembed/common.hpp"
#include "hembed/encoder.hpp"
#include "hembed/mining.hpp"

namespace hembed {

struct LossParams {
  double alpha = 2.0;
  double beta = 2.0;
  double lambda = 0.5;

  void validate() const {
    if (!(alpha > 0) || !(beta > 0)) throw ConfigInvalid("loss: alpha and beta must be > 0");
    if (!(lambda > -1.0 && lambda < 1.0)) throw ConfigInvalid("loss: lambda must be in (-1, 1)");
  }
};

struct SimilarityEntry {
  double sim = 0.0;
  DistanceCategory category = DistanceCategory::Unrelated;
};

// Anchor-indexed similarity values with their distance categories attached.
struct SimilaritySet {
  std::vector<std::vector<SimilarityEntry>> anchors;
};

struct LossValueGrad {
  double value = 0.0;
  std::vector<std::vector<double>> grad;  // dLoss/dS, same shape as the input
};

namespace detail {

// One threshold term of the multi-similarity loss: members at distance <= d0
// are positives, the rest negatives. Value and dLoss/dS are accumulated into
// the output. Empty sides contribute nothing (ln(1+0) = 0).
inline void accumulate_ms_threshold(const SimilaritySet& sims, const LossParams& p,
                                    int d0, LossValueGrad& out) {
  for (size_t i = 0; i < sims.anchors.size(); ++i) {
    const auto& members = sims.anchors[i];
    double pos_sum = 0.0, neg_sum = 0.0;
    for (const auto& m : members) {
      if (!std::isfinite(m.sim)) throw NonFiniteInput("loss: non-finite similarity");
      if (to_index(m.category) <= d0)
        pos_sum += std::exp(-p.alpha * (m.sim - p.lambda));
      else
        neg_sum += std::exp(p.beta * (m.sim - p.lambda));
    }
    out.value += std::log1p(pos_sum) / p.alpha + std::log1p(neg_sum) / p.beta;
    for (size_t j = 0; j < members.size(); ++j) {
      const auto& m = members[j];
      if (to_index(m.category) <= d0)
        out.grad[i][j] += -std::exp(-p.alpha * (m.sim - p.lambda)) / (1.0 + pos_sum);
      else
        out.grad[i][j] += std::exp(p.beta * (m.sim - p.lambda)) / (1.0 + neg_sum);
    }
  }
}

inline LossValueGrad zero_like(const SimilaritySet& sims) {
  LossValueGrad out;
  out.grad.resize(sims.anchors.size());
  for (size_t i = 0; i < sims.anchors.size(); ++i)
    out.grad[i].assign(sims.anchors[i].size(), 0.0);
  return out;
}

}  // namespace detail

// Standard multi-similarity loss: positives are the distance-0 members,
// negatives everything else.
inline LossValueGrad ms_loss(const SimilaritySet& sims, const LossParams& params) {
  params.validate();
  LossValueGrad out = detail::zero_like(sims);
  detail::accumulate_ms_threshold(sims, params, 0, out);
  return out;
}

// Hierarchical variant: the same term summed over thresholds d0 in {0,1,2},
// re-partitioning members at each threshold. Gradients accumulate.
inline LossValueGrad hierarchical_ms_loss(const SimilaritySet& sims,
                                          const LossParams& params) {
  params.validate();
  LossValueGrad out = detail::zero_like(sims);
  for (int d0 = 0; d0 <= 2; ++d0) detail::accumulate_ms_threshold(sims, params, d0, out);
  return out;
}

enum class LossMode { Flat, Hierarchical };

struct BatchLoss {
  double loss = 0.0;
  SparseGrad grad;
};

namespace detail {

// Embeds every distinct term in the batch once. Returns the distinct term
// list in first-appearance order plus an index map.
struct BatchEmbeddings {
  std::vector<Term> terms;
  std::unordered_map<std::string, size_t> index;
  std::vector<EmbeddingVector> vectors;

  size_t intern(const EmbeddingModel& model, const Term& t) {
    auto it = index.find(t);
    if (it != index.end()) return it->second;
    const size_t id = terms.size();
    index.emplace(t, id);
    terms.push_back(t);
    vectors.push_back(model.embed(t));
    return id;
  }
};

inline SimilaritySet batch_similarities(const EmbeddingModel& model, const Minibatch& batch,
                                        BatchEmbeddings& emb,
                                        std::vector<size_t>* anchor_ids,
                                        std::vector<std::vector<size_t>>* member_ids) {
  SimilaritySet sims;
  sims.anchors.resize(batch.groups.size());
  for (size_t i = 0; i < batch.groups.size(); ++i) {
    const AnchorGroup& g = batch.groups[i];
    const size_t ia = emb.intern(model, g.anchor);
    if (anchor_ids) anchor_ids->push_back(ia);
    if (member_ids) member_ids->emplace_back();
    for (const AnchorMember& m : g.members) {
      const size_t im = emb.intern(model, m.term);
      sims.anchors[i].push_back({cosine(emb.vectors[ia], emb.vectors[im]), m.category});
      if (member_ids) member_ids->back().push_back(im);
    }
  }
  return sims;
}

}  // namespace detail

// Scalar loss of a minibatch under the selected mode; the forward half of
// batch_loss_and_gradient, used by finite-difference checks.
inline double batch_loss_value(const EmbeddingModel& model, const Minibatch& batch,
                               const LossParams& params, LossMode mode) {
  detail::BatchEmbeddings emb;
  const SimilaritySet sims = detail::batch_similarities(model, batch, emb, nullptr, nullptr);
  return mode == LossMode::Flat ? ms_loss(sims, params).value
                                : hierarchical_ms_loss(sims, params).value;
}

// Full forward/backward: loss of the batch plus the sparse weight gradient,
// back-propagated through cosine and the mean-of-rows embedding. Gradient
// reduction visits terms in first-appearance order and buckets ascending, so
// the result is bit-reproducible.
inline BatchLoss batch_loss_and_gradient(const EmbeddingModel& model, const Minibatch& batch,
                                         const LossParams& params, LossMode mode) {
  detail::BatchEmbeddings emb;
  std::vector<size_t> anchor_ids;
  std::vector<std::vector<size_t>> member_ids;
  const SimilaritySet sims =
      detail::batch_similarities(model, batch, emb, &anchor_ids, &member_ids);

  const LossValueGrad lv = mode == LossMode::Flat ? ms_loss(sims, params)
                                                  : hierarchical_ms_loss(sims, params);

  const uint32_t dim = model.config().dim;
  std::vector<double> norms(emb.terms.size());
  for (size_t t = 0; t < emb.terms.size(); ++t) {
    double nn = 0;
    for (double x : emb.vectors[t]) nn += x * x;
    norms[t] = std::sqrt(nn);
  }

  // dLoss/d(embedding) per distinct term.
  std::vector<std::vector<double>> upstream(emb.terms.size(),
                                            std::vector<double>(dim, 0.0));
  for (size_t i = 0; i < batch.groups.size(); ++i) {
    const size_t ia = anchor_ids[i];
    for (size_t j = 0; j < member_ids[i].size(); ++j) {
      const size_t im = member_ids[i][j];
      const double g = lv.grad[i][j];
      if (g == 0.0) continue;
      const double s = sims.anchors[i][j].sim;
      const auto& u = emb.vectors[ia];
      const auto& v = emb.vectors[im];
      const double nu = norms[ia], nv = norms[im];
      const double inv_uv = 1.0 / (nu * nv);
      const double su = s / (nu * nu), sv = s / (nv * nv);
      for (uint32_t d = 0; d < dim; ++d) {
        upstream[ia][d] += g * (v[d] * inv_uv - su * u[d]);
        upstream[im][d] += g * (u[d] * inv_uv - sv * v[d]);
      }
    }
  }

  BatchLoss out;
  out.loss = lv.value;
  for (size_t t = 0; t < emb.terms.size(); ++t) {
    SparseGrad g = model.embed_gradient(emb.terms[t], upstream[t]);
    for (auto& [bucket, vec] : g) {
      auto [it, fresh] = out.grad.try_emplace(bucket, std::move(vec));
      if (!fresh)
        for (uint32_t d = 0; d < dim; ++d) it->second[d] += vec[d];
    }
  }
  return out;
}

}  // namespace hembed

#endif  // HEMBED_LOSS_HPP
