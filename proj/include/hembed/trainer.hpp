#ifndef HEMBED_TRAINER_HPP
#define HEMBED_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hembed/common.hpp"
#include "hembed/encoder.hpp"
#include "hembed/hierarchy.hpp"
#include "hembed/loss.hpp"
#include "hembed/mining.hpp"

namespace hembed {

// Linear decay from the base rate to zero over the precomputed horizon.
inline double lr_at(double learning_rate, uint64_t step, uint64_t total_steps) {
  if (total_steps < 1) throw ConfigInvalid("lr_at: total_steps must be >= 1");
  if (step > total_steps) throw ConfigInvalid("lr_at: step beyond total_steps");
  return learning_rate *
         (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  uint64_t step_count = 0;
  std::map<uint32_t, std::vector<double>> first_moment;
  std::map<uint32_t, std::vector<double>> second_moment;
};

// Decoupled-weight-decay adaptive update on the touched buckets only; buckets
// absent from the gradient are neither stepped nor decayed. Bias correction
// uses the global step count.
inline void apply_update(EmbeddingModel& model, OptimizerState& state,
                         const SparseGrad& grad, double lr, double weight_decay) {
  const uint32_t dim = model.config().dim;
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (const auto& [bucket, g] : grad) {
    if (bucket >= model.config().n_buckets)
      throw ConfigInvalid("apply_update: bucket out of range");
    if (g.size() != dim) throw ConfigInvalid("apply_update: gradient dim mismatch");
    for (double x : g)
      if (!std::isfinite(x)) throw NonFiniteGradient("apply_update: non-finite gradient");
    auto& m = state.first_moment[bucket];
    auto& v = state.second_moment[bucket];
    if (m.empty()) m.assign(dim, 0.0);
    if (v.empty()) v.assign(dim, 0.0);
    auto row = model.row(bucket);
    for (uint32_t d = 0; d < dim; ++d) {
      m[d] = state.beta1 * m[d] + (1.0 - state.beta1) * g[d];
      v[d] = state.beta2 * v[d] + (1.0 - state.beta2) * g[d] * g[d];
      const double mhat = m[d] / bc1;
      const double vhat = v[d] / bc2;
      const double w = static_cast<double>(row[d]);
      row[d] = static_cast<float>(w - lr * mhat / (std::sqrt(vhat) + state.epsilon) -
                                  lr * weight_decay * w);
    }
  }
}

enum class TrainMode { Flat, Hierarchical, Mixed };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Flat: return "flat";
    case TrainMode::Hierarchical: return "hierarchical";
    case TrainMode::Mixed: return "mixed";
  }
  throw ConfigInvalid("bad loss mode");
}

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "flat") return TrainMode::Flat;
  if (s == "hierarchical") return TrainMode::Hierarchical;
  if (s == "mixed") return TrainMode::Mixed;
  throw ConfigInvalid("loss_mode must be flat, hierarchical or mixed: " + s);
}

struct TrainConfig {
  EncoderConfig encoder;
  LossParams loss;
  MinerConfig miner;
  TrainMode loss_mode = TrainMode::Hierarchical;
  // The 2e-5 rate customary for fine-tuning a pretrained transformer is far
  // too small for a from-scratch hashed encoder; reachable via config.
  double learning_rate = 2e-3;
  double weight_decay = 0.01;
  uint32_t batch_size = 256;
  uint32_t epochs = 1;
  uint64_t seed = 0;
  uint64_t checkpoint_every = 0;  // 0 disables interim checkpoints

  void validate() const {
    encoder.validate();
    loss.validate();
    miner.validate();
    if (!(learning_rate > 0)) throw ConfigInvalid("train: learning_rate must be > 0");
    if (!(weight_decay >= 0)) throw ConfigInvalid("train: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigInvalid("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigInvalid("train: epochs must be >= 1");
  }
};

// Training sources: any number of hierarchy forests plus any number of flat
// positive-pair lists (synonyms or relations, trained identically).
struct TrainData {
  std::vector<HierarchyForest> forests;
  std::vector<std::vector<std::pair<Term, Term>>> flat_sources;
};

struct TrainLogRow {
  uint64_t step;
  double lr;
  double loss;
};

struct Checkpoint {
  EmbeddingModel model;
  OptimizerState opt;
  uint64_t next_step = 0;
};

struct TrainResult {
  EmbeddingModel model;
  OptimizerState opt;
  std::vector<TrainLogRow> log;
  uint64_t total_steps = 0;
  size_t dropped_groups = 0;
};

using CheckpointFn =
    std::function<void(uint64_t step, const EmbeddingModel&, const OptimizerState&)>;

namespace detail {

// Synonym clusters of a flat source (union-find over the pair list) plus the
// distinct term list in first-appearance order.
struct FlatSourceIndex {
  std::vector<Term> terms;
  std::unordered_map<std::string, uint32_t> term_id;
  std::vector<uint32_t> cluster;  // representative per term id

  uint32_t find(uint32_t x) {
    while (cluster[x] != x) {
      cluster[x] = cluster[cluster[x]];
      x = cluster[x];
    }
    return x;
  }

  explicit FlatSourceIndex(const std::vector<std::pair<Term, Term>>& pairs) {
    auto intern = [&](const Term& t) {
      auto it = term_id.find(t);
      if (it != term_id.end()) return it->second;
      const uint32_t id = static_cast<uint32_t>(terms.size());
      term_id.emplace(t, id);
      terms.push_back(t);
      cluster.push_back(id);
      return id;
    };
    for (const auto& [a, b] : pairs) {
      const uint32_t ia = intern(a), ib = intern(b);
      const uint32_t ra = find(ia), rb = find(ib);
      if (ra != rb) cluster[std::max(ra, rb)] = std::min(ra, rb);
    }
  }
};

struct PlannedStep {
  uint32_t source;  // forests first, then flat sources
  uint32_t epoch;
  uint32_t batch;
};

inline std::vector<PlannedStep> build_plan(const std::vector<size_t>& units_per_source,
                                           uint32_t batch_size, uint32_t epochs) {
  std::vector<size_t> batches(units_per_source.size());
  size_t total_units = 0;
  for (size_t s = 0; s < units_per_source.size(); ++s) {
    total_units += units_per_source[s];
    batches[s] = (units_per_source[s] + batch_size - 1) / batch_size;
  }
  if (total_units == 0) throw NoTrainingData("no anchors or pairs to train on");
  std::vector<PlannedStep> plan;
  for (uint32_t e = 0; e < epochs; ++e) {
    std::vector<size_t> next(units_per_source.size(), 0);
    bool remaining = true;
    while (remaining) {
      remaining = false;
      for (size_t s = 0; s < batches.size(); ++s) {
        if (next[s] < batches[s]) {
          plan.push_back({static_cast<uint32_t>(s), e, static_cast<uint32_t>(next[s]++)});
          remaining = remaining || next[s] < batches[s];
        }
      }
    }
  }
  return plan;
}

// Seeded order of unit indices for (source, epoch); pure function of the run
// seed, so any step can be reconstructed without replaying earlier ones.
inline std::vector<uint32_t> epoch_order(uint64_t seed, uint32_t source, uint32_t epoch,
                                         size_t units) {
  std::vector<uint32_t> order(units);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(mix(seed, mix(source + 1, epoch)));
  rng.shuffle(order);
  return order;
}

}  // namespace detail

// Runs the optimization loop: seeded-shuffled anchor codes per forest and
// flat pairs per pair source, batches interleaved round-robin across sources
// each epoch, linear learning-rate decay over a horizon fixed up front.
// Forest batches are scored with the flat or hierarchical loss per loss_mode;
// flat-pair batches always use the flat loss with hard-mined negatives.
// Bit-reproducible for a fixed config; resuming from a checkpoint is
// equivalent to never having stopped.
inline TrainResult train(const TrainData& data, const TrainConfig& cfg,
                         const Checkpoint* resume = nullptr,
                         const CheckpointFn& on_checkpoint = {}) {
  cfg.validate();

  const size_t n_forests = data.forests.size();
  std::vector<size_t> units;
  for (const auto& f : data.forests) units.push_back(f.size());
  std::vector<detail::FlatSourceIndex> flat_index;
  for (const auto& pairs : data.flat_sources) {
    units.push_back(pairs.size());
    flat_index.emplace_back(pairs);
  }
  const auto plan = detail::build_plan(units, cfg.batch_size, cfg.epochs);
  const uint64_t total_steps = plan.size();

  TrainResult result{
      resume ? resume->model : EmbeddingModel::random_init(cfg.encoder, mix(cfg.seed, 0x77)),
      resume ? resume->opt : OptimizerState{},
      {},
      total_steps,
      0};
  if (resume) {
    if (!(resume->model.config() == cfg.encoder))
      throw ConfigInvalid("resume: encoder config does not match checkpoint");
    if (resume->next_step > total_steps)
      throw ConfigInvalid("resume: checkpoint beyond schedule horizon");
  }

  const LossMode forest_mode =
      cfg.loss_mode == TrainMode::Flat ? LossMode::Flat : LossMode::Hierarchical;

  for (uint64_t step = resume ? resume->next_step : 0; step < total_steps; ++step) {
    const auto [source, epoch, batch_idx] = plan[step];
    const auto order = detail::epoch_order(cfg.seed, source, epoch, units[source]);
    const size_t begin = static_cast<size_t>(batch_idx) * cfg.batch_size;
    const size_t end = std::min(begin + cfg.batch_size, order.size());

    Minibatch batch;
    LossMode mode;
    if (source < n_forests) {
      const HierarchyForest& forest = data.forests[source];
      std::vector<NodeCode> anchors;
      anchors.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) anchors.push_back(forest.codes()[order[i]]);
      MinerConfig miner = cfg.miner;
      miner.seed = mix(mix(cfg.seed, 0x6d696e65ULL), epoch);
      size_t dropped = 0;
      batch = build_anchor_groups(forest, anchors, miner, &dropped);
      result.dropped_groups += dropped;
      mode = forest_mode;
    } else {
      const auto& pairs = data.flat_sources[source - n_forests];
      auto& index = flat_index[source - n_forests];
      mode = LossMode::Flat;
      for (size_t i = begin; i < end; ++i) {
        const auto& [a, b] = pairs[order[i]];
        Rng rng(mix(mix(cfg.seed, fnv1a64(a)), mix(fnv1a64(b), epoch)));
        const uint32_t want = cfg.miner.per_category_counts[3];
        const uint32_t cluster_a = index.find(index.term_id.at(a));
        std::vector<Triplet> candidates;
        std::unordered_set<uint32_t> taken;
        for (size_t attempt = 0;
             attempt < 50 * static_cast<size_t>(want) && candidates.size() < want;
             ++attempt) {
          const uint32_t id = static_cast<uint32_t>(rng.index(index.terms.size()));
          if (index.find(id) == cluster_a) continue;
          if (!taken.insert(id).second) continue;
          candidates.push_back({a, b, index.terms[id]});
        }
        AnchorGroup group{a, {{b, DistanceCategory::Synonym}}};
        for (const Triplet& t : mine_hard_triplets(result.model, candidates, cfg.miner))
          group.members.push_back({t.negative, DistanceCategory::Unrelated});
        batch.groups.push_back(std::move(group));
      }
    }

    const double lr = lr_at(cfg.learning_rate, step, total_steps);
    const BatchLoss bl = batch_loss_and_gradient(result.model, batch, cfg.loss, mode);
    if (!std::isfinite(bl.loss)) throw NonFiniteInput("train: non-finite loss");
    apply_update(result.model, result.opt, bl.grad, lr, cfg.weight_decay);
    result.log.push_back({step, lr, bl.loss});

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && on_checkpoint) {
      for (float w : result.model.weights())
        if (!std::isfinite(w)) throw NonFiniteInput("train: non-finite weight at checkpoint");
      on_checkpoint(step + 1, result.model, result.opt);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint files: magic "HPCK", the model block, then the optimizer state.
// ---------------------------------------------------------------------------

inline void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write("HPCK", 4);
  detail::put_u32(out, 1);
  detail::put_u64(out, ckpt.next_step);
  ckpt.model.save(out);
  const OptimizerState& s = ckpt.opt;
  detail::put_f64(out, s.beta1);
  detail::put_f64(out, s.beta2);
  detail::put_f64(out, s.epsilon);
  detail::put_u64(out, s.step_count);
  auto write_moments = [&](const std::map<uint32_t, std::vector<double>>& m) {
    detail::put_u64(out, m.size());
    for (const auto& [bucket, vec] : m) {
      detail::put_u32(out, bucket);
      for (double x : vec) detail::put_f64(out, x);
    }
  };
  write_moments(s.first_moment);
  write_moments(s.second_moment);
}

inline Checkpoint load_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "HPCK", 4) != 0)
    throw IoError("not a checkpoint file (bad magic)");
  const uint32_t version = detail::get_u32(in);
  if (version != 1) throw IoError("unsupported checkpoint version");
  const uint64_t next_step = detail::get_u64(in);
  EmbeddingModel model = EmbeddingModel::load(in);
  OptimizerState s;
  s.beta1 = detail::get_f64(in);
  s.beta2 = detail::get_f64(in);
  s.epsilon = detail::get_f64(in);
  s.step_count = detail::get_u64(in);
  const uint32_t dim = model.config().dim;
  auto read_moments = [&](std::map<uint32_t, std::vector<double>>& m) {
    const uint64_t count = detail::get_u64(in);
    for (uint64_t i = 0; i < count; ++i) {
      const uint32_t bucket = detail::get_u32(in);
      std::vector<double> vec(dim);
      for (double& x : vec) x = detail::get_f64(in);
      m.emplace(bucket, std::move(vec));
    }
  };
  read_moments(s.first_moment);
  read_moments(s.second_moment);
  if (!in) throw IoError("checkpoint file truncated");
  return Checkpoint{std::move(model), std::move(s), next_step};
}

inline void save_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  save_checkpoint(out, ckpt);
  if (!out) throw IoError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return load_checkpoint(in);
}

// Step-file path: model.hprb -> model.step7.hprb
inline std::filesystem::path step_path(const std::filesystem::path& model_out,
                                       uint64_t step, const char* ext) {
  std::filesystem::path p = model_out;
  const std::string stem = p.stem().string();
  return p.parent_path() / (stem + ".step" + std::to_string(step) + ext);
}

// File-level driver: trains, writes interim step checkpoints (model + resume
// state), the final model, a final resume state, and the training log CSV.
inline TrainResult train_files(const TrainData& data, const TrainConfig& cfg,
                               const std::filesystem::path& model_out,
                               const std::filesystem::path& log_csv) {
  const std::string model_ext =
      model_out.has_extension() ? model_out.extension().string() : ".hprb";
  auto result = train(
      data, cfg, nullptr,
      [&](uint64_t step, const EmbeddingModel& model, const OptimizerState& opt) {
        model.save_file(step_path(model_out, step, model_ext.c_str()));
        save_checkpoint_file(step_path(model_out, step, ".ckpt"),
                             Checkpoint{model, opt, step});
      });

  result.model.save_file(model_out);
  std::filesystem::path final_ckpt = model_out;
  final_ckpt += ".ckpt";
  save_checkpoint_file(final_ckpt, Checkpoint{result.model, result.opt, result.total_steps});

  std::ofstream log(log_csv);
  if (!log) throw IoError("cannot open for write: " + log_csv.string());
  log << "step,lr,loss\n";
  for (const auto& row : result.log)
    log << row.step << ',' << format_sig9(row.lr) << ',' << format_sig9(row.loss) << '\n';
  if (!log) throw IoError("write failed: " + log_csv.string());
  return result;
}

}  // namespace hembed

#endif  // HEMBED_TRAINER_HPP
