// Command-line front end: synth, validate, pairs, train, embed, eval.
// Exit codes: 0 success, 1 domain/validation failure, 2 usage error.

#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hembed/hembed.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw hembed::IoError("cannot open: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw hembed::IoError("cannot open for write: " + path);
  return out;
}

json load_json(const std::string& path) {
  auto in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw hembed::ConfigInvalid(path + ": " + e.what());
  }
}

hembed::HierarchyForest load_forest(const std::string& hierarchy, const std::string& strings) {
  auto h = open_input(hierarchy);
  auto s = open_input(strings);
  return hembed::HierarchyForest::parse(h, s);
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int run_synth(const std::string& config_path, const std::string& out_dir,
              const json& overrides) {
  json j = config_path.empty() ? json::object() : load_json(config_path);
  for (const auto& [k, v] : overrides.items()) j[k] = v;

  static const std::set<std::string> known = {"n_trees",           "depth",
                                              "branching",         "synonyms_per_node",
                                              "noise_tokens",      "seed"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw hembed::ConfigInvalid("synth config: unknown key " + k);
  if (!j.contains("seed")) {
    std::cerr << "synth: a seed is required (config key or --seed)\n";
    return 2;
  }

  hembed::SynthConfig cfg;
  cfg.n_trees = j.value("n_trees", cfg.n_trees);
  cfg.depth = j.value("depth", cfg.depth);
  cfg.branching = j.value("branching", cfg.branching);
  cfg.synonyms_per_node = j.value("synonyms_per_node", cfg.synonyms_per_node);
  cfg.noise_tokens = j.value("noise_tokens", cfg.noise_tokens);
  cfg.seed = j.at("seed").get<uint64_t>();

  const auto forest = hembed::generate(cfg);

  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  auto hier = open_output((dir / "hierarchy.tsv").string());
  auto strs = open_output((dir / "strings.tsv").string());
  forest.serialize(hier, strs);

  ordered_json sidecar;
  sidecar["n_trees"] = cfg.n_trees;
  sidecar["depth"] = cfg.depth;
  sidecar["branching"] = cfg.branching;
  sidecar["synonyms_per_node"] = cfg.synonyms_per_node;
  sidecar["noise_tokens"] = cfg.noise_tokens;
  sidecar["seed"] = cfg.seed;
  auto side = open_output((dir / "synth.json").string());
  side << sidecar.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int run_validate(const std::string& hierarchy, const std::string& strings) {
  const auto forest = load_forest(hierarchy, strings);
  const auto stats = forest.stats();
  ordered_json j;
  j["node_count"] = stats.node_count;
  j["tree_count"] = stats.tree_count;
  j["min_depth"] = stats.min_depth;
  j["max_depth"] = stats.max_depth;
  j["synonym_count"] = stats.synonym_count;
  std::cout << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// pairs
// ---------------------------------------------------------------------------

int run_pairs(const std::string& hierarchy, const std::string& strings, size_t per_category,
              uint64_t seed, const std::string& out_path) {
  const auto forest = load_forest(hierarchy, strings);
  std::array<size_t, 4> shortfalls{};
  const auto pairs = hembed::sample_eval_pairs(forest, per_category, seed, &shortfalls);
  auto out = open_output(out_path);
  hembed::write_labeled_pairs(out, pairs);
  for (int c = 0; c < 4; ++c)
    if (shortfalls[c] > 0)
      std::cerr << "pairs: distance " << c << " short by " << shortfalls[c] << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

hembed::TrainConfig train_config_from_json(const json& j) {
  hembed::TrainConfig cfg;
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.loss_mode = hembed::train_mode_from_string(
      j.value("loss_mode", to_string(cfg.loss_mode)));
  cfg.loss.alpha = j.value("alpha", cfg.loss.alpha);
  cfg.loss.beta = j.value("beta", cfg.loss.beta);
  cfg.loss.lambda = j.value("lambda", cfg.loss.lambda);
  cfg.miner.margin = j.value("margin", cfg.miner.margin);
  cfg.miner.seed = cfg.seed;
  if (j.contains("per_category_counts")) {
    const auto& counts = j.at("per_category_counts");
    if (!counts.is_array() || counts.size() != 4)
      throw hembed::ConfigInvalid("per_category_counts must be an array of 4 counts");
    for (int c = 0; c < 4; ++c) cfg.miner.per_category_counts[c] = counts[c].get<uint32_t>();
  }
  const std::string direction = j.value("miner_direction", "hard");
  if (direction == "hard")
    cfg.miner.keep_easy = false;
  else if (direction == "literal")
    cfg.miner.keep_easy = true;
  else
    throw hembed::ConfigInvalid("miner_direction must be hard or literal");
  cfg.encoder.dim = j.value("dim", cfg.encoder.dim);
  cfg.encoder.n_buckets = j.value("n_buckets", cfg.encoder.n_buckets);
  cfg.encoder.ngram_min = j.value("ngram_min", cfg.encoder.ngram_min);
  cfg.encoder.ngram_max = j.value("ngram_max", cfg.encoder.ngram_max);
  cfg.encoder.include_word_unigrams =
      j.value("include_word_unigrams", cfg.encoder.include_word_unigrams);
  cfg.encoder.hash_seed = j.value("hash_seed", cfg.encoder.hash_seed);
  return cfg;
}

int run_train(const std::string& config_path, const std::string& out_path,
              std::string log_path, const json& overrides,
              const std::vector<std::string>& hierarchy_flags,
              const std::vector<std::string>& strings_flags,
              const std::vector<std::string>& flat_flags) {
  json j = config_path.empty() ? json::object() : load_json(config_path);
  for (const auto& [k, v] : overrides.items()) j[k] = v;

  static const std::set<std::string> known = {
      "seed",          "learning_rate",      "weight_decay",
      "batch_size",    "epochs",             "loss_mode",
      "alpha",         "beta",               "lambda",
      "margin",        "miner_direction",    "per_category_counts",
      "dim",           "n_buckets",          "ngram_min",
      "ngram_max",     "include_word_unigrams", "hash_seed",
      "checkpoint_every", "hierarchies",     "flat_pairs"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw hembed::ConfigInvalid("train config: unknown key " + k);
  if (!j.contains("seed")) {
    std::cerr << "train: a seed is required (config key or --seed)\n";
    return 2;
  }
  if (hierarchy_flags.size() != strings_flags.size()) {
    std::cerr << "train: --hierarchy and --strings must be given in pairs\n";
    return 2;
  }

  const hembed::TrainConfig cfg = train_config_from_json(j);

  hembed::TrainData data;
  if (j.contains("hierarchies")) {
    for (const auto& entry : j.at("hierarchies"))
      data.forests.push_back(load_forest(entry.at("hierarchy").get<std::string>(),
                                         entry.at("strings").get<std::string>()));
  }
  for (size_t i = 0; i < hierarchy_flags.size(); ++i)
    data.forests.push_back(load_forest(hierarchy_flags[i], strings_flags[i]));
  if (j.contains("flat_pairs")) {
    for (const auto& entry : j.at("flat_pairs")) {
      auto in = open_input(entry.get<std::string>());
      data.flat_sources.push_back(hembed::read_pair_file(in));
    }
  }
  for (const auto& path : flat_flags) {
    auto in = open_input(path);
    data.flat_sources.push_back(hembed::read_pair_file(in));
  }

  if (log_path.empty()) {
    std::filesystem::path p(out_path);
    log_path = (p.parent_path() / (p.stem().string() + ".log.csv")).string();
  }

  const auto result = hembed::train_files(data, cfg, out_path, log_path);
  std::cerr << "train: " << result.total_steps << " steps";
  if (result.dropped_groups > 0)
    std::cerr << ", " << result.dropped_groups << " empty anchor groups dropped";
  std::cerr << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

int run_embed(const std::string& model_path, const std::string& terms_path,
              const std::string& out_path) {
  const auto model = hembed::EmbeddingModel::load_file(model_path);
  auto in = open_input(terms_path);
  auto out = open_output(out_path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string term = hembed::trim(line);
    if (term.empty()) continue;
    const auto vec = model.embed(term);
    out << term << '\t';
    for (size_t d = 0; d < vec.size(); ++d) {
      if (d) out << ' ';
      out << hembed::format_sig9(vec[d]);
    }
    out << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int run_eval(const std::string& model_path, const std::string& pairs_path,
             const std::string& out_path, std::optional<uint64_t> seed) {
  const auto model = hembed::EmbeddingModel::load_file(model_path);
  auto in = open_input(pairs_path);
  const auto pairs = hembed::read_labeled_pairs(in);
  const auto report = hembed::evaluate(model, pairs);
  auto out = open_output(out_path);
  hembed::write_report(out, report, model_path, seed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchy-aware term embedding trainer and evaluator"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic forest");
  std::string synth_config, synth_out_dir;
  synth->add_option("--config", synth_config, "JSON config file");
  synth->add_option("--out-dir", synth_out_dir, "output directory")->required();
  uint32_t s_trees = 0, s_depth = 0, s_branch = 0, s_syn = 0, s_noise = 0;
  uint64_t s_seed = 0;
  auto* o_trees = synth->add_option("--n_trees", s_trees);
  auto* o_depth = synth->add_option("--depth", s_depth);
  auto* o_branch = synth->add_option("--branching", s_branch);
  auto* o_syn = synth->add_option("--synonyms_per_node", s_syn);
  auto* o_noise = synth->add_option("--noise_tokens", s_noise);
  auto* o_sseed = synth->add_option("--seed", s_seed);

  // validate
  auto* validate = app.add_subcommand("validate", "parse and report forest stats");
  std::string v_hier, v_strs;
  validate->add_option("--hierarchy", v_hier)->required();
  validate->add_option("--strings", v_strs)->required();

  // pairs
  auto* pairs = app.add_subcommand("pairs", "sample labeled evaluation pairs");
  std::string p_hier, p_strs, p_out;
  size_t p_per = 0;
  uint64_t p_seed = 0;
  pairs->add_option("--hierarchy", p_hier)->required();
  pairs->add_option("--strings", p_strs)->required();
  pairs->add_option("--per-category", p_per)->required();
  pairs->add_option("--seed", p_seed)->required();
  pairs->add_option("--out", p_out)->required();

  // train
  auto* train = app.add_subcommand("train", "train an embedding model");
  std::string t_config, t_out, t_log;
  train->add_option("--config", t_config, "JSON config file");
  train->add_option("--out", t_out, "output model file")->required();
  train->add_option("--log", t_log, "training log CSV (default: <out stem>.log.csv)");
  std::vector<std::string> t_hier, t_strs, t_flat;
  train->add_option("--hierarchy", t_hier, "hierarchy TSV (repeatable, pairs with --strings)");
  train->add_option("--strings", t_strs, "strings TSV (repeatable)");
  train->add_option("--flat_pairs", t_flat, "flat positive-pair TSV (repeatable)");
  uint64_t t_seed = 0, t_ckpt = 0, t_hash_seed = 0;
  double t_lr = 0, t_wd = 0, t_alpha = 0, t_beta = 0, t_lambda = 0, t_margin = 0;
  uint32_t t_batch = 0, t_epochs = 0, t_dim = 0, t_buckets = 0, t_nmin = 0, t_nmax = 0;
  bool t_unigrams = true;
  std::string t_mode, t_direction;
  std::vector<uint32_t> t_counts;
  auto* o_seed = train->add_option("--seed", t_seed);
  auto* o_lr = train->add_option("--learning_rate", t_lr);
  auto* o_wd = train->add_option("--weight_decay", t_wd);
  auto* o_batch = train->add_option("--batch_size", t_batch);
  auto* o_epochs = train->add_option("--epochs", t_epochs);
  auto* o_mode = train->add_option("--loss_mode", t_mode, "flat | hierarchical | mixed");
  auto* o_alpha = train->add_option("--alpha", t_alpha);
  auto* o_beta = train->add_option("--beta", t_beta);
  auto* o_lambda = train->add_option("--lambda", t_lambda);
  auto* o_margin = train->add_option("--margin", t_margin);
  auto* o_direction =
      train->add_option("--miner-direction,--miner_direction", t_direction, "hard | literal");
  auto* o_counts = train->add_option("--per_category_counts", t_counts)
                       ->delimiter(',')
                       ->expected(4);
  auto* o_dim = train->add_option("--dim", t_dim);
  auto* o_buckets = train->add_option("--n_buckets", t_buckets);
  auto* o_nmin = train->add_option("--ngram_min", t_nmin);
  auto* o_nmax = train->add_option("--ngram_max", t_nmax);
  auto* o_unigrams = train->add_option("--include_word_unigrams", t_unigrams);
  auto* o_hseed = train->add_option("--hash_seed", t_hash_seed);
  auto* o_ckpt = train->add_option("--checkpoint_every", t_ckpt);

  // embed
  auto* embed = app.add_subcommand("embed", "embed terms from a file");
  std::string e_model, e_terms, e_out;
  embed->add_option("--model", e_model)->required();
  embed->add_option("--terms", e_terms)->required();
  embed->add_option("--out", e_out)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a model on labeled pairs");
  std::string ev_model, ev_pairs, ev_out;
  uint64_t ev_seed = 0;
  eval->add_option("--model", ev_model)->required();
  eval->add_option("--pairs", ev_pairs)->required();
  eval->add_option("--out", ev_out)->required();
  auto* o_evseed = eval->add_option("--seed", ev_seed, "echoed into the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      json overrides = json::object();
      if (o_trees->count()) overrides["n_trees"] = s_trees;
      if (o_depth->count()) overrides["depth"] = s_depth;
      if (o_branch->count()) overrides["branching"] = s_branch;
      if (o_syn->count()) overrides["synonyms_per_node"] = s_syn;
      if (o_noise->count()) overrides["noise_tokens"] = s_noise;
      if (o_sseed->count()) overrides["seed"] = s_seed;
      return run_synth(synth_config, synth_out_dir, overrides);
    }
    if (validate->parsed()) return run_validate(v_hier, v_strs);
    if (pairs->parsed()) return run_pairs(p_hier, p_strs, p_per, p_seed, p_out);
    if (train->parsed()) {
      json overrides = json::object();
      if (o_seed->count()) overrides["seed"] = t_seed;
      if (o_lr->count()) overrides["learning_rate"] = t_lr;
      if (o_wd->count()) overrides["weight_decay"] = t_wd;
      if (o_batch->count()) overrides["batch_size"] = t_batch;
      if (o_epochs->count()) overrides["epochs"] = t_epochs;
      if (o_mode->count()) overrides["loss_mode"] = t_mode;
      if (o_alpha->count()) overrides["alpha"] = t_alpha;
      if (o_beta->count()) overrides["beta"] = t_beta;
      if (o_lambda->count()) overrides["lambda"] = t_lambda;
      if (o_margin->count()) overrides["margin"] = t_margin;
      if (o_direction->count()) overrides["miner_direction"] = t_direction;
      if (o_counts->count()) overrides["per_category_counts"] = t_counts;
      if (o_dim->count()) overrides["dim"] = t_dim;
      if (o_buckets->count()) overrides["n_buckets"] = t_buckets;
      if (o_nmin->count()) overrides["ngram_min"] = t_nmin;
      if (o_nmax->count()) overrides["ngram_max"] = t_nmax;
      if (o_unigrams->count()) overrides["include_word_unigrams"] = t_unigrams;
      if (o_hseed->count()) overrides["hash_seed"] = t_hash_seed;
      if (o_ckpt->count()) overrides["checkpoint_every"] = t_ckpt;
      return run_train(t_config, t_out, t_log, overrides, t_hier, t_strs, t_flat);
    }
    if (embed->parsed()) return run_embed(e_model, e_terms, e_out);
    if (eval->parsed()) {
      std::optional<uint64_t> seed;
      if (o_evseed->count()) seed = ev_seed;
      return run_eval(ev_model, ev_pairs, ev_out, seed);
    }
  } catch (const hembed::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
