#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "hembed/synth.hpp"
#include "hembed/trainer.hpp"
#include "oracles.hpp"

using namespace hembed;
namespace fs = std::filesystem;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.dim = 8;
  cfg.n_buckets = 1024;
  return cfg;
}

TrainConfig tiny_train_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.encoder = tiny_encoder();
  cfg.seed = seed;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  return cfg;
}

TrainData synth_data(uint64_t seed) {
  TrainData data;
  data.forests.push_back(generate(SynthConfig{3, 3, 2, 2, 1, seed}));
  return data;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hembed-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("lr schedule is exactly linear with no warmup") {
  CHECK(lr_at(2e-3, 0, 100) == 2e-3);
  CHECK(lr_at(2e-3, 100, 100) == 0.0);
  CHECK(lr_at(2e-3, 50, 100) == 1e-3);
  for (uint64_t s = 0; s + 1 <= 10; ++s)
    CHECK_THAT(lr_at(1.0, s, 10) - lr_at(1.0, s + 1, 10),
               Catch::Matchers::WithinAbs(0.1, 1e-15));
  CHECK_THROWS_AS(lr_at(1.0, 5, 0), ConfigInvalid);
}

TEST_CASE("optimizer update closed forms") {
  const uint32_t dim = tiny_encoder().dim;

  SECTION("zero gradient on a touched bucket only decays the weight") {
    auto model = EmbeddingModel::random_init(tiny_encoder(), 4);
    OptimizerState state;
    const float before = model.row(10)[0];
    SparseGrad g;
    g[10] = std::vector<double>(dim, 0.0);
    apply_update(model, state, g, 0.01, 0.5);
    const float expected =
        static_cast<float>(static_cast<double>(before) - 0.01 * 0.5 * before);
    CHECK(model.row(10)[0] == expected);
    for (double m : state.first_moment.at(10)) CHECK(m == 0.0);
    for (double v : state.second_moment.at(10)) CHECK(v == 0.0);
    // untouched bucket is not decayed
    const float other = model.row(11)[0];
    apply_update(model, state, g, 0.01, 0.5);
    CHECK(model.row(11)[0] == other);
  }

  SECTION("zero learning rate leaves the model unchanged") {
    auto model = EmbeddingModel::random_init(tiny_encoder(), 5);
    const auto snapshot = model.weights();
    OptimizerState state;
    SparseGrad g;
    g[3] = std::vector<double>(dim, 1.25);
    apply_update(model, state, g, 0.0, 0.01);
    CHECK(model.weights() == snapshot);
    CHECK(state.step_count == 1);
  }

  SECTION("first bias-corrected step is a signed unit step plus decay") {
    auto model = EmbeddingModel::random_init(tiny_encoder(), 6);
    OptimizerState state;
    const double w0 = model.row(7)[0];
    const double w1 = model.row(7)[1];
    SparseGrad g;
    std::vector<double> vec(dim, 0.0);
    vec[0] = 1.0;
    g[7] = vec;
    const double lr = 0.003, wd = 0.01;
    apply_update(model, state, g, lr, wd);
    // m-hat = g, v-hat = g^2 after one step, so the step is lr*g/(|g|+eps).
    CHECK(model.row(7)[0] ==
          static_cast<float>(w0 - lr * (1.0 / (1.0 + 1e-8)) - lr * wd * w0));
    // zero-gradient dimension of a touched bucket sees decay only
    CHECK(model.row(7)[1] == static_cast<float>(w1 - lr * wd * w1));
  }

  SECTION("non-finite gradients are rejected") {
    auto model = EmbeddingModel::random_init(tiny_encoder(), 7);
    OptimizerState state;
    SparseGrad g;
    g[1] = std::vector<double>(dim, std::nan(""));
    CHECK_THROWS_AS(apply_update(model, state, g, 0.01, 0.0), NonFiniteGradient);
  }
}

TEST_CASE("one anchor, checkpoint every step: one step, two model files") {
  TempDir dir;
  TrainData data;
  std::istringstream h(""), s("code\tstring\nX\tfirst form\nX\tsecond form\n");
  data.forests.push_back(HierarchyForest::parse(h, s));

  TrainConfig cfg = tiny_train_config(9);
  cfg.epochs = 1;
  cfg.checkpoint_every = 1;
  const auto out = dir.path / "model.hprb";
  const auto result = train_files(data, cfg, out, dir.path / "log.csv");
  CHECK(result.total_steps == 1);
  CHECK(result.log.size() == 1);

  size_t model_files = 0;
  for (const auto& e : fs::directory_iterator(dir.path))
    if (e.path().extension() == ".hprb") ++model_files;
  CHECK(model_files == 2);
  CHECK(fs::exists(dir.path / "model.step1.hprb"));

  std::ifstream log(dir.path / "log.csv");
  std::string line;
  std::getline(log, line);
  CHECK(line == "step,lr,loss");
  std::getline(log, line);
  CHECK(line.rfind("0,", 0) == 0);
}

TEST_CASE("training is bit-reproducible") {
  TempDir dir;
  const auto data = synth_data(100);
  const TrainConfig cfg = tiny_train_config(55);
  train_files(data, cfg, dir.path / "a.hprb", dir.path / "a.log.csv");
  train_files(data, cfg, dir.path / "b.hprb", dir.path / "b.log.csv");
  CHECK(file_bytes(dir.path / "a.hprb") == file_bytes(dir.path / "b.hprb"));
  CHECK(file_bytes(dir.path / "a.log.csv") == file_bytes(dir.path / "b.log.csv"));

  // Different seed, different model.
  TrainConfig other = cfg;
  other.seed = 56;
  train_files(data, other, dir.path / "c.hprb", dir.path / "c.log.csv");
  CHECK(file_bytes(dir.path / "a.hprb") != file_bytes(dir.path / "c.hprb"));
}

TEST_CASE("checkpoint resume reproduces uninterrupted training bit-exactly") {
  const auto data = synth_data(200);
  TrainConfig cfg = tiny_train_config(77);
  cfg.epochs = 3;
  cfg.checkpoint_every = 3;

  const auto full = train(data, cfg);
  REQUIRE(full.total_steps > 4);

  std::optional<Checkpoint> captured;
  train(data, cfg, nullptr,
        [&](uint64_t step, const EmbeddingModel& m, const OptimizerState& o) {
          if (step == 3) captured = Checkpoint{m, o, step};
        });
  REQUIRE(captured.has_value());

  const auto resumed = train(data, cfg, &*captured);
  CHECK(resumed.model.weights() == full.model.weights());
  CHECK(resumed.opt.step_count == full.opt.step_count);

  SECTION("checkpoint files round-trip the state") {
    TempDir dir;
    save_checkpoint_file(dir.path / "c.ckpt", *captured);
    const auto loaded = load_checkpoint_file(dir.path / "c.ckpt");
    CHECK(loaded.next_step == captured->next_step);
    CHECK(loaded.model.weights() == captured->model.weights());
    CHECK(loaded.opt.first_moment == captured->opt.first_moment);
    CHECK(loaded.opt.second_moment == captured->opt.second_moment);
    const auto resumed2 = train(data, cfg, &loaded);
    CHECK(resumed2.model.weights() == full.model.weights());
  }

  SECTION("mismatched encoder config is rejected") {
    TrainConfig other = cfg;
    other.encoder.dim = 16;
    CHECK_THROWS_AS(train(data, other, &*captured), ConfigInvalid);
  }
}

TEST_CASE("loss trends down on synthetic data") {
  TrainData data;
  data.forests.push_back(generate(SynthConfig{6, 4, 3, 3, 1, 42}));
  TrainConfig cfg = tiny_train_config(1);
  cfg.batch_size = 64;
  cfg.epochs = 5;
  const auto result = train(data, cfg);
  REQUIRE(result.log.size() >= 20);
  const size_t k = result.log.size() / 10;
  double first = 0, last = 0;
  for (size_t i = 0; i < k; ++i) {
    first += result.log[i].loss;
    last += result.log[result.log.size() - 1 - i].loss;
  }
  CHECK(last / k < first / k);
  for (const auto& row : result.log) CHECK(std::isfinite(row.loss));
  for (float w : result.model.weights()) CHECK(std::isfinite(w));
}

TEST_CASE("flat pair sources train with mined negatives") {
  TrainData data;
  std::vector<std::pair<Term, Term>> pairs;
  static const char* words[] = {"renal", "kidney", "hepatic", "liver",
                                "cardiac", "heart", "gastric", "stomach"};
  for (int i = 0; i < 8; i += 2) pairs.emplace_back(words[i], words[i + 1]);
  data.flat_sources.push_back(pairs);

  TrainConfig cfg = tiny_train_config(3);
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.loss_mode = TrainMode::Flat;
  const auto result = train(data, cfg);
  CHECK(result.total_steps == 3);
  for (const auto& row : result.log) CHECK(std::isfinite(row.loss));

  // Mixed mode with both source kinds interleaves batches round-robin.
  TrainData both = synth_data(4);
  both.flat_sources.push_back(pairs);
  TrainConfig mixed = tiny_train_config(3);
  mixed.batch_size = 8;
  mixed.epochs = 1;
  mixed.loss_mode = TrainMode::Mixed;
  const auto r2 = train(both, mixed);
  const uint64_t forest_batches = (both.forests[0].size() + 7) / 8;
  CHECK(r2.total_steps == forest_batches + 1);
}

TEST_CASE("training without data is an error") {
  CHECK_THROWS_AS(train(TrainData{}, tiny_train_config(1)), NoTrainingData);
  TrainConfig bad = tiny_train_config(1);
  bad.learning_rate = 0;
  CHECK_THROWS_AS(train(synth_data(1), bad), ConfigInvalid);
}
