#ifndef HEMBED_ENCODER_HPP
#define HEMBED_ENCODER_HPP

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hembed/common.hpp"
#include "hembed/hierarchy.hpp"

namespace hembed {

struct EncoderConfig {
  uint32_t dim = 64;
  uint32_t n_buckets = 65536;
  uint32_t ngram_min = 3;
  uint32_t ngram_max = 4;
  bool include_word_unigrams = true;
  uint64_t hash_seed = 0;

  void validate() const {
    if (dim < 2) throw ConfigInvalid("encoder: dim must be >= 2");
    if (n_buckets < 256) throw ConfigInvalid("encoder: n_buckets must be >= 256");
    if (ngram_min < 1 || ngram_min > ngram_max || ngram_max > 8)
      throw ConfigInvalid("encoder: need 1 <= ngram_min <= ngram_max <= 8");
  }

  bool operator==(const EncoderConfig&) const = default;
};

// Sorted multiset of hash-bucket ids; one entry per emitted feature.
struct FeatureSet {
  std::vector<uint32_t> bucket_ids;
};

using EmbeddingVector = std::vector<double>;

// Sparse weight gradient: bucket id -> dim-vector. Ordered so every reduction
// over it visits buckets ascending.
using SparseGrad = std::map<uint32_t, std::vector<double>>;

// Lowercase, trim, collapse whitespace runs to single spaces.
inline std::string normalize_term(const Term& term) {
  std::string out;
  out.reserve(term.size());
  bool pending_space = false;
  for (char raw : term) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

// Boundary-marked character n-grams per word, plus optional word unigrams,
// hashed into [0, n_buckets).
inline FeatureSet featurize(const EncoderConfig& config, const Term& term) {
  config.validate();
  const std::string norm = normalize_term(term);
  if (norm.empty()) throw EmptyTerm("featurize: empty term");

  FeatureSet fs;
  auto emit = [&](std::string_view feature) {
    fs.bucket_ids.push_back(
        static_cast<uint32_t>(fnv1a64(feature, config.hash_seed) % config.n_buckets));
  };

  for (const std::string& word : split(norm, ' ')) {
    const std::string wrapped = "^" + word + "$";
    for (uint32_t len = config.ngram_min; len <= config.ngram_max; ++len) {
      if (wrapped.size() < len) break;
      for (size_t i = 0; i + len <= wrapped.size(); ++i)
        emit(std::string_view(wrapped).substr(i, len));
    }
    if (config.include_word_unigrams) emit(word);
  }
  std::sort(fs.bucket_ids.begin(), fs.bucket_ids.end());
  return fs;
}

// Hashed-bucket embedding table. Weights are stored and serialized as float32;
// all arithmetic that consumes them runs in double.
class EmbeddingModel {
 public:
  EmbeddingModel(EncoderConfig config, std::vector<float> weights)
      : config_(config), weights_(std::move(weights)) {
    config_.validate();
    if (weights_.size() != static_cast<size_t>(config_.n_buckets) * config_.dim)
      throw ConfigInvalid("model: weight matrix shape mismatch");
  }

  static EmbeddingModel zeros(const EncoderConfig& config) {
    config.validate();
    return EmbeddingModel(
        config, std::vector<float>(static_cast<size_t>(config.n_buckets) * config.dim, 0.f));
  }

  // Independent uniform init on [-0.5/dim, 0.5/dim).
  static EmbeddingModel random_init(const EncoderConfig& config, uint64_t seed) {
    config.validate();
    std::vector<float> w(static_cast<size_t>(config.n_buckets) * config.dim);
    Rng rng(seed);
    const double scale = 0.5 / config.dim;
    for (float& x : w) x = static_cast<float>((2.0 * rng.real() - 1.0) * scale);
    return EmbeddingModel(config, std::move(w));
  }

  const EncoderConfig& config() const { return config_; }
  std::vector<float>& weights() { return weights_; }
  const std::vector<float>& weights() const { return weights_; }

  std::span<const float> row(uint32_t bucket) const {
    return {weights_.data() + static_cast<size_t>(bucket) * config_.dim, config_.dim};
  }
  std::span<float> row(uint32_t bucket) {
    return {weights_.data() + static_cast<size_t>(bucket) * config_.dim, config_.dim};
  }

  FeatureSet featurize(const Term& term) const { return hembed::featurize(config_, term); }

  // Mean of the weight rows indexed by the term's features, multiplicity
  // respected. An empty feature set (possible only under degenerate configs)
  // yields the zero vector.
  EmbeddingVector embed(const Term& term) const {
    const FeatureSet fs = featurize(term);
    EmbeddingVector v(config_.dim, 0.0);
    if (fs.bucket_ids.empty()) return v;
    for (uint32_t b : fs.bucket_ids) {
      const auto r = row(b);
      for (uint32_t d = 0; d < config_.dim; ++d) v[d] += r[d];
    }
    const double inv = 1.0 / static_cast<double>(fs.bucket_ids.size());
    for (double& x : v) x *= inv;
    return v;
  }

  // Backward pass of embed: each touched bucket receives
  // upstream * multiplicity / feature_count.
  SparseGrad embed_gradient(const Term& term, std::span<const double> upstream) const {
    const FeatureSet fs = featurize(term);
    SparseGrad grad;
    bool all_zero = true;
    for (double x : upstream) {
      if (!std::isfinite(x)) throw NonFiniteGradient("embed_gradient: non-finite upstream");
      if (x != 0.0) all_zero = false;
    }
    if (all_zero || fs.bucket_ids.empty()) return grad;
    const double inv = 1.0 / static_cast<double>(fs.bucket_ids.size());
    for (size_t i = 0; i < fs.bucket_ids.size();) {
      size_t j = i;
      while (j < fs.bucket_ids.size() && fs.bucket_ids[j] == fs.bucket_ids[i]) ++j;
      const double w = inv * static_cast<double>(j - i);
      auto& g = grad[fs.bucket_ids[i]];
      g.assign(config_.dim, 0.0);
      for (uint32_t d = 0; d < config_.dim; ++d) g[d] = upstream[d] * w;
      i = j;
    }
    return grad;
  }

  void save(std::ostream& out) const;
  void save_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path.string());
    save(out);
    if (!out) throw IoError("write failed: " + path.string());
  }
  static EmbeddingModel load(std::istream& in);
  static EmbeddingModel load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    return load(in);
  }

 private:
  EncoderConfig config_;
  std::vector<float> weights_;
};

// Standard cosine on doubles, clamped to [-1, 1] against rounding.
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ConfigInvalid("cosine: dimension mismatch");
  double dot = 0, nu = 0, nv = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw ZeroVector("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Model file format: magic "HPRB", little-endian fields, float32 weights.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16),
                        static_cast<unsigned char>(x >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, uint64_t x) {
  put_u32(out, static_cast<uint32_t>(x));
  put_u32(out, static_cast<uint32_t>(x >> 32));
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("model file truncated");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline uint64_t get_u64(std::istream& in) {
  const uint64_t lo = get_u32(in);
  return lo | static_cast<uint64_t>(get_u32(in)) << 32;
}

inline void put_f32(std::ostream& out, float x) {
  uint32_t bits;
  std::memcpy(&bits, &x, 4);
  put_u32(out, bits);
}

inline float get_f32(std::istream& in) {
  const uint32_t bits = get_u32(in);
  float x;
  std::memcpy(&x, &bits, 4);
  return x;
}

inline void put_f64(std::ostream& out, double x) {
  uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_u64(out, bits);
}

inline double get_f64(std::istream& in) {
  const uint64_t bits = get_u64(in);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

constexpr uint32_t kModelFormatVersion = 1;

}  // namespace detail

inline void EmbeddingModel::save(std::ostream& out) const {
  out.write("HPRB", 4);
  detail::put_u32(out, detail::kModelFormatVersion);
  detail::put_u32(out, config_.dim);
  detail::put_u32(out, config_.n_buckets);
  detail::put_u32(out, config_.ngram_min);
  detail::put_u32(out, config_.ngram_max);
  out.put(config_.include_word_unigrams ? 1 : 0);
  detail::put_u64(out, config_.hash_seed);
  for (float w : weights_) detail::put_f32(out, w);
}

inline EmbeddingModel EmbeddingModel::load(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "HPRB", 4) != 0)
    throw IoError("not a model file (bad magic)");
  const uint32_t version = detail::get_u32(in);
  if (version != detail::kModelFormatVersion)
    throw IoError("unsupported model format version " + std::to_string(version));
  EncoderConfig cfg;
  cfg.dim = detail::get_u32(in);
  cfg.n_buckets = detail::get_u32(in);
  cfg.ngram_min = detail::get_u32(in);
  cfg.ngram_max = detail::get_u32(in);
  const int flag = in.get();
  if (flag != 0 && flag != 1) throw IoError("model file corrupt (unigram flag)");
  cfg.include_word_unigrams = flag == 1;
  cfg.hash_seed = detail::get_u64(in);
  std::vector<float> w(static_cast<size_t>(cfg.n_buckets) * cfg.dim);
  for (float& x : w) x = detail::get_f32(in);
  return EmbeddingModel(cfg, std::move(w));
}

}  // namespace hembed

#endif  // HEMBED_ENCODER_HPP
