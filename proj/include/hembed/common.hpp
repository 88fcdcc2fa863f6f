#ifndef HEMBED_COMMON_HPP
#define HEMBED_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hembed {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parsing / forest validation
struct MalformedLine final : Error { using Error::Error; };
struct DuplicateParent final : Error { using Error::Error; };
struct CycleDetected final : Error { using Error::Error; };
struct OrphanCode final : Error { using Error::Error; };
struct EmptyInput final : Error { using Error::Error; };
struct AmbiguousString final : Error { using Error::Error; };
struct UnknownCode final : Error { using Error::Error; };
struct CategoryExhausted final : Error { using Error::Error; };

// Encoder / loss / numerics
struct EmptyTerm final : Error { using Error::Error; };
struct ZeroVector final : Error { using Error::Error; };
struct NonFiniteInput final : Error { using Error::Error; };
struct NonFiniteGradient final : Error { using Error::Error; };

// Config / data plumbing
struct ConfigInvalid final : Error { using Error::Error; };
struct NoTrainingData final : Error { using Error::Error; };
struct IoError final : Error { using Error::Error; };

// Metrics
struct OneClassOnly final : Error { using Error::Error; };
struct DegenerateInput final : Error { using Error::Error; };
struct InsufficientCategories final : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Hashing and seeding
// ---------------------------------------------------------------------------

// Finalizer from the splitmix64 generator; a good 64-bit mixer.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combine two seeds into a new one; order-sensitive.
inline uint64_t mix(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

// Seeded FNV-1a over bytes. All feature hashing and per-key randomness in the
// library funnels through this so results never depend on std::hash.
inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 0) {
  uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

// Thin wrapper over mt19937_64 (engine sequence is pinned by the standard).
// Bounded draws and shuffling are implemented here rather than with
// std::uniform_int_distribution, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next() { return gen_(); }

  // Unbiased draw in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) throw ConfigInvalid("Rng::below: empty range");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform double in [0, 1) with 53 bits.
  double real() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  size_t index(size_t n) { return static_cast<size_t>(below(n)); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Small string helpers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// ---------------------------------------------------------------------------
// Float formatting: fixed decimal notation, 9 significant digits
// ---------------------------------------------------------------------------

inline std::string format_sig9(double x) {
  if (!std::isfinite(x)) throw NonFiniteInput("format_sig9: non-finite value");
  if (x == 0.0) return "0";
  const double ax = std::fabs(x);
  int decimals = 8 - static_cast<int>(std::floor(std::log10(ax)));
  if (decimals < 0) decimals = 0;
  if (decimals > 17) decimals = 17;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, x);
  return std::string(buf);
}

}  // namespace hembed

#endif  // HEMBED_COMMON_HPP
