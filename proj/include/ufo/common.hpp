#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ufo {

// 64-bit compute everywhere; file storage is 32-bit (see io.hpp).
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;
using ObjectId = std::uint64_t;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define UFO_ERROR_TYPE(Name)                                 \
  struct Name : Error {                                      \
    explicit Name(const std::string& msg) : Error(msg) {}    \
  }

UFO_ERROR_TYPE(ZeroVectorError);
UFO_ERROR_TYPE(DimMismatchError);
UFO_ERROR_TYPE(ShapeMismatchError);
UFO_ERROR_TYPE(InfeasibleWorldError);
UFO_ERROR_TYPE(WorldMismatchError);
UFO_ERROR_TYPE(DegenerateDataError);
UFO_ERROR_TYPE(BadThresholdsError);
UFO_ERROR_TYPE(EmptyPoolError);
UFO_ERROR_TYPE(NoNegativesError);
UFO_ERROR_TYPE(EmptyTripletsError);
UFO_ERROR_TYPE(NonFiniteLossError);
UFO_ERROR_TYPE(DuplicateIdError);
UFO_ERROR_TYPE(NonUnitRowError);
UFO_ERROR_TYPE(EmptyIndexError);
UFO_ERROR_TYPE(EmptyRelevantSetError);
UFO_ERROR_TYPE(ShortRankingError);
UFO_ERROR_TYPE(IoError);
UFO_ERROR_TYPE(MissingArtifactError);
UFO_ERROR_TYPE(StaleArtifactError);
UFO_ERROR_TYPE(ValidationError);

#undef UFO_ERROR_TYPE

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64 core). The standard <random> distributions
// are not bit-stable across library implementations, so all randomness in
// the pipeline flows through this generator.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, two draws per call, no cached spare.
  double normal() {
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // [0, n), n > 0. Lemire reduction: deterministic, near-unbiased.
  std::uint64_t below(std::uint64_t n) {
    return std::uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Hashing (FNV-1a 64): artifact fingerprints and seed fan-out.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

inline std::uint64_t hash_doubles(const double* p, std::size_t n,
                                  std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(p, n * sizeof(double), h);
}

// Root seed fans out to stage seeds so one stage's seed can change without
// disturbing the others.
inline std::uint64_t seed_fold(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = fnv1a64(tag);
  h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return Rng(h).next_u64();
}

inline std::uint64_t seed_fold(std::uint64_t seed, std::uint64_t value) {
  std::uint64_t h = fnv1a64(&value, sizeof(value));
  h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return Rng(h).next_u64();
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Round-trip-exact text formatting for doubles.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline double parse_double(std::string_view s) {
  const std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end == tmp.c_str()) throw IoError("bad numeric field: " + tmp);
  return v;
}

}  // namespace ufo
