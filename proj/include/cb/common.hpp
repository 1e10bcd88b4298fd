#pragma once

// Shared plumbing: error types, deterministic RNG streams, byte hashing,
// small filesystem helpers and a fixed-order parallel map.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace cb {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

// FNV-1a over raw bytes. Used for content hashes, parameter hashes and
// per-stage seed derivation; stable across platforms.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return fnv1a64(&b, sizeof(b), a ^ 0x9e3779b97f4a7c15ull);
}

// Deterministic RNG. Wraps mt19937_64 but generates uniform/normal variates
// itself so streams do not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  // Box-Muller, cosine branch only so one call consumes exactly two draws.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 gen_;
};

// Named sub-stream derivation: hash(seed, label) so adding a consumer never
// perturbs the draws of another.
inline Rng derive_rng(std::uint64_t seed, std::string_view label) {
  return Rng(fnv1a64(label, fnv1a64(&seed, sizeof(seed))));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return fnv1a64(label, fnv1a64(&seed, sizeof(seed)));
}

// Worker-thread cap: CB_THREADS, else hardware concurrency (at least 1).
inline int worker_threads() {
  if (const char* env = std::getenv("CB_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Each index
// writes only its own slot, so results are identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int threads = std::min<std::size_t>(worker_threads(), n == 0 ? 1 : n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = static_cast<std::size_t>(t); i < n;
           i += static_cast<std::size_t>(threads))
        fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace cb
