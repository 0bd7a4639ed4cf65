// Counter-based deterministic random streams. Every consumer derives its own
// stream from (global seed, namespace, instance), so one stage changing how
// much randomness it consumes never shifts another stage's sequence.
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace tokcom {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

class RngStream {
 public:
  RngStream() : key_(0) {}
  RngStream(std::uint64_t seed, std::string_view ns, std::uint64_t instance = 0)
      : key_(detail::mix64(detail::mix64(seed) ^ detail::fnv1a(ns)) ^ detail::mix64(instance)) {}

  std::uint64_t next_u64() { return detail::mix64(key_ ^ detail::mix64(++counter_)); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in (0, 1]: strictly positive, includes 1.
  double uniform_open_closed() { return 1.0 - uniform(); }

  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform_open_closed();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace tokcom
