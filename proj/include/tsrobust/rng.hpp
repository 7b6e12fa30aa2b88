#pragma once

#include <cstdint>
#include <random>

namespace tsrobust {

// splitmix64 mixer; used to derive independent stream seeds from a master
// seed without correlating the streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded random stream. Each worker owns its own instance; replaying the
// same seed replays the draw sequence bitwise on a given platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }

  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(eng_);
  }

  std::uint64_t next_u64() { return eng_(); }

  // Independent stream keyed off this stream's seed lineage.
  Rng derive(std::uint64_t salt) { return Rng(splitmix64(next_u64() ^ salt)); }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) {
  return splitmix64(master ^ splitmix64(salt));
}

}  // namespace tsrobust
