#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace slu {

// Deterministic RNG with portable distributions. std::*_distribution output
// is implementation-defined, so uniform/normal are derived directly from the
// engine's bit stream to keep corpora and checkpoints bit-exact across
// platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, one sample per call (the spare is kept).
  double normal(double mean = 0.0, double stddev = 1.0);

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Index sampled according to (non-negative, not necessarily normalized)
  // weights.
  std::size_t categorical(const std::vector<double>& weights);

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const;

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent child seed from (seed, index); splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace slu
