#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slu/grammar.hpp"
#include "slu/semantics.hpp"
#include "slu/tensor.hpp"

namespace slu {

// Pseudo-acoustic feature pipeline: per grapheme a fixed prototype vector,
// repeated for a jittered duration with additive noise, then 3-frame
// stacking and x3 downsampling. D = 3 * base_dim.
struct FeatureConfig {
  int base_dim = 16;
  int dur_min = 2;
  int dur_max = 4;
  double noise_sigma = 0.1;

  int stacked_dim() const { return 3 * base_dim; }
};

// Deterministic in (transcript, seed, cfg); bit-identical across runs.
Tensor synth_features(const std::string& transcript, std::uint64_t seed,
                      const FeatureConfig& cfg = {});

// One (X, W, S) training / evaluation triple. Features are regenerated on
// demand from (transcript, feature_seed).
struct Utterance {
  std::string id;
  std::string transcript;
  SemanticFrame frame;
  std::uint64_t feature_seed = 0;

  Tensor features(const FeatureConfig& cfg = {}) const {
    return synth_features(transcript, feature_seed, cfg);
  }
};

// Deterministic given (grammar, n, seed); per-utterance RNG streams are
// derived from (seed, index), so generation order does not matter.
std::vector<Utterance> generate_corpus(const Grammar& grammar, int n,
                                       std::uint64_t seed);

// Line format: id<TAB>transcript<TAB>rendered-semantics<TAB>feature_seed
void save_corpus(const std::vector<Utterance>& corpus, const Vocab& vocab,
                 const std::string& path);
std::vector<Utterance> load_corpus(const std::string& path,
                                   const Vocab& vocab);

}  // namespace slu
