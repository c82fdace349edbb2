#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slu/model.hpp"
#include "slu/nn.hpp"
#include "slu/semantics.hpp"

namespace slu {

struct Hypothesis {
  std::vector<int> tokens;  // without the end token
  double log_prob = 0.0;
  bool finished = false;
  bool truncated = false;  // force-finished at max_len
};

struct BeamConfig {
  int beam_size = 8;
  int max_len = 64;
  bool length_normalize = false;  // divide scores by length for ranking
};

// Standard beam search over one attention decoder: expands every live
// hypothesis by the full vocabulary, keeps the top `beam_size` by
// cumulative log-probability, retires finished hypotheses into the result
// pool. Deterministic: ties break on token-sequence lexicographic order.
std::vector<Hypothesis> beam_decode(Graph& g, const Decoder& dec,
                                    const Attention::KeyCache& cache, int sos,
                                    int eos, const BeamConfig& cfg);

struct PipelineResult {
  Hypothesis transcript;
  Hypothesis semantics;
  std::vector<std::string> diagnostics;
};

// Multistage two-pass inference: stage-1 beam search over graphemes, the
// single top transcript feeds the stage-2 text encoder and beam search.
PipelineResult pipeline_decode(const Model& model, const Tensor& feats,
                               const Vocab& vocab, const BeamConfig& cfg,
                               int semantics_max_len = 64);

struct Prediction {
  SemanticFrame frame;
  std::optional<std::string> transcript;
  std::optional<double> transcript_log_prob;
  double semantics_log_prob = 0.0;
  std::vector<std::string> diagnostics;
};

struct DecodeConfig {
  int beam_size = 8;
  int semantics_max_len = 64;
  int transcript_max_len_factor = 4;  // times the input frame count
  bool length_normalize = false;
};

// Architecture-dispatching decode + de-serialization. Total: malformed
// model output degrades to the fallback frame, never an error.
Prediction predict_semantics(const Model& model, const Utterance& u,
                             const Vocab& vocab, const DecodeConfig& cfg = {},
                             const FeatureConfig& fcfg = {});

// Multistage evaluation path that bypasses stage 1: decode semantics from a
// given transcript (used for the CFG-comparison methodology and tests).
Prediction predict_semantics_from_transcript(const Model& model,
                                             const std::string& transcript,
                                             const Vocab& vocab,
                                             const DecodeConfig& cfg = {});

struct DecodeRecord {
  std::string id;
  std::optional<std::string> transcript;
  std::string semantics_rendered;
  std::optional<double> transcript_log_prob;
  double semantics_log_prob = 0.0;
};

void save_decodes(const std::vector<DecodeRecord>& records,
                  const std::string& path);
std::vector<DecodeRecord> load_decodes(const std::string& path);

}  // namespace slu
