#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slu/corpus.hpp"
#include "slu/nn.hpp"
#include "slu/semantics.hpp"
#include "slu/tensor.hpp"

namespace slu {

enum class Architecture { direct, joint, multitask, multistage };
enum class Coupling { independent, argmax, sampled_softmax };

const char* architecture_name(Architecture a);
Architecture architecture_from_name(const std::string& s);
const char* coupling_name(Coupling c);
Coupling coupling_from_name(const std::string& s);

struct StackSpec {
  int layers = 0;
  int hidden = 0;
};

// Layer/width layout per architecture; enc2/dec2 are the multistage second
// stage (and dec2 the multitask semantics decoder). The second encoder is
// always bidirectional, the first unidirectional.
struct ModelConfig {
  Architecture architecture = Architecture::joint;
  std::optional<Coupling> coupling;
  StackSpec enc1{2, 64};
  StackSpec dec1{1, 64};
  StackSpec enc2{2, 64};
  StackSpec dec2{1, 64};
  int emb_dim = 16;
  int num_heads = 4;
  int feature_dim = 48;

  static ModelConfig desk_preset(Architecture arch,
                                 std::optional<Coupling> coupling = {});
  static ModelConfig full_preset(Architecture arch,
                                  std::optional<Coupling> coupling = {});
  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double transcript_loss = 0.0;  // stage-1 loss for multistage
  double semantics_loss = 0.0;   // stage-2 loss for multistage
  int correct_tokens = 0;
  int total_tokens = 0;
};

struct LossOptions {
  // RNG for the sampled-softmax coupling; required in that mode.
  Rng* coupling_rng = nullptr;
  // Temperature applied to stage-1 logits when sampling (selection only;
  // the straight-through probability stays at temperature 1).
  double sample_temperature = 1.0;
};

// One architecture's parameters plus its train-time loss graphs and the
// encoder/decoder access inference needs.
class Model {
 public:
  Model(ModelConfig config, int vocab_size, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  int vocab_size() const { return vocab_size_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Teacher-forced negative log-likelihood for one utterance, built on `g`.
  // Each component is a per-token mean; `total` sums the components.
  Var loss(Graph& g, const Utterance& u, const Vocab& vocab,
           const FeatureConfig& fcfg, LossBreakdown& out,
           const LossOptions& opt = {}) const;

  // Encoder keys for decoding. Multistage: acoustic encoder is stage 1.
  std::vector<Var> encode_features(Graph& g, const Tensor& feats) const;
  // Multistage second-stage text encoder (plain embeddings).
  std::vector<Var> encode_transcript(Graph& g,
                                     const std::vector<int>& tokens) const;

  bool has_transcript_decoder() const;
  const Decoder& transcript_decoder() const;  // dec1 (joint uses it for W:S)
  const Decoder& semantics_decoder() const;

  // Target construction helpers (teacher forcing appends one end token).
  static std::vector<int> semantics_target(const Utterance& u,
                                           const Vocab& vocab);
  static std::vector<int> transcript_target(const Utterance& u,
                                            const Vocab& vocab);
  static std::vector<int> joint_target(const Utterance& u, const Vocab& vocab);

 private:
  Var teacher_forced_nll(Graph& g, const Decoder& dec,
                         const Attention::KeyCache& cache,
                         const std::vector<int>& target, int sos,
                         LossBreakdown& out, double& component) const;
  Var multistage_loss(Graph& g, const Utterance& u, const Vocab& vocab,
                      const FeatureConfig& fcfg, LossBreakdown& out,
                      const LossOptions& opt) const;

  ModelConfig config_;
  int vocab_size_ = 0;
  ParamStore params_;
  Encoder enc1_;
  std::optional<Encoder> enc2_;
  Tensor* enc2_emb_ = nullptr;
  std::optional<Decoder> dec1_;
  std::optional<Decoder> dec2_;
};

}  // namespace slu
