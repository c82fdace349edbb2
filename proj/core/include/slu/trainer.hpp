#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slu/corpus.hpp"
#include "slu/model.hpp"
#include "slu/nn.hpp"
#include "slu/rng.hpp"

namespace slu {

struct TrainConfig {
  int steps = 3000;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> clip_norm = 5.0;
  std::uint64_t seed = 1;
  int checkpoint_interval = 1000;
  double sample_temperature = 1.0;  // sampled-softmax coupling

  void validate() const;
};

// Adam moments aligned with the ParamStore entry order.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;

  static AdamState init(const ParamStore& params);
};

// Applies one Adam update (with bias correction) from the gradients held in
// the parameter tensors; clips by global norm first when configured.
void adam_step(ParamStore& params, AdamState& state, const TrainConfig& cfg);

// Returns the pre-clip global gradient norm.
double clip_gradients(ParamStore& params, double max_norm);

struct MetricRecord {
  int step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

void save_metric_log(const std::vector<MetricRecord>& log,
                     const std::string& path);

// Full optimizer snapshot: parameters, Adam moments, step counter, RNG
// state, and the model/train config needed to rebuild the model.
struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  int vocab_size = 0;
  std::int64_t step = 0;
  std::string rng_state;
  // parallel to ParamStore entries
  std::vector<std::string> names;
  std::vector<Tensor> values;
  AdamState adam;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

Checkpoint make_checkpoint(const Model& model, const TrainConfig& cfg,
                           const AdamState& adam, std::int64_t step,
                           const Rng& rng);
// Restores parameter values into a model built from the checkpoint config.
void restore_params(Model& model, const Checkpoint& ckpt);

struct TrainResult {
  std::vector<MetricRecord> log;
  Checkpoint final_checkpoint;
};

// Maximum-likelihood training loop: deterministic batch sampling given the
// seed, per-batch mean loss, Adam updates. Resuming from a checkpoint
// reproduces the uninterrupted run bit-exactly.
// When `checkpoint_dir` is non-empty, a snapshot is written there every
// `checkpoint_interval` steps (ckpt_step<N>.bin) plus a final ckpt.bin.
TrainResult train(Model& model, const std::vector<Utterance>& corpus,
                  const Vocab& vocab, const TrainConfig& cfg,
                  const FeatureConfig& fcfg = {},
                  const Checkpoint* resume_from = nullptr,
                  const std::string& checkpoint_dir = "");

}  // namespace slu
