#include "slu/model.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <stdexcept>

namespace slu {

const char* architecture_name(Architecture a) {
  switch (a) {
    case Architecture::direct: return "direct";
    case Architecture::joint: return "joint";
    case Architecture::multitask: return "multitask";
    case Architecture::multistage: return "multistage";
  }
  return "?";
}

Architecture architecture_from_name(const std::string& s) {
  for (Architecture a : {Architecture::direct, Architecture::joint,
                         Architecture::multitask, Architecture::multistage})
    if (s == architecture_name(a)) return a;
  throw std::invalid_argument("unknown architecture: " + s);
}

const char* coupling_name(Coupling c) {
  switch (c) {
    case Coupling::independent: return "independent";
    case Coupling::argmax: return "argmax";
    case Coupling::sampled_softmax: return "sampled_softmax";
  }
  return "?";
}

Coupling coupling_from_name(const std::string& s) {
  for (Coupling c : {Coupling::independent, Coupling::argmax,
                     Coupling::sampled_softmax})
    if (s == coupling_name(c)) return c;
  throw std::invalid_argument("unknown coupling: " + s);
}

ModelConfig ModelConfig::desk_preset(Architecture arch,
                                     std::optional<Coupling> coupling) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.coupling = coupling;
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::full_preset(Architecture arch,
                                      std::optional<Coupling> coupling) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.coupling = coupling;
  cfg.emb_dim = 128;
  cfg.feature_dim = 240;
  switch (arch) {
    case Architecture::direct:
    case Architecture::joint:
      cfg.enc1 = {5, 1400};
      cfg.dec1 = {2, 1024};
      break;
    case Architecture::multitask:
      cfg.enc1 = {5, 1400};
      cfg.dec1 = {2, 512};
      cfg.dec2 = {2, 512};
      break;
    case Architecture::multistage:
      cfg.enc1 = {5, 700};
      cfg.dec1 = {2, 512};
      cfg.enc2 = {5, 700};
      cfg.dec2 = {2, 512};
      break;
  }
  cfg.validate();
  return cfg;
}

void ModelConfig::validate() const {
  if ((architecture == Architecture::multistage) != coupling.has_value())
    throw std::invalid_argument(
        "ModelConfig: coupling must be present iff architecture is multistage");
  for (const StackSpec* s : {&enc1, &dec1, &enc2, &dec2})
    if (s->layers < 1 || s->hidden < 1)
      throw std::invalid_argument("ModelConfig: invalid stack spec");
  if (emb_dim < 1 || num_heads < 1 || feature_dim < 1)
    throw std::invalid_argument("ModelConfig: invalid dims");
}

Model::Model(ModelConfig config, int vocab_size, std::uint64_t seed)
    : config_(std::move(config)), vocab_size_(vocab_size) {
  config_.validate();
  if (vocab_size_ < 2) throw std::invalid_argument("Model: vocab too small");
  Rng rng(seed);
  Architecture arch = config_.architecture;
  ParamRole enc_role, dec1_role, dec2_role;
  switch (arch) {
    case Architecture::direct:
    case Architecture::joint:
      enc_role = dec1_role = dec2_role = ParamRole::single;
      break;
    case Architecture::multitask:
      enc_role = ParamRole::encoder;
      dec1_role = ParamRole::decoder_w;
      dec2_role = ParamRole::decoder_s;
      break;
    case Architecture::multistage:
      enc_role = dec1_role = ParamRole::stage1;
      dec2_role = ParamRole::stage2;
      break;
  }
  enc1_ = Encoder::create(params_, "enc1", enc_role, config_.enc1.layers,
                          config_.feature_dim, config_.enc1.hidden,
                          /*bidirectional=*/false, rng);
  dec1_ = Decoder::create(params_, "dec1", dec1_role, config_.dec1.layers,
                          vocab_size_, config_.emb_dim, config_.dec1.hidden,
                          config_.num_heads, enc1_.output_dim(), rng);
  if (arch == Architecture::multitask) {
    dec2_ = Decoder::create(params_, "dec2", dec2_role, config_.dec2.layers,
                            vocab_size_, config_.emb_dim, config_.dec2.hidden,
                            config_.num_heads, enc1_.output_dim(), rng);
  } else if (arch == Architecture::multistage) {
    enc2_emb_ = params_.add(
        "enc2.emb", ParamRole::stage2,
        init_uniform_matrix(vocab_size_, config_.emb_dim, config_.emb_dim, rng));
    enc2_ = Encoder::create(params_, "enc2", ParamRole::stage2,
                            config_.enc2.layers, config_.emb_dim,
                            config_.enc2.hidden, /*bidirectional=*/true, rng);
    dec2_ = Decoder::create(params_, "dec2", dec2_role, config_.dec2.layers,
                            vocab_size_, config_.emb_dim, config_.dec2.hidden,
                            config_.num_heads, enc2_->output_dim(), rng);
  }
}

std::vector<Var> Model::encode_features(Graph& g, const Tensor& feats) const {
  if (feats.rank() != 2 || feats.shape[1] != config_.feature_dim)
    throw ShapeError("encode_features: expected [T," +
                     std::to_string(config_.feature_dim) + "], got " +
                     feats.shape_str());
  std::vector<Var> inputs;
  inputs.reserve(static_cast<std::size_t>(feats.shape[0]));
  for (int t = 0; t < feats.shape[0]; ++t) {
    Tensor row({feats.shape[1]});
    for (int j = 0; j < feats.shape[1]; ++j) row.at(j) = feats.at(t, j);
    inputs.push_back(g.constant(std::move(row)));
  }
  return enc1_.run(g, inputs);
}

std::vector<Var> Model::encode_transcript(Graph& g,
                                          const std::vector<int>& tokens) const {
  if (!enc2_) throw std::logic_error("encode_transcript: not a multistage model");
  if (tokens.empty())
    throw std::invalid_argument("encode_transcript: empty token sequence");
  std::vector<Var> inputs;
  inputs.reserve(tokens.size());
  for (int id : tokens)
    inputs.push_back(embed_lookup(g.leaf(enc2_emb_), id));
  return enc2_->run(g, inputs);
}

bool Model::has_transcript_decoder() const {
  return config_.architecture != Architecture::direct;
}

const Decoder& Model::transcript_decoder() const {
  if (!has_transcript_decoder())
    throw std::logic_error("transcript_decoder: direct model has none");
  return *dec1_;
}

const Decoder& Model::semantics_decoder() const {
  switch (config_.architecture) {
    case Architecture::direct:
    case Architecture::joint:
      return *dec1_;
    case Architecture::multitask:
    case Architecture::multistage:
      return *dec2_;
  }
  throw std::logic_error("unreachable");
}

std::vector<int> Model::semantics_target(const Utterance& u,
                                         const Vocab& vocab) {
  std::vector<int> t = serialize(u.frame, vocab);
  t.push_back(vocab.eos());
  return t;
}

std::vector<int> Model::transcript_target(const Utterance& u,
                                          const Vocab& vocab) {
  std::vector<int> t = vocab.encode_graphemes(u.transcript);
  t.push_back(vocab.eos());
  return t;
}

std::vector<int> Model::joint_target(const Utterance& u, const Vocab& vocab) {
  std::vector<int> t = vocab.encode_graphemes(u.transcript);
  std::vector<int> s = serialize(u.frame, vocab);
  t.insert(t.end(), s.begin(), s.end());
  t.push_back(vocab.eos());
  return t;
}

Var Model::teacher_forced_nll(Graph& g, const Decoder& dec,
                              const Attention::KeyCache& cache,
                              const std::vector<int>& target, int sos,
                              LossBreakdown& out, double& component) const {
  if (target.empty())
    throw std::invalid_argument("teacher_forced_nll: empty target");
  Decoder::State state = dec.initial_state(g);
  Var nll{};
  int prev = sos;
  for (std::size_t t = 0; t < target.size(); ++t) {
    Var logits = dec.step(g, prev, state, cache);
    Var logp = log_softmax(logits);
    Var step_loss = scale(slice(logp, target[t], 1), real(-1));
    nll = (t == 0) ? step_loss : add(nll, step_loss);
    const Tensor& lv = logits.value();
    int argmax = static_cast<int>(
        std::max_element(lv.data.begin(), lv.data.end()) - lv.data.begin());
    if (argmax == target[t]) ++out.correct_tokens;
    ++out.total_tokens;
    prev = target[t];
  }
  nll = scale(nll, static_cast<real>(1.0 / static_cast<double>(target.size())));
  component = static_cast<double>(nll.value().data[0]);
  return nll;
}

Var Model::loss(Graph& g, const Utterance& u, const Vocab& vocab,
                const FeatureConfig& fcfg, LossBreakdown& out,
                const LossOptions& opt) const {
  Tensor feats = u.features(fcfg);
  switch (config_.architecture) {
    case Architecture::direct: {
      std::vector<Var> keys = encode_features(g, feats);
      Attention::KeyCache cache = dec1_->attn.project_keys(g, keys);
      Var nll = teacher_forced_nll(g, *dec1_, cache,
                                   semantics_target(u, vocab), vocab.sos(),
                                   out, out.semantics_loss);
      out.total = static_cast<double>(nll.value().data[0]);
      return nll;
    }
    case Architecture::joint: {
      std::vector<Var> keys = encode_features(g, feats);
      Attention::KeyCache cache = dec1_->attn.project_keys(g, keys);
      Var nll = teacher_forced_nll(g, *dec1_, cache, joint_target(u, vocab),
                                   vocab.sos(), out, out.semantics_loss);
      out.total = static_cast<double>(nll.value().data[0]);
      return nll;
    }
    case Architecture::multitask: {
      std::vector<Var> keys = encode_features(g, feats);
      Attention::KeyCache cache_w = dec1_->attn.project_keys(g, keys);
      Attention::KeyCache cache_s = dec2_->attn.project_keys(g, keys);
      Var loss_w = teacher_forced_nll(g, *dec1_, cache_w,
                                      transcript_target(u, vocab), vocab.sos(),
                                      out, out.transcript_loss);
      Var loss_s = teacher_forced_nll(g, *dec2_, cache_s,
                                      semantics_target(u, vocab), vocab.sos(),
                                      out, out.semantics_loss);
      Var total = add(loss_w, loss_s);
      out.total = static_cast<double>(total.value().data[0]);
      return total;
    }
    case Architecture::multistage:
      return multistage_loss(g, u, vocab, fcfg, out, opt);
  }
  throw std::logic_error("unreachable");
}

Var Model::multistage_loss(Graph& g, const Utterance& u, const Vocab& vocab,
                           const FeatureConfig& fcfg, LossBreakdown& out,
                           const LossOptions& opt) const {
  Coupling coupling = *config_.coupling;
  Tensor feats = u.features(fcfg);
  std::vector<Var> keys1 = encode_features(g, feats);
  Attention::KeyCache cache1 = dec1_->attn.project_keys(g, keys1);

  std::vector<int> w_target = transcript_target(u, vocab);
  std::size_t n_graphemes = w_target.size() - 1;  // last token is eos

  // Stage 1: teacher-forced transcript loss; in coupled modes, also record
  // the predicted token per position and its softmax probability for the
  // straight-through connection into stage 2.
  Decoder::State state = dec1_->initial_state(g);
  Var stage1{};
  std::vector<int> picked;
  std::vector<Var> pick_factor;  // forward value 1; gradient flows into p
  int prev = vocab.sos();
  for (std::size_t t = 0; t < w_target.size(); ++t) {
    Var logits = dec1_->step(g, prev, state, cache1);
    Var logp = log_softmax(logits);
    Var step_loss = scale(slice(logp, w_target[t], 1), real(-1));
    stage1 = (t == 0) ? step_loss : add(stage1, step_loss);
    // Copy, not reference: the softmax below appends graph nodes, which can
    // reallocate node storage and invalidate references into it.
    const Tensor lv = logits.value();
    int argmax = static_cast<int>(
        std::max_element(lv.data.begin(), lv.data.end()) - lv.data.begin());
    if (argmax == w_target[t]) ++out.correct_tokens;
    ++out.total_tokens;
    if (coupling != Coupling::independent && t < n_graphemes) {
      Var probs = softmax(logits);
      int pick;
      if (coupling == Coupling::argmax) {
        pick = argmax;
      } else {
        if (opt.coupling_rng == nullptr)
          throw std::invalid_argument(
              "multistage_loss: sampled_softmax coupling needs an RNG");
        // Temperature shapes the selection distribution only.
        std::vector<double> dist(lv.data.size());
        double mx = *std::max_element(lv.data.begin(), lv.data.end());
        for (std::size_t i = 0; i < dist.size(); ++i)
          dist[i] = std::exp((static_cast<double>(lv.data[i]) - mx) /
                             opt.sample_temperature);
        pick = static_cast<int>(opt.coupling_rng->categorical(dist));
      }
      Var p = slice(probs, pick, 1);
      // p + (1 - stopgrad(p)): forward 1, gradient reaches the stage-1
      // logits only through the selected index.
      Var one = g.constant(Tensor::scalar(real(1)));
      Var factor = add(p, add(one, scale(detach(p), real(-1))));
      picked.push_back(pick);
      pick_factor.push_back(factor);
    }
    prev = w_target[t];
  }
  stage1 = scale(stage1,
                 static_cast<real>(1.0 / static_cast<double>(w_target.size())));
  out.transcript_loss = static_cast<double>(stage1.value().data[0]);

  // Stage 2 consumes the transcript only (no acoustics): ground truth when
  // independent, the stage-1 picks otherwise.
  std::vector<Var> enc2_inputs;
  if (coupling == Coupling::independent) {
    for (std::size_t t = 0; t < n_graphemes; ++t)
      enc2_inputs.push_back(embed_lookup(g.leaf(enc2_emb_), w_target[t]));
  } else {
    for (std::size_t t = 0; t < picked.size(); ++t)
      enc2_inputs.push_back(
          mul(embed_lookup(g.leaf(enc2_emb_), picked[t]), pick_factor[t]));
  }
  if (enc2_inputs.empty())
    throw std::invalid_argument("multistage_loss: empty transcript");
  std::vector<Var> keys2 = enc2_->run(g, enc2_inputs);
  Attention::KeyCache cache2 = dec2_->attn.project_keys(g, keys2);
  Var stage2 = teacher_forced_nll(g, *dec2_, cache2,
                                  semantics_target(u, vocab), vocab.sos(),
                                  out, out.semantics_loss);
  Var total = add(stage1, stage2);
  out.total = static_cast<double>(total.value().data[0]);
  return total;
}

}  // namespace slu
