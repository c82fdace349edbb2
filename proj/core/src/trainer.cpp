#include "slu/trainer.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slu {

void TrainConfig::validate() const {
  if (steps < 1 || batch_size < 1 || learning_rate < 0 || beta1 <= 0 ||
      beta1 >= 1 || beta2 <= 0 || beta2 >= 1 || epsilon <= 0 ||
      checkpoint_interval < 1 || sample_temperature <= 0)
    throw std::invalid_argument("TrainConfig: invalid hyperparameters");
  if (clip_norm && *clip_norm <= 0)
    throw std::invalid_argument("TrainConfig: clip_norm must be positive");
}

AdamState AdamState::init(const ParamStore& params) {
  AdamState s;
  for (const ParamEntry& e : params.entries()) {
    s.m.push_back(Tensor(e.tensor->shape));
    s.v.push_back(Tensor(e.tensor->shape));
  }
  return s;
}

double clip_gradients(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const ParamEntry& e : params.entries()) {
    e.tensor->ensure_grad();
    for (real g : e.tensor->grad) sq += static_cast<double>(g) * g;
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    real f = static_cast<real>(max_norm / norm);
    for (const ParamEntry& e : params.entries())
      for (real& g : e.tensor->grad) g *= f;
  }
  return norm;
}

void adam_step(ParamStore& params, AdamState& state, const TrainConfig& cfg) {
  const auto& entries = params.entries();
  if (state.m.size() != entries.size())
    throw ShapeError("adam_step: moment/param count mismatch");
  if (cfg.clip_norm) clip_gradients(params, *cfg.clip_norm);
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& p = *entries[i].tensor;
    p.ensure_grad();
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (!p.same_shape(m))
      throw ShapeError("adam_step: shape mismatch for " + entries[i].name);
    for (std::size_t k = 0; k < p.size(); ++k) {
      double g = static_cast<double>(p.grad[k]);
      double mk = cfg.beta1 * static_cast<double>(m.data[k]) +
                  (1.0 - cfg.beta1) * g;
      double vk = cfg.beta2 * static_cast<double>(v.data[k]) +
                  (1.0 - cfg.beta2) * g * g;
      m.data[k] = static_cast<real>(mk);
      v.data[k] = static_cast<real>(vk);
      double update = cfg.learning_rate * (mk / bc1) /
                      (std::sqrt(vk / bc2) + cfg.epsilon);
      p.data[k] = static_cast<real>(static_cast<double>(p.data[k]) - update);
    }
  }
}

void save_metric_log(const std::vector<MetricRecord>& log,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_metric_log: cannot open " + path);
  out << "step,loss,accuracy\n";
  out.precision(17);
  for (const MetricRecord& r : log)
    out << r.step << ',' << r.loss << ',' << r.accuracy << '\n';
}

namespace {

constexpr char kMagic[8] = {'S', 'L', 'U', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) write_pod<std::int32_t>(os, d);
  write_bytes(os, t.data.data(), t.data.size() * sizeof(real));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

std::string read_string(std::istream& is) {
  auto n = read_pod<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

Tensor read_tensor(std::istream& is) {
  auto rank = read_pod<std::uint32_t>(is);
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < rank; ++i)
    shape.push_back(read_pod<std::int32_t>(is));
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(real)));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return t;
}

void write_model_config(std::ostream& os, const ModelConfig& c) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(c.architecture));
  write_pod<std::int32_t>(os, c.coupling
                                  ? static_cast<std::int32_t>(*c.coupling)
                                  : -1);
  for (const StackSpec* s : {&c.enc1, &c.dec1, &c.enc2, &c.dec2}) {
    write_pod<std::int32_t>(os, s->layers);
    write_pod<std::int32_t>(os, s->hidden);
  }
  write_pod<std::int32_t>(os, c.emb_dim);
  write_pod<std::int32_t>(os, c.num_heads);
  write_pod<std::int32_t>(os, c.feature_dim);
}

ModelConfig read_model_config(std::istream& is) {
  ModelConfig c;
  c.architecture = static_cast<Architecture>(read_pod<std::uint32_t>(is));
  auto coupling = read_pod<std::int32_t>(is);
  if (coupling >= 0) c.coupling = static_cast<Coupling>(coupling);
  for (StackSpec* s : {&c.enc1, &c.dec1, &c.enc2, &c.dec2}) {
    s->layers = read_pod<std::int32_t>(is);
    s->hidden = read_pod<std::int32_t>(is);
  }
  c.emb_dim = read_pod<std::int32_t>(is);
  c.num_heads = read_pod<std::int32_t>(is);
  c.feature_dim = read_pod<std::int32_t>(is);
  return c;
}

void write_train_config(std::ostream& os, const TrainConfig& c) {
  write_pod<std::int32_t>(os, c.steps);
  write_pod<std::int32_t>(os, c.batch_size);
  write_pod<double>(os, c.learning_rate);
  write_pod<double>(os, c.beta1);
  write_pod<double>(os, c.beta2);
  write_pod<double>(os, c.epsilon);
  write_pod<std::uint8_t>(os, c.clip_norm ? 1 : 0);
  write_pod<double>(os, c.clip_norm.value_or(0.0));
  write_pod<std::uint64_t>(os, c.seed);
  write_pod<std::int32_t>(os, c.checkpoint_interval);
  write_pod<double>(os, c.sample_temperature);
}

TrainConfig read_train_config(std::istream& is) {
  TrainConfig c;
  c.steps = read_pod<std::int32_t>(is);
  c.batch_size = read_pod<std::int32_t>(is);
  c.learning_rate = read_pod<double>(is);
  c.beta1 = read_pod<double>(is);
  c.beta2 = read_pod<double>(is);
  c.epsilon = read_pod<double>(is);
  auto has_clip = read_pod<std::uint8_t>(is);
  double clip = read_pod<double>(is);
  c.clip_norm = has_clip ? std::optional<double>(clip) : std::nullopt;
  c.seed = read_pod<std::uint64_t>(is);
  c.checkpoint_interval = read_pod<std::int32_t>(is);
  c.sample_temperature = read_pod<double>(is);
  return c;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Checkpoint::save: cannot open " + path);
  write_bytes(out, kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(sizeof(real)));
  write_model_config(out, model_config);
  write_train_config(out, train_config);
  write_pod<std::int32_t>(out, vocab_size);
  write_pod<std::int64_t>(out, step);
  write_string(out, rng_state);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    write_string(out, names[i]);
    write_tensor(out, values[i]);
  }
  write_pod<std::int64_t>(out, adam.t);
  for (const Tensor& t : adam.m) write_tensor(out, t);
  for (const Tensor& t : adam.v) write_tensor(out, t);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("Checkpoint::load: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("Checkpoint::load: bad magic in " + path);
  auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("Checkpoint::load: unsupported version " +
                             std::to_string(version));
  auto prec = read_pod<std::uint32_t>(in);
  if (prec != sizeof(real))
    throw std::runtime_error(
        "Checkpoint::load: precision mismatch (file " + std::to_string(prec) +
        " bytes, build " + std::to_string(sizeof(real)) + ")");
  Checkpoint c;
  c.model_config = read_model_config(in);
  c.train_config = read_train_config(in);
  c.vocab_size = read_pod<std::int32_t>(in);
  c.step = read_pod<std::int64_t>(in);
  c.rng_state = read_string(in);
  auto n = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    c.names.push_back(read_string(in));
    c.values.push_back(read_tensor(in));
  }
  c.adam.t = read_pod<std::int64_t>(in);
  for (std::uint32_t i = 0; i < n; ++i) c.adam.m.push_back(read_tensor(in));
  for (std::uint32_t i = 0; i < n; ++i) c.adam.v.push_back(read_tensor(in));
  return c;
}

Checkpoint make_checkpoint(const Model& model, const TrainConfig& cfg,
                           const AdamState& adam, std::int64_t step,
                           const Rng& rng) {
  Checkpoint c;
  c.model_config = model.config();
  c.train_config = cfg;
  c.vocab_size = model.vocab_size();
  c.step = step;
  c.rng_state = rng.serialize();
  for (const ParamEntry& e : model.params().entries()) {
    c.names.push_back(e.name);
    Tensor t(e.tensor->shape);
    t.data = e.tensor->data;
    c.values.push_back(std::move(t));
  }
  c.adam = adam;
  return c;
}

void restore_params(Model& model, const Checkpoint& ckpt) {
  const auto& entries = model.params().entries();
  if (entries.size() != ckpt.names.size())
    throw std::runtime_error("restore_params: parameter count mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != ckpt.names[i])
      throw std::runtime_error("restore_params: name mismatch at index " +
                               std::to_string(i) + ": " + entries[i].name +
                               " vs " + ckpt.names[i]);
    if (entries[i].tensor->shape != ckpt.values[i].shape)
      throw std::runtime_error("restore_params: shape mismatch for " +
                               entries[i].name);
    entries[i].tensor->data = ckpt.values[i].data;
  }
}

TrainResult train(Model& model, const std::vector<Utterance>& corpus,
                  const Vocab& vocab, const TrainConfig& cfg,
                  const FeatureConfig& fcfg, const Checkpoint* resume_from,
                  const std::string& checkpoint_dir) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  // Vocab coverage: every target must serialize.
  for (const Utterance& u : corpus) {
    try {
      (void)Model::transcript_target(u, vocab);
      (void)Model::semantics_target(u, vocab);
    } catch (const std::out_of_range& e) {
      throw std::runtime_error("train: vocab does not cover utterance " +
                               u.id + ": " + e.what());
    }
  }

  AdamState adam;
  Rng rng(cfg.seed);
  std::int64_t start_step = 0;
  if (resume_from != nullptr) {
    restore_params(model, *resume_from);
    adam = resume_from->adam;
    rng = Rng::deserialize(resume_from->rng_state);
    start_step = resume_from->step;
  } else {
    adam = AdamState::init(model.params());
  }

  TrainResult result;
  for (std::int64_t step = start_step + 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch;
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(static_cast<std::size_t>(rng.below(corpus.size())));

    model.params().zero_grads();
    Graph g;
    Var batch_loss{};
    int correct = 0, total = 0;
    try {
      real inv = static_cast<real>(1.0 / cfg.batch_size);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        LossBreakdown bd;
        LossOptions opt;
        opt.coupling_rng = &rng;
        opt.sample_temperature = cfg.sample_temperature;
        Var l = model.loss(g, corpus[batch[b]], vocab, fcfg, bd, opt);
        Var scaled = scale(l, inv);
        batch_loss = (b == 0) ? scaled : add(batch_loss, scaled);
        correct += bd.correct_tokens;
        total += bd.total_tokens;
      }
      g.backward(batch_loss);
    } catch (const NumericalError& e) {
      throw NumericalError("train: aborted at step " + std::to_string(step) +
                           ": " + e.what());
    }
    adam_step(model.params(), adam, cfg);

    MetricRecord rec;
    rec.step = static_cast<int>(step);
    rec.loss = static_cast<double>(batch_loss.value().data[0]);
    rec.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
    result.log.push_back(rec);

    if (!checkpoint_dir.empty() && step % cfg.checkpoint_interval == 0 &&
        step < cfg.steps) {
      Checkpoint c = make_checkpoint(model, cfg, adam, step, rng);
      c.save(checkpoint_dir + "/ckpt_step" + std::to_string(step) + ".bin");
    }
  }

  result.final_checkpoint =
      make_checkpoint(model, cfg, adam, cfg.steps, rng);
  if (!checkpoint_dir.empty())
    result.final_checkpoint.save(checkpoint_dir + "/ckpt.bin");
  return result;
}

}  // namespace slu
