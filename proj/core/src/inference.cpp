#include "slu/inference.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slu {

namespace {

struct BeamItem {
  Hypothesis hyp;
  Decoder::State state;
};

bool hyp_better(const Hypothesis& a, const Hypothesis& b, bool normalize) {
  double sa = a.log_prob, sb = b.log_prob;
  if (normalize) {
    sa /= std::max<std::size_t>(1, a.tokens.size());
    sb /= std::max<std::size_t>(1, b.tokens.size());
  }
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

}  // namespace

std::vector<Hypothesis> beam_decode(Graph& g, const Decoder& dec,
                                    const Attention::KeyCache& cache, int sos,
                                    int eos, const BeamConfig& cfg) {
  if (cfg.beam_size < 1 || cfg.max_len < 1)
    throw std::invalid_argument("beam_decode: beam_size and max_len must be >= 1");
  std::vector<BeamItem> live;
  live.push_back(BeamItem{Hypothesis{}, dec.initial_state(g)});
  std::vector<Hypothesis> pool;

  for (int len = 0; len < cfg.max_len && !live.empty(); ++len) {
    struct Candidate {
      double log_prob;
      std::vector<int> tokens;
      std::size_t parent;
    };
    std::vector<Candidate> candidates;
    std::vector<Decoder::State> advanced;
    advanced.reserve(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      BeamItem& item = live[i];
      int prev = item.hyp.tokens.empty() ? sos : item.hyp.tokens.back();
      Decoder::State st = item.state;
      Var logits = dec.step(g, prev, st, cache);
      Var logp = log_softmax(logits);
      advanced.push_back(std::move(st));
      const Tensor& lp = logp.value();
      for (int v = 0; v < dec.vocab_size; ++v) {
        Candidate c;
        c.log_prob = item.hyp.log_prob + static_cast<double>(lp.at(v));
        c.tokens = item.hyp.tokens;
        c.tokens.push_back(v);
        c.parent = i;
        candidates.push_back(std::move(c));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                return a.tokens < b.tokens;
              });
    std::size_t keep = std::min<std::size_t>(
        candidates.size(), static_cast<std::size_t>(cfg.beam_size));
    std::vector<BeamItem> next;
    for (std::size_t k = 0; k < keep; ++k) {
      Candidate& c = candidates[k];
      if (c.tokens.back() == eos) {
        Hypothesis h;
        h.tokens = std::vector<int>(c.tokens.begin(), c.tokens.end() - 1);
        h.log_prob = c.log_prob;
        h.finished = true;
        pool.push_back(std::move(h));
      } else {
        BeamItem item;
        item.hyp.tokens = std::move(c.tokens);
        item.hyp.log_prob = c.log_prob;
        item.state = advanced[c.parent];
        next.push_back(std::move(item));
      }
    }
    live = std::move(next);
  }
  for (BeamItem& item : live) {
    item.hyp.finished = true;
    item.hyp.truncated = true;
    pool.push_back(std::move(item.hyp));
  }
  std::sort(pool.begin(), pool.end(), [&](const Hypothesis& a,
                                          const Hypothesis& b) {
    return hyp_better(a, b, cfg.length_normalize);
  });
  return pool;
}

PipelineResult pipeline_decode(const Model& model, const Tensor& feats,
                               const Vocab& vocab, const BeamConfig& cfg,
                               int semantics_max_len) {
  if (model.config().architecture != Architecture::multistage)
    throw std::logic_error("pipeline_decode: not a multistage model");
  PipelineResult res;
  {
    Graph g;
    std::vector<Var> keys = model.encode_features(g, feats);
    const Decoder& dec1 = model.transcript_decoder();
    Attention::KeyCache cache = dec1.attn.project_keys(g, keys);
    std::vector<Hypothesis> hyps =
        beam_decode(g, dec1, cache, vocab.sos(), vocab.eos(), cfg);
    res.transcript = hyps.front();
    if (res.transcript.truncated)
      res.diagnostics.push_back("stage-1 transcript hit max_len");
  }
  std::vector<int> stage2_input = res.transcript.tokens;
  if (stage2_input.empty()) {
    res.diagnostics.push_back(
        "empty stage-1 transcript; stage 2 fed a single pad token");
    stage2_input.push_back(vocab.pad());
  }
  {
    Graph g;
    std::vector<Var> keys = model.encode_transcript(g, stage2_input);
    const Decoder& dec2 = model.semantics_decoder();
    Attention::KeyCache cache = dec2.attn.project_keys(g, keys);
    BeamConfig scfg = cfg;
    scfg.max_len = semantics_max_len;
    std::vector<Hypothesis> hyps =
        beam_decode(g, dec2, cache, vocab.sos(), vocab.eos(), scfg);
    res.semantics = hyps.front();
    if (res.semantics.truncated)
      res.diagnostics.push_back("stage-2 semantics hit max_len");
  }
  return res;
}

namespace {

std::string render_transcript(const std::vector<int>& tokens,
                              const Vocab& vocab) {
  std::string out;
  for (int id : tokens)
    if (vocab.token_class(id) == TokenClass::grapheme) out += vocab.token(id);
  return out;
}

Prediction finish_prediction(const std::vector<int>& semantics_tokens,
                             const Vocab& vocab, Prediction pred) {
  DeserializeResult ds = deserialize(semantics_tokens, vocab);
  pred.frame = std::move(ds.frame);
  for (std::string& d : ds.diagnostics)
    pred.diagnostics.push_back(std::move(d));
  return pred;
}

}  // namespace

Prediction predict_semantics(const Model& model, const Utterance& u,
                             const Vocab& vocab, const DecodeConfig& cfg,
                             const FeatureConfig& fcfg) {
  Tensor feats = u.features(fcfg);
  int frames = feats.shape[0];
  BeamConfig bcfg;
  bcfg.beam_size = cfg.beam_size;
  bcfg.length_normalize = cfg.length_normalize;

  switch (model.config().architecture) {
    case Architecture::direct: {
      Graph g;
      std::vector<Var> keys = model.encode_features(g, feats);
      const Decoder& dec = model.semantics_decoder();
      Attention::KeyCache cache = dec.attn.project_keys(g, keys);
      bcfg.max_len = cfg.semantics_max_len;
      Hypothesis top =
          beam_decode(g, dec, cache, vocab.sos(), vocab.eos(), bcfg).front();
      Prediction pred;
      pred.semantics_log_prob = top.log_prob;
      if (top.truncated) pred.diagnostics.push_back("semantics hit max_len");
      return finish_prediction(top.tokens, vocab, std::move(pred));
    }
    case Architecture::joint: {
      Graph g;
      std::vector<Var> keys = model.encode_features(g, feats);
      const Decoder& dec = model.semantics_decoder();
      Attention::KeyCache cache = dec.attn.project_keys(g, keys);
      bcfg.max_len =
          cfg.transcript_max_len_factor * frames + cfg.semantics_max_len;
      Hypothesis top =
          beam_decode(g, dec, cache, vocab.sos(), vocab.eos(), bcfg).front();
      auto [w_tokens, s_tokens] = split_joint_output(top.tokens, vocab);
      Prediction pred;
      pred.transcript = render_transcript(w_tokens, vocab);
      pred.semantics_log_prob = top.log_prob;
      if (top.truncated) pred.diagnostics.push_back("joint output hit max_len");
      return finish_prediction(s_tokens, vocab, std::move(pred));
    }
    case Architecture::multitask: {
      Graph g;
      std::vector<Var> keys = model.encode_features(g, feats);
      const Decoder& dec_w = model.transcript_decoder();
      const Decoder& dec_s = model.semantics_decoder();
      Attention::KeyCache cache_w = dec_w.attn.project_keys(g, keys);
      Attention::KeyCache cache_s = dec_s.attn.project_keys(g, keys);
      BeamConfig wcfg = bcfg;
      wcfg.max_len = cfg.transcript_max_len_factor * frames;
      Hypothesis top_w =
          beam_decode(g, dec_w, cache_w, vocab.sos(), vocab.eos(), wcfg)
              .front();
      bcfg.max_len = cfg.semantics_max_len;
      Hypothesis top_s =
          beam_decode(g, dec_s, cache_s, vocab.sos(), vocab.eos(), bcfg)
              .front();
      Prediction pred;
      pred.transcript = render_transcript(top_w.tokens, vocab);
      pred.transcript_log_prob = top_w.log_prob;
      pred.semantics_log_prob = top_s.log_prob;
      return finish_prediction(top_s.tokens, vocab, std::move(pred));
    }
    case Architecture::multistage: {
      bcfg.max_len = cfg.transcript_max_len_factor * frames;
      PipelineResult pr =
          pipeline_decode(model, feats, vocab, bcfg, cfg.semantics_max_len);
      Prediction pred;
      pred.transcript = render_transcript(pr.transcript.tokens, vocab);
      pred.transcript_log_prob = pr.transcript.log_prob;
      pred.semantics_log_prob = pr.semantics.log_prob;
      pred.diagnostics = pr.diagnostics;
      return finish_prediction(pr.semantics.tokens, vocab, std::move(pred));
    }
  }
  throw std::logic_error("unreachable");
}

Prediction predict_semantics_from_transcript(const Model& model,
                                             const std::string& transcript,
                                             const Vocab& vocab,
                                             const DecodeConfig& cfg) {
  if (model.config().architecture != Architecture::multistage)
    throw std::logic_error(
        "predict_semantics_from_transcript: not a multistage model");
  std::vector<int> tokens = vocab.encode_graphemes(transcript);
  Prediction pred;
  if (tokens.empty()) {
    tokens.push_back(vocab.pad());
    pred.diagnostics.push_back("empty transcript; stage 2 fed a pad token");
  }
  Graph g;
  std::vector<Var> keys = model.encode_transcript(g, tokens);
  const Decoder& dec = model.semantics_decoder();
  Attention::KeyCache cache = dec.attn.project_keys(g, keys);
  BeamConfig bcfg;
  bcfg.beam_size = cfg.beam_size;
  bcfg.max_len = cfg.semantics_max_len;
  bcfg.length_normalize = cfg.length_normalize;
  Hypothesis top =
      beam_decode(g, dec, cache, vocab.sos(), vocab.eos(), bcfg).front();
  pred.transcript = transcript;
  pred.semantics_log_prob = top.log_prob;
  return finish_prediction(top.tokens, vocab, std::move(pred));
}

void save_decodes(const std::vector<DecodeRecord>& records,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_decodes: cannot open " + path);
  out.precision(17);
  for (const DecodeRecord& r : records) {
    out << r.id << '\t' << r.transcript.value_or("") << '\t'
        << r.semantics_rendered << '\t';
    if (r.transcript_log_prob) out << *r.transcript_log_prob;
    out << '\t' << r.semantics_log_prob << '\t'
        << (r.transcript ? 1 : 0) << '\n';
  }
}

std::vector<DecodeRecord> load_decodes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_decodes: cannot open " + path);
  std::vector<DecodeRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 6)
      throw std::runtime_error("load_decodes: malformed line " +
                               std::to_string(lineno));
    DecodeRecord r;
    r.id = fields[0];
    bool has_transcript = fields[5] == "1";
    if (has_transcript) r.transcript = fields[1];
    r.semantics_rendered = fields[2];
    if (!fields[3].empty()) r.transcript_log_prob = std::stod(fields[3]);
    r.semantics_log_prob = std::stod(fields[4]);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace slu
