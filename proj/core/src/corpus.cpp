#include "slu/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace slu {

namespace {

// Prototype vector for one grapheme: a fixed function of the grapheme alone,
// shared by every occurrence across the whole corpus. Only the duration and
// additive noise vary with the utterance's feature seed; the prototypes are
// the stable, learnable signal.
std::vector<real> grapheme_prototype(char g, const FeatureConfig& cfg) {
  Rng rng(derive_seed(0x50524f544fu, 0x10000u + static_cast<unsigned char>(g)));
  std::vector<real> proto(static_cast<std::size_t>(cfg.base_dim));
  for (real& x : proto) x = static_cast<real>(rng.uniform(-1.0, 1.0));
  return proto;
}

}  // namespace

Tensor synth_features(const std::string& transcript, std::uint64_t seed,
                      const FeatureConfig& cfg) {
  if (transcript.empty())
    throw std::invalid_argument("synth_features: empty transcript");
  for (char c : transcript)
    if (Vocab::grapheme_set().find(c) == std::string::npos)
      throw std::out_of_range(std::string("synth_features: unknown grapheme '") +
                              c + "'");
  Rng rng(derive_seed(seed, 1));
  std::vector<std::vector<real>> frames;
  for (char c : transcript) {
    std::vector<real> proto = grapheme_prototype(c, cfg);
    int dur = cfg.dur_min +
              static_cast<int>(rng.below(
                  static_cast<std::uint64_t>(cfg.dur_max - cfg.dur_min + 1)));
    for (int d = 0; d < dur; ++d) {
      std::vector<real> frame = proto;
      if (cfg.noise_sigma > 0)
        for (real& x : frame)
          x += static_cast<real>(rng.normal(0.0, cfg.noise_sigma));
      frames.push_back(std::move(frame));
    }
  }
  // Stack 3 contiguous frames (clamped at the end), keep every third.
  int f = static_cast<int>(frames.size());
  int t_out = (f + 2) / 3;
  Tensor out({t_out, cfg.stacked_dim()});
  for (int t = 0; t < t_out; ++t) {
    int base = 3 * t;
    for (int k = 0; k < 3; ++k) {
      int src = std::min(base + k, f - 1);
      for (int j = 0; j < cfg.base_dim; ++j)
        out.at(t, k * cfg.base_dim + j) =
            frames[static_cast<std::size_t>(src)][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

std::vector<Utterance> generate_corpus(const Grammar& grammar, int n,
                                       std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_corpus: n < 1");
  std::vector<Utterance> corpus;
  corpus.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    Grammar::Expansion e = grammar.sample(rng);
    Utterance u;
    std::ostringstream id;
    id << "utt" << std::setfill('0') << std::setw(6) << i;
    u.id = id.str();
    u.transcript = std::move(e.transcript);
    u.frame = std::move(e.frame);
    u.feature_seed = derive_seed(seed, 0x80000000ull + static_cast<std::uint64_t>(i));
    corpus.push_back(std::move(u));
  }
  return corpus;
}

void save_corpus(const std::vector<Utterance>& corpus, const Vocab& vocab,
                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
  for (const Utterance& u : corpus)
    out << u.id << '\t' << u.transcript << '\t'
        << vocab.render(serialize(u.frame, vocab)) << '\t' << u.feature_seed
        << '\n';
}

std::vector<Utterance> load_corpus(const std::string& path,
                                   const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<Utterance> corpus;
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
    if (fields.size() != 4)
      throw std::runtime_error("load_corpus: malformed line " +
                               std::to_string(lineno));
    Utterance u;
    u.id = fields[0];
    u.transcript = fields[1];
    DeserializeResult ds = deserialize(vocab.parse_rendered(fields[2]), vocab);
    if (!ds.clean())
      throw std::runtime_error("load_corpus: bad semantics at line " +
                               std::to_string(lineno) + ": " +
                               ds.diagnostics.front());
    u.frame = std::move(ds.frame);
    u.feature_seed = std::stoull(fields[3]);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace slu
