// Acceptance suite: eight end-to-end criteria, printed one PASS/FAIL line
// each. Criteria 1-4 run in-process against the core library; criteria 5-8
// drive the `slu` command-line tool on a reference experiment matrix.
//
// Usage: acceptance <path-to-slu-binary> [workdir]

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "slu/corpus.hpp"
#include "slu/gradcheck.hpp"
#include "slu/grammar.hpp"
#include "slu/inference.hpp"
#include "slu/metrics.hpp"
#include "slu/model.hpp"
#include "slu/nn.hpp"
#include "slu/rng.hpp"
#include "slu/semantics.hpp"
#include "slu/tensor.hpp"
#include "slu/trainer.hpp"

namespace fs = std::filesystem;
using namespace slu;

namespace {

// ---------------------------------------------------------------------------
// Reference experiment settings. The reference numbers below were frozen
// from the first oracle run of this suite (seed-fixed, bit-deterministic).
constexpr int kTrainSteps = 2000;
constexpr int kBatchSize = 16;
constexpr double kLearningRate = 0.003;
constexpr int kDecodeBeam = 8;
constexpr int kTrainCorpusSize = 2000;
constexpr int kTestCorpusSize = 200;
constexpr int kCorpusSeedTrain = 1;
constexpr int kCorpusSeedTest = 2;

struct FrozenRef {
  const char* variant;
  double domain_f1;
  double transcript_wer;  // negative: no transcript (direct)
  double argument_wer;
};
// Populated after the first oracle run; empty means "print, do not compare".
std::vector<FrozenRef> kFrozen = {
    {"direct", 1.0, -1.0, 0.07246376811594205},
    {"joint", 0.975, 0.0668452380952381, 0.23550724637681156},
    {"multitask", 0.995, 0.026446428571428572, 0.13043478260869565},
    {"multistage_independent", 0.995, 0.014464285714285714,
     0.13043478260869565},
    {"multistage_argmax", 0.995, 0.013214285714285713, 0.17391304347826086},
    {"multistage_sampled", 0.995, 0.01830357142857143, 0.3776595744680851},
};

// ---------------------------------------------------------------------------
std::string g_slu;
fs::path g_work;
std::mutex g_print_mutex;

int run_cmd(const std::string& cmd, const fs::path& log) {
  std::string full = cmd + " > " + log.string() + " 2>&1";
  return std::system(full.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<unreadable:" + p.string() + ">";
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  return slurp(a) == slurp(b);
}

struct Criterion {
  int number;
  std::string title;
  bool pass = false;
  bool soft = false;
  std::string detail;
};

void report(const Criterion& c) {
  std::string suffix = c.detail.empty() ? "" : "  -- " + c.detail;
  std::printf("criterion %d (%s): %s%s%s\n", c.number, c.title.c_str(),
              c.pass ? "PASS" : "FAIL", c.soft ? " [soft]" : "",
              suffix.c_str());
  std::fflush(stdout);
}

// Cap pool width at the hardware so CPU-bound jobs (whole training runs)
// are not oversubscribed; per-model wall-clock limits assume a real core each.
int pool_width(int requested) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  return std::min(requested, hw);
}

// Simple fixed-width pool: run all jobs on up to `workers` threads.
void run_pool(std::vector<std::function<void()>>& jobs, int workers) {
  workers = pool_width(workers);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      jobs[i]();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient fidelity.

Tensor rand_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (real& x : t.data) x = static_cast<real>(rng.uniform(-0.5, 0.5));
  return t;
}

std::vector<NamedParam> store_params(ParamStore& store) {
  std::vector<NamedParam> out;
  for (const ParamEntry& e : store.entries()) out.push_back({e.name, e.tensor});
  return out;
}

// One seeded layer-level check; returns max relative error.
double layer_case(int which, std::uint64_t seed, bool& ok) {
  Rng rng(seed);
  ParamStore store;
  GradCheckOptions opt;
  opt.tolerance = 1e-4;
  opt.coords_per_param = 3;
  opt.sample_seed = seed;
  GradCheckReport rep;
  switch (which) {
    case 0: {  // LSTM cell, two chained steps
      LstmCell cell = LstmCell::create(store, "l", ParamRole::single, 3, 4, rng);
      Tensor x0 = rand_tensor({3}, rng), x1 = rand_tensor({3}, rng);
      auto loss = [&](Graph& g) {
        Var h = g.constant(Tensor({4})), c = g.constant(Tensor({4}));
        std::tie(h, c) = cell.step(g, g.constant(x0), h, c);
        std::tie(h, c) = cell.step(g, g.constant(x1), h, c);
        return sum(add(h, c));
      };
      rep = gradient_check(loss, store_params(store), opt);
      break;
    }
    case 1: {  // multi-head additive attention
      Attention attn =
          Attention::create(store, "a", ParamRole::single, 2, 3, 4, 5, rng);
      Tensor q = rand_tensor({4}, rng);
      std::vector<Tensor> keys;
      for (int t = 0; t < 4; ++t) keys.push_back(rand_tensor({5}, rng));
      auto loss = [&](Graph& g) {
        std::vector<Var> kv;
        for (const Tensor& k : keys) kv.push_back(g.constant(k));
        Attention::Result r = attn.attend(g, g.constant(q), kv);
        return sum(r.context);
      };
      rep = gradient_check(loss, store_params(store), opt);
      break;
    }
    case 2: {  // bidirectional encoder stack
      Encoder enc = Encoder::create(store, "e", ParamRole::single, 1, 3, 4,
                                    /*bidirectional=*/true, rng);
      std::vector<Tensor> xs;
      for (int t = 0; t < 3; ++t) xs.push_back(rand_tensor({3}, rng));
      auto loss = [&](Graph& g) {
        std::vector<Var> inputs;
        for (const Tensor& x : xs) inputs.push_back(g.constant(x));
        std::vector<Var> outs = enc.run(g, inputs);
        Var total = sum(outs[0]);
        for (std::size_t t = 1; t < outs.size(); ++t)
          total = add(total, sum(outs[t]));
        return total;
      };
      rep = gradient_check(loss, store_params(store), opt);
      break;
    }
    default: {  // attention decoder, two steps, log-softmax readout
      Decoder dec = Decoder::create(store, "d", ParamRole::single, 1, 6, 3, 4,
                                    2, 5, rng);
      std::vector<Tensor> keys;
      for (int t = 0; t < 3; ++t) keys.push_back(rand_tensor({5}, rng));
      auto loss = [&](Graph& g) {
        std::vector<Var> kv;
        for (const Tensor& k : keys) kv.push_back(g.constant(k));
        Attention::KeyCache cache = dec.attn.project_keys(g, kv);
        Decoder::State st = dec.initial_state(g);
        Var l0 = dec.step(g, 1, st, cache);
        Var l1 = dec.step(g, 2, st, cache);
        return add(sum(log_softmax(l0)), sum(log_softmax(l1)));
      };
      rep = gradient_check(loss, store_params(store), opt);
      break;
    }
  }
  ok = rep.passed;
  return rep.max_rel_error;
}

ModelConfig micro_config(Architecture arch, std::optional<Coupling> coupling,
                         int feature_dim) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.coupling = coupling;
  cfg.enc1 = {1, 6};
  cfg.dec1 = {1, 6};
  cfg.enc2 = {1, 6};
  cfg.dec2 = {1, 6};
  cfg.emb_dim = 4;
  cfg.num_heads = 2;
  cfg.feature_dim = feature_dim;
  return cfg;
}

// One seeded end-to-end loss check on a micro model.
double e2e_case(Architecture arch, std::optional<Coupling> coupling,
                std::uint64_t seed, const Vocab& vocab, bool& ok) {
  FeatureConfig fcfg;
  fcfg.base_dim = 2;
  Utterance u;
  u.id = "gc";
  u.transcript = "hi tom";
  u.frame = SemanticFrame{"MEDIA", "PLAY_SONG", {{"SUBJECT", "hi tom"}}};
  u.feature_seed = seed;

  Model model(micro_config(arch, coupling, fcfg.stacked_dim()), vocab.size(),
              seed);
  auto build_loss = [&](Graph& g) {
    LossBreakdown bd;
    LossOptions opt;
    Rng rng(derive_seed(seed, 7));
    if (coupling == Coupling::sampled_softmax) opt.coupling_rng = &rng;
    return model.loss(g, u, vocab, fcfg, bd, opt);
  };
  // Straight-through couplings deliberately report a gradient along a path
  // the forward value does not depend on (the factor is exactly 1), so
  // stage-1 parameters are not finite-difference checkable there; restrict
  // those modes to stage-2 parameters.
  std::vector<NamedParam> params;
  for (const ParamEntry& e : model.params().entries()) {
    if (coupling.has_value() && *coupling != Coupling::independent &&
        e.role != ParamRole::stage2)
      continue;
    params.push_back({e.name, e.tensor});
  }
  GradCheckOptions opt;
  opt.tolerance = 1e-3;
  opt.coords_per_param = 2;
  opt.sample_seed = seed;
  GradCheckReport rep = gradient_check(build_loss, params, opt);
  ok = rep.passed;
  return rep.max_rel_error;
}

Criterion criterion_gradients() {
  Criterion c{1, "gradient fidelity"};
  auto t0 = std::chrono::steady_clock::now();
  std::atomic<int> failures{0};
  std::mutex mx;
  double worst_layer = 0.0, worst_e2e = 0.0;

  Vocab vocab = Grammar::builtin_default().make_vocab();
  std::vector<std::function<void()>> jobs;
  for (int which = 0; which < 4; ++which)
    for (int i = 0; i < 100; ++i)
      jobs.push_back([&, which, i] {
        bool ok = false;
        double err = layer_case(which, derive_seed(1000 + which, i), ok);
        if (!ok) ++failures;
        std::lock_guard<std::mutex> lk(mx);
        worst_layer = std::max(worst_layer, err);
      });
  struct Variant {
    Architecture arch;
    std::optional<Coupling> coupling;
  };
  std::vector<Variant> variants = {
      {Architecture::direct, {}},
      {Architecture::joint, {}},
      {Architecture::multitask, {}},
      {Architecture::multistage, Coupling::independent},
      {Architecture::multistage, Coupling::argmax},
      {Architecture::multistage, Coupling::sampled_softmax},
  };
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (int i = 0; i < 100; ++i)
      jobs.push_back([&, v, i] {
        bool ok = false;
        double err = e2e_case(variants[v].arch, variants[v].coupling,
                              derive_seed(2000 + v, i), vocab, ok);
        if (!ok) ++failures;
        std::lock_guard<std::mutex> lk(mx);
        worst_e2e = std::max(worst_e2e, err);
      });
  run_pool(jobs, 8);

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t0)
                    .count();
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "layer max rel err %.3e (<=1e-4), e2e max rel err %.3e "
                "(<=1e-3), %d failing cases, %.1fs (<300s)",
                worst_layer, worst_e2e, failures.load(), secs);
  c.detail = buf;
  c.pass = failures == 0 && secs < 300.0;
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 2: semantics codec correctness.

Criterion criterion_codec() {
  Criterion c{2, "codec correctness"};
  Grammar grammar = Grammar::builtin_default();
  Vocab vocab = grammar.make_vocab();

  int failures = 0;
  auto expansions = grammar.enumerate_all();
  for (const auto& e : expansions) {
    DeserializeResult ds = deserialize(serialize(e.frame, vocab), vocab);
    if (!ds.clean() || !(ds.frame == e.frame)) ++failures;
  }

  Rng rng(77);
  int fuzz_aborts = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    int len = static_cast<int>(rng.below(32));
    std::vector<int> ids(static_cast<std::size_t>(len));
    for (int& id : ids)
      id = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab.size())));
    try {
      (void)deserialize(ids, vocab);
    } catch (...) {
      ++fuzz_aborts;
    }
  }

  auto row = [&](const SemanticFrame& f) { return vocab.render(serialize(f, vocab)); };
  int bad_rows = 0;
  if (row({"PRODUCTIVITY", "SET_ALARM", {{"DATETIME", "2 p.m."}}}) !=
      "<DOMAIN><PRODUCTIVITY><INTENT><SET_ALARM><DATETIME> 2 p.m.")
    ++bad_rows;
  if (row({"PRODUCTIVITY", "ADD_REMINDER", {{"SUBJECT", "buy milk"}}}) !=
      "<DOMAIN><PRODUCTIVITY><INTENT><ADD_REMINDER><SUBJECT> buy milk")
    ++bad_rows;
  if (row({"MEDIA_CONTROL", {}, {}}) != "<DOMAIN><MEDIA_CONTROL>") ++bad_rows;
  if (row({"NONE", {}, {}}) != "<DOMAIN><NONE>") ++bad_rows;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "round trip over %zu frames (%d failures), 1e5 fuzz inputs "
                "(%d aborts), %d/4 example rows byte-exact",
                expansions.size(), failures, fuzz_aborts, 4 - bad_rows);
  c.detail = buf;
  c.pass = failures == 0 && fuzz_aborts == 0 && bad_rows == 0;
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 3: metric oracles.

int naive_distance(const std::vector<int>& a, const std::vector<int>& b,
                   std::size_t i, std::size_t j,
                   std::vector<int>& memo, std::size_t cols) {
  int& slot = memo[i * cols + j];
  if (slot >= 0) return slot;
  int r;
  if (i == a.size())
    r = static_cast<int>(b.size() - j);
  else if (j == b.size())
    r = static_cast<int>(a.size() - i);
  else if (a[i] == b[j])
    r = naive_distance(a, b, i + 1, j + 1, memo, cols);
  else
    r = 1 + std::min({naive_distance(a, b, i + 1, j + 1, memo, cols),
                      naive_distance(a, b, i + 1, j, memo, cols),
                      naive_distance(a, b, i, j + 1, memo, cols)});
  slot = r;
  return r;
}

Criterion criterion_metrics() {
  Criterion c{3, "metric oracles"};
  const std::vector<std::string> words = {"a", "b", "c"};
  // Every word sequence of length <= 6 over a 3-word alphabet.
  std::vector<std::vector<int>> seqs = {{}};
  std::vector<std::vector<int>> frontier = {{}};
  for (int len = 1; len <= 6; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& s : frontier)
      for (int w = 0; w < 3; ++w) {
        auto ext = s;
        ext.push_back(w);
        seqs.push_back(ext);
        next.push_back(std::move(ext));
      }
    frontier = std::move(next);
  }
  long long pairs = 0, mismatches = 0;
  std::vector<int> memo;
  for (const auto& ra : seqs)
    for (const auto& rb : seqs) {
      std::vector<std::string> wa, wb;
      for (int w : ra) wa.push_back(words[static_cast<std::size_t>(w)]);
      for (int w : rb) wb.push_back(words[static_cast<std::size_t>(w)]);
      std::size_t cols = rb.size() + 1;
      memo.assign((ra.size() + 1) * cols, -1);
      int oracle = naive_distance(ra, rb, 0, 0, memo, cols);
      if (word_edit_distance(wa, wb).total() != oracle) ++mismatches;
      ++pairs;
    }

  // 12-case argument-WER golden table (miss / over-trigger = 100% rule).
  auto fr = [](std::string d, std::optional<std::string> in,
               std::vector<std::pair<std::string, std::string>> args) {
    SemanticFrame f;
    f.domain = std::move(d);
    f.intent = std::move(in);
    f.args = std::move(args);
    return f;
  };
  std::vector<SemanticFrame> refs = {
      fr("M", "I", {{"SUBJECT", "jazz"}}),
      fr("M", "I", {{"SUBJECT", "one two"}}),
      fr("P", "J", {{"DATETIME", "2 p.m."}}),
      fr("P", "J", {{"DATETIME", "noon"}}),
      fr("M", "I", {}),
      fr("N", {}, {}),
      fr("M", "I", {{"SUBJECT", "a b c d"}}),
      fr("M", "I", {{"SUBJECT", "x"}}),
      fr("P", "K", {{"SUBJECT", "buy milk"}, {"DATETIME", "today"}}),
      fr("M", "I", {{"SUBJECT", "same"}}),
      fr("P", "J", {{"DATETIME", "six a.m."}}),
      fr("M", "I", {{"SUBJECT", "tail word"}}),
  };
  std::vector<SemanticFrame> hyps = {
      fr("M", "I", {{"SUBJECT", "jazz"}}),
      fr("M", "I", {{"SUBJECT", "one three"}}),
      fr("P", "J", {{"DATETIME", "2 p.m."}}),
      fr("P", "J", {}),
      fr("M", "I", {{"SUBJECT", "phantom"}}),
      fr("N", {}, {}),
      fr("M", "I", {{"SUBJECT", "w x y z"}}),
      fr("M", "I", {{"SUBJECT", "p q r s t"}}),
      fr("P", "K", {{"SUBJECT", "buy milk"}, {"DATETIME", "tomorrow"}}),
      fr("M", "I", {{"SUBJECT", "same"}}),
      fr("P", "J", {{"DATETIME", "six p.m."}}),
      fr("M", "I", {{"SUBJECT", "tail"}}),
  };
  ArgWerReport aw = argument_wer(refs, hyps);
  bool golden_ok =
      aw.per_label.at("SUBJECT").matches == 7 &&
      aw.per_label.at("SUBJECT").over_triggers == 1 &&
      std::fabs(aw.per_label.at("SUBJECT").wer() - 0.5) < 1e-12 &&
      aw.per_label.at("DATETIME").misses == 1 &&
      std::fabs(aw.per_label.at("DATETIME").wer() - 0.625) < 1e-12 &&
      std::fabs(aw.weighted_average - 6.5 / 12.0) < 1e-12;

  F1Report f1 = multiclass_f1({"A", "A", "B"}, {"A", "B", "B"});
  bool f1_ok = std::fabs(f1.per_class.at("A").f1() - 2.0 / 3.0) < 1e-12 &&
               std::fabs(f1.per_class.at("B").f1() - 2.0 / 3.0) < 1e-12 &&
               std::fabs(f1.micro_f1 - 2.0 / 3.0) < 1e-12;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "edit distance vs brute force on %lld pairs (%lld mismatches); "
                "12-case argument-WER table %s; hand F1 %s",
                pairs, mismatches, golden_ok ? "ok" : "WRONG",
                f1_ok ? "ok" : "WRONG");
  c.detail = buf;
  c.pass = mismatches == 0 && golden_ok && f1_ok;
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 4: beam-search soundness.

std::vector<int> greedy_rollout(Graph& g, const Decoder& dec,
                                const Attention::KeyCache& cache, int sos,
                                int eos, int max_len) {
  Decoder::State st = dec.initial_state(g);
  std::vector<int> tokens;
  int prev = sos;
  for (int step = 0; step < max_len; ++step) {
    Var logits = dec.step(g, prev, st, cache);
    const Tensor lv = logits.value();
    int best = static_cast<int>(
        std::max_element(lv.data.begin(), lv.data.end()) - lv.data.begin());
    if (best == eos) break;
    tokens.push_back(best);
    prev = best;
  }
  return tokens;
}

Criterion criterion_beam() {
  Criterion c{4, "beam-search soundness"};
  Grammar grammar = Grammar::builtin_default();
  Vocab vocab = grammar.make_vocab();
  FeatureConfig fcfg;
  fcfg.base_dim = 2;
  std::vector<Utterance> corpus = generate_corpus(grammar, 5, 33);

  // beam=1 == greedy on every decoding path of all four architectures;
  // 5 seeds x 4 architectures = 20 cases.
  int greedy_mismatch = 0;
  BeamConfig b1;
  b1.beam_size = 1;
  for (int seed = 0; seed < 5; ++seed) {
    const Utterance& u = corpus[static_cast<std::size_t>(seed)];
    Tensor feats = u.features(fcfg);
    for (Architecture arch :
         {Architecture::direct, Architecture::joint, Architecture::multitask,
          Architecture::multistage}) {
      std::optional<Coupling> coup;
      if (arch == Architecture::multistage) coup = Coupling::independent;
      Model m(micro_config(arch, coup, fcfg.stacked_dim()), vocab.size(),
              derive_seed(4000, static_cast<std::uint64_t>(seed)));

      auto check_one = [&](const Decoder& dec,
                           const std::function<std::vector<Var>(Graph&)>& enc,
                           int max_len) {
        Graph ga, gb;
        std::vector<Var> ka = enc(ga);
        Attention::KeyCache ca = dec.attn.project_keys(ga, ka);
        b1.max_len = max_len;
        std::vector<Hypothesis> hyps =
            beam_decode(ga, dec, ca, vocab.sos(), vocab.eos(), b1);
        std::vector<Var> kb = enc(gb);
        Attention::KeyCache cb = dec.attn.project_keys(gb, kb);
        std::vector<int> greedy =
            greedy_rollout(gb, dec, cb, vocab.sos(), vocab.eos(), max_len);
        if (hyps.empty() || hyps.front().tokens != greedy) ++greedy_mismatch;
        return hyps.empty() ? std::vector<int>{} : hyps.front().tokens;
      };

      auto enc_feats = [&](Graph& g) { return m.encode_features(g, feats); };
      int t_max = 4 * feats.shape[0];
      switch (arch) {
        case Architecture::direct:
          check_one(m.semantics_decoder(), enc_feats, 48);
          break;
        case Architecture::joint:
          check_one(m.semantics_decoder(), enc_feats, t_max + 48);
          break;
        case Architecture::multitask:
          check_one(m.transcript_decoder(), enc_feats, t_max);
          check_one(m.semantics_decoder(), enc_feats, 48);
          break;
        case Architecture::multistage: {
          std::vector<int> stage1 =
              check_one(m.transcript_decoder(), enc_feats, t_max);
          if (stage1.empty()) stage1.push_back(vocab.pad());
          auto enc_text = [&](Graph& g) {
            return m.encode_transcript(g, stage1);
          };
          check_one(m.semantics_decoder(), enc_text, 48);
          break;
        }
      }
    }
  }

  // beam=8 recovers the exhaustive-enumeration argmax on a toy decoder with
  // <= 4-step sequences (vocab 3: every prefix tree fits in the beam).
  int exhaustive_mismatch = 0;
  const int toy_vocab = 3, sos = 0, eos = 1, max_len = 3;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(4100, static_cast<std::uint64_t>(trial)));
    ParamStore store;
    Decoder dec = Decoder::create(store, "d", ParamRole::single, 1, toy_vocab,
                                  3, 4, 2, 4, rng);
    std::vector<Tensor> keys;
    for (int t = 0; t < 3; ++t) keys.push_back(rand_tensor({4}, rng));
    auto cache_on = [&](Graph& g) {
      std::vector<Var> kv;
      for (const Tensor& k : keys) kv.push_back(g.constant(k));
      return dec.attn.project_keys(g, kv);
    };
    auto score = [&](const std::vector<int>& tokens, bool add_eos) {
      Graph g;
      Attention::KeyCache cc = cache_on(g);
      Decoder::State st = dec.initial_state(g);
      double total = 0;
      int prev = sos;
      std::vector<int> seq = tokens;
      if (add_eos) seq.push_back(eos);
      for (int tok : seq) {
        Var logits = dec.step(g, prev, st, cc);
        Var lp = log_softmax(logits);
        total += static_cast<double>(lp.value().at(tok));
        prev = tok;
      }
      return total;
    };
    // Exhaustive enumeration of all finished outcomes.
    double best = -1e300;
    std::vector<int> best_tokens;
    std::vector<std::vector<int>> level = {{}};
    for (int len = 0; len < max_len; ++len) {
      std::vector<std::vector<int>> next;
      for (const auto& prefix : level)
        for (int v = 0; v < toy_vocab; ++v) {
          if (v == eos) {
            double s = score(prefix, true);
            if (s > best) {
              best = s;
              best_tokens = prefix;
            }
          } else {
            auto ext = prefix;
            ext.push_back(v);
            if (len + 1 == max_len) {
              double s = score(ext, false);
              if (s > best) {
                best = s;
                best_tokens = ext;
              }
            } else {
              next.push_back(std::move(ext));
            }
          }
        }
      level = std::move(next);
    }
    Graph g;
    BeamConfig cfg;
    cfg.beam_size = 8;
    cfg.max_len = max_len;
    std::vector<Hypothesis> hyps =
        beam_decode(g, dec, cache_on(g), sos, eos, cfg);
    if (hyps.empty() || hyps.front().tokens != best_tokens ||
        std::fabs(hyps.front().log_prob - best) > 1e-9)
      ++exhaustive_mismatch;
  }

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "beam=1 vs greedy: %d/20 cases mismatched; beam=8 vs "
                "exhaustive argmax: %d/20 cases mismatched",
                greedy_mismatch, exhaustive_mismatch);
  c.detail = buf;
  c.pass = greedy_mismatch == 0 && exhaustive_mismatch == 0;
  return c;
}

// ---------------------------------------------------------------------------
// Criteria 5-8: the reference experiment matrix via the CLI.

struct VariantSpec {
  std::string name;
  std::string arch;
  std::string coupling;  // empty: none
};

const std::vector<VariantSpec> kVariants = {
    {"direct", "direct", ""},
    {"joint", "joint", ""},
    {"multitask", "multitask", ""},
    {"multistage_independent", "multistage", "independent"},
    {"multistage_argmax", "multistage", "argmax"},
    {"multistage_sampled", "multistage", "sampled_softmax"},
};

struct RunResult {
  bool ok = false;
  double train_minutes = 0.0;
  EvalReport report;
};

// Train, decode, and evaluate one variant; everything under g_work/tag.
RunResult run_variant(const VariantSpec& v, int train_seed,
                      const std::string& tag) {
  RunResult r;
  fs::path dir = g_work / tag;
  fs::create_directories(dir);
  std::string coup = v.coupling.empty() ? "" : (" --coupling " + v.coupling);

  auto t0 = std::chrono::steady_clock::now();
  std::ostringstream train;
  train << g_slu << " train --corpus " << (g_work / "train/corpus.tsv")
        << " --vocab " << (g_work / "train/vocab.tsv") << " --arch " << v.arch
        << coup << " --steps " << kTrainSteps << " --batch " << kBatchSize
        << " --lr " << kLearningRate << " --seed " << train_seed << " --out "
        << (dir / "model");
  if (run_cmd(train.str(), dir / "train.log") != 0) return r;
  r.train_minutes = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count() /
                    60.0;

  std::ostringstream decode;
  decode << g_slu << " decode --ckpt " << (dir / "model/ckpt.bin")
         << " --corpus " << (g_work / "test/corpus.tsv") << " --vocab "
         << (g_work / "test/vocab.tsv") << " --beam " << kDecodeBeam
         << " --out " << (dir / "decode");
  if (run_cmd(decode.str(), dir / "decode.log") != 0) return r;

  std::ostringstream eval;
  eval << g_slu << " eval --decodes " << (dir / "decode/decodes.tsv")
       << " --corpus " << (g_work / "test/corpus.tsv") << " --vocab "
       << (g_work / "test/vocab.tsv") << " --mode end_to_end --out "
       << (dir / "eval");
  if (run_cmd(eval.str(), dir / "eval.log") != 0) return r;

  r.report = EvalReport::load((dir / "eval/report.json").string());
  r.ok = true;
  return r;
}

bool gen_corpora() {
  std::ostringstream a, b;
  a << g_slu << " gen-data --n " << kTrainCorpusSize << " --seed "
    << kCorpusSeedTrain << " --out " << (g_work / "train");
  b << g_slu << " gen-data --n " << kTestCorpusSize << " --seed "
    << kCorpusSeedTest << " --out " << (g_work / "test");
  return run_cmd(a.str(), g_work / "gen_train.log") == 0 &&
         run_cmd(b.str(), g_work / "gen_test.log") == 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <slu-binary> [workdir]\n");
    return 2;
  }
  g_slu = argv[1];
  g_work = argc > 2 ? fs::path(argv[2]) : fs::path("acceptance_work");
  fs::create_directories(g_work);

  std::vector<Criterion> results;
  results.push_back(criterion_gradients());
  report(results.back());
  results.push_back(criterion_codec());
  report(results.back());
  results.push_back(criterion_metrics());
  report(results.back());
  results.push_back(criterion_beam());
  report(results.back());

  // --- reference experiment matrix -----------------------------------------
  Criterion c5{5, "learnability"};
  Criterion c6{6, "qualitative ordering", false, /*soft=*/true};
  Criterion c7{7, "transcript+CFG evaluation"};
  Criterion c8{8, "pipeline determinism"};

  if (!gen_corpora()) {
    c5.detail = c6.detail = c7.detail = c8.detail = "gen-data failed";
    for (const Criterion* cc : {&c5, &c6, &c7, &c8}) report(*cc);
    return 1;
  }

  // Phase 1: the six reference variants, seed 1, in parallel.
  std::map<std::string, RunResult> ref;
  {
    std::mutex mx;
    std::vector<std::function<void()>> jobs;
    for (const VariantSpec& v : kVariants)
      jobs.push_back([&, v] {
        RunResult r = run_variant(v, 1, v.name);
        std::lock_guard<std::mutex> lk(mx);
        ref[v.name] = std::move(r);
      });
    run_pool(jobs, 6);
  }

  // Phase 2: extra seeds for the ordering band plus the determinism repeat.
  std::map<std::string, RunResult> extra;
  bool det_ok = false;
  std::string det_detail;
  {
    std::mutex mx;
    std::vector<std::function<void()>> jobs;
    for (const std::string& name : {std::string("direct"), std::string("joint"),
                                    std::string("multitask")})
      for (int seed : {2, 3}) {
        const VariantSpec* v = nullptr;
        for (const VariantSpec& s : kVariants)
          if (s.name == name) v = &s;
        jobs.push_back([&, v, seed] {
          RunResult r = run_variant(*v, seed,
                                    v->name + "_seed" + std::to_string(seed));
          std::lock_guard<std::mutex> lk(mx);
          extra[v->name + std::to_string(seed)] = std::move(r);
        });
      }
    jobs.push_back([&] {
      // Repeat the full joint pipeline (including gen-data) with identical
      // seeds and compare every artifact byte for byte.
      fs::path redo = g_work / "determinism";
      fs::create_directories(redo);
      std::ostringstream gen;
      gen << g_slu << " gen-data --n " << kTrainCorpusSize << " --seed "
          << kCorpusSeedTrain << " --out " << (redo / "train");
      bool ok = run_cmd(gen.str(), redo / "gen.log") == 0 &&
                same_bytes(g_work / "train/corpus.tsv",
                           redo / "train/corpus.tsv");
      std::string why = ok ? "" : "corpus differs; ";

      // Rerun the joint variant against the same corpora into redo/joint.
      VariantSpec joint{"joint", "joint", ""};
      RunResult r2 = run_variant(joint, 1, "determinism/joint");
      bool files_ok =
          r2.ok &&
          same_bytes(g_work / "joint/model/ckpt.bin",
                     g_work / "determinism/joint/model/ckpt.bin") &&
          same_bytes(g_work / "joint/decode/decodes.tsv",
                     g_work / "determinism/joint/decode/decodes.tsv") &&
          same_bytes(g_work / "joint/eval/report.json",
                     g_work / "determinism/joint/eval/report.json");
      std::lock_guard<std::mutex> lk(mx);
      det_ok = ok && files_ok;
      det_detail = det_ok
                       ? "corpus, checkpoint, decodes, report byte-identical"
                       : (why + (files_ok ? "" : "pipeline artifacts differ"));
    });
    run_pool(jobs, 7);
  }

  // ----- criterion 5 --------------------------------------------------------
  {
    bool ok = true;
    std::ostringstream detail;
    detail.precision(4);
    for (const VariantSpec& v : kVariants) {
      const RunResult& r = ref[v.name];
      if (!r.ok) {
        ok = false;
        detail << v.name << ": run failed; ";
        continue;
      }
      double f1 = r.report.domain.micro_f1;
      double wer = r.report.transcript_wer.value_or(-1.0);
      bool this_ok = f1 >= 0.90 && r.train_minutes <= 30.0 &&
                     (v.name == "direct" || wer <= 0.15);
      ok = ok && this_ok;
      detail << v.name << ": domain F1 " << f1;
      if (v.name != "direct") detail << ", WER " << wer;
      detail << ", " << std::fixed << r.train_minutes << " min"
             << std::defaultfloat << (this_ok ? "" : " [below target]")
             << "; ";
    }
    // Frozen reference comparison (exact per fixed seed).
    for (const FrozenRef& fz : kFrozen) {
      auto it = ref.find(fz.variant);
      if (it == ref.end() || !it->second.ok) continue;
      const EvalReport& rep = it->second.report;
      double wer = rep.transcript_wer.value_or(-1.0);
      if (std::fabs(rep.domain.micro_f1 - fz.domain_f1) > 1e-9 ||
          std::fabs(wer - fz.transcript_wer) > 1e-9 ||
          std::fabs(rep.arguments.weighted_average - fz.argument_wer) > 1e-9) {
        ok = false;
        detail << fz.variant << ": drifted from frozen reference; ";
      }
    }
    if (kFrozen.empty()) detail << "(no frozen references yet: oracle run)";
    c5.pass = ok;
    c5.detail = detail.str();
  }

  // ----- criterion 6 (soft) -------------------------------------------------
  {
    std::ostringstream detail;
    detail.precision(4);
    bool all_runs_ok = true;
    int violations = 0;
    for (int seed : {1, 2, 3}) {
      auto get = [&](const std::string& name) -> const RunResult* {
        if (seed == 1) return &ref[name];
        return &extra[name + std::to_string(seed)];
      };
      const RunResult* d = get("direct");
      const RunResult* j = get("joint");
      const RunResult* m = get("multitask");
      if (!d->ok || !j->ok || !m->ok) {
        all_runs_ok = false;
        continue;
      }
      double dw = d->report.arguments.weighted_average;
      double jw = j->report.arguments.weighted_average;
      double mw = m->report.arguments.weighted_average;
      bool ordered = dw >= jw && dw >= mw;
      if (!ordered) ++violations;
      detail << "seed " << seed << ": direct " << dw << " vs joint " << jw
             << " / multitask " << mw << (ordered ? "" : " [not >=]") << "; ";
    }
    c6.pass = all_runs_ok;  // soft: ordering reported, not gated
    if (violations > 0)
      detail << "ordering violated on " << violations
             << "/3 seeds (soft criterion: investigate, not reject)";
    c6.detail = detail.str();
  }

  // ----- criterion 7 --------------------------------------------------------
  {
    bool ok = true;
    std::ostringstream detail;
    fs::path dir = g_work / "table5";
    fs::create_directories(dir);

    // (a) transcript+CFG evaluation of the reference joint decodes.
    std::ostringstream ev;
    ev << g_slu << " eval --decodes " << (g_work / "joint/decode/decodes.tsv")
       << " --corpus " << (g_work / "test/corpus.tsv") << " --vocab "
       << (g_work / "test/vocab.tsv")
       << " --mode transcript_plus_cfg --out " << (dir / "joint_cfg");
    if (run_cmd(ev.str(), dir / "joint_cfg.log") != 0) {
      ok = false;
      detail << "CFG-mode eval of joint decodes failed; ";
    } else {
      EvalReport rep = EvalReport::load((dir / "joint_cfg/report.json").string());
      if (rep.mode != EvalMode::transcript_plus_cfg ||
          rep.num_utterances != kTestCorpusSize || !rep.transcript_wer) {
        ok = false;
        detail << "CFG-mode report incomplete; ";
      } else {
        detail.precision(4);
        detail << "joint via CFG: domain F1 " << rep.domain.micro_f1
               << ", arg WER " << rep.arguments.weighted_average << "; ";
      }
    }

    // (b) self-consistency: ground-truth transcripts through the CFG path
    // must score perfectly.
    Grammar grammar = Grammar::builtin_default();
    Vocab vocab = grammar.make_vocab();
    std::vector<Utterance> test =
        load_corpus((g_work / "test/corpus.tsv").string(), vocab);
    std::vector<DecodeRecord> oracle;
    for (const Utterance& u : test) {
      DecodeRecord d;
      d.id = u.id;
      d.transcript = u.transcript;
      d.semantics_rendered = vocab.render(serialize(u.frame, vocab));
      oracle.push_back(d);
    }
    save_decodes(oracle, (dir / "oracle_decodes.tsv").string());
    std::ostringstream ev2;
    ev2 << g_slu << " eval --decodes " << (dir / "oracle_decodes.tsv")
        << " --corpus " << (g_work / "test/corpus.tsv") << " --vocab "
        << (g_work / "test/vocab.tsv")
        << " --mode transcript_plus_cfg --out " << (dir / "oracle_cfg");
    if (run_cmd(ev2.str(), dir / "oracle_cfg.log") != 0) {
      ok = false;
      detail << "oracle CFG eval failed";
    } else {
      EvalReport rep =
          EvalReport::load((dir / "oracle_cfg/report.json").string());
      bool perfect = rep.domain.micro_f1 == 1.0 && rep.intent.micro_f1 == 1.0 &&
                     rep.arguments.weighted_average == 0.0 &&
                     rep.transcript_wer && *rep.transcript_wer == 0.0;
      if (!perfect) {
        ok = false;
        detail << "ground-truth transcripts did not score perfectly";
      } else {
        detail << "ground-truth transcripts: F1 1.0, arg WER 0";
      }
    }
    c7.pass = ok;
    c7.detail = detail.str();
  }

  c8.pass = det_ok;
  c8.detail = det_detail;

  report(c5);
  report(c6);
  report(c7);
  report(c8);

  results.push_back(c5);
  results.push_back(c6);
  results.push_back(c7);
  results.push_back(c8);
  int failed = 0;
  for (const Criterion& c : results)
    if (!c.pass) ++failed;
  std::printf("%d/8 criteria passed\n", 8 - failed);
  return failed == 0 ? 0 : 1;
}
