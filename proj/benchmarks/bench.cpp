// Microbenchmarks for the training- and inference-critical paths.

#include <benchmark/benchmark.h>

#include <optional>
#include <vector>

#include "slu/corpus.hpp"
#include "slu/grammar.hpp"
#include "slu/inference.hpp"
#include "slu/model.hpp"
#include "slu/nn.hpp"
#include "slu/rng.hpp"
#include "slu/tensor.hpp"

using namespace slu;

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (real& x : t.data) x = static_cast<real>(rng.uniform(-1.0, 1.0));
  return t;
}

Utterance sample_utterance() {
  Grammar grammar = Grammar::builtin_default();
  return generate_corpus(grammar, 1, 7).front();
}

void BM_FeatureSynthesis(benchmark::State& state) {
  Utterance u = sample_utterance();
  FeatureConfig fcfg;
  for (auto _ : state) benchmark::DoNotOptimize(synth_features(u.transcript, 1, fcfg));
}
BENCHMARK(BM_FeatureSynthesis);

void BM_LstmStep(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(1);
  ParamStore store;
  LstmCell cell = LstmCell::create(store, "l", ParamRole::single, dim, dim, rng);
  Tensor x = rand_tensor({dim}, rng);
  for (auto _ : state) {
    Graph g;
    Var h = g.constant(Tensor({dim})), c = g.constant(Tensor({dim}));
    std::tie(h, c) = cell.step(g, g.constant(x), h, c);
    benchmark::DoNotOptimize(h.value().data.data());
  }
}
BENCHMARK(BM_LstmStep)->Arg(64)->Arg(128);

void BM_LossForwardBackward(benchmark::State& state) {
  const Architecture arch = static_cast<Architecture>(state.range(0));
  Grammar grammar = Grammar::builtin_default();
  Vocab vocab = grammar.make_vocab();
  Utterance u = sample_utterance();
  std::optional<Coupling> coup;
  if (arch == Architecture::multistage) coup = Coupling::independent;
  Model model(ModelConfig::desk_preset(arch, coup), vocab.size(), 3);
  FeatureConfig fcfg;
  for (auto _ : state) {
    Graph g;
    LossBreakdown bd;
    Var loss = model.loss(g, u, vocab, fcfg, bd);
    model.params().zero_grads();
    g.backward(loss);
    benchmark::DoNotOptimize(bd.total);
  }
}
BENCHMARK(BM_LossForwardBackward)
    ->Arg(static_cast<int>(Architecture::direct))
    ->Arg(static_cast<int>(Architecture::joint))
    ->Arg(static_cast<int>(Architecture::multitask))
    ->Arg(static_cast<int>(Architecture::multistage));

void BM_BeamDecode(benchmark::State& state) {
  const int beam = static_cast<int>(state.range(0));
  Grammar grammar = Grammar::builtin_default();
  Vocab vocab = grammar.make_vocab();
  Utterance u = sample_utterance();
  Model model(ModelConfig::desk_preset(Architecture::direct), vocab.size(), 3);
  FeatureConfig fcfg;
  DecodeConfig cfg;
  cfg.beam_size = beam;
  for (auto _ : state) {
    Prediction p = predict_semantics(model, u, vocab, cfg, fcfg);
    benchmark::DoNotOptimize(p.semantics_log_prob);
  }
}
BENCHMARK(BM_BeamDecode)->Arg(1)->Arg(4)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
