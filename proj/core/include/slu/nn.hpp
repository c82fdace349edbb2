#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slu/rng.hpp"
#include "slu/tensor.hpp"

namespace slu {

// Parameter roles mirror how the architectures partition their weights:
// a shared/first encoder, per-task decoders, and the two multistage stages.
enum class ParamRole { encoder, decoder_w, decoder_s, stage1, stage2, single };

const char* role_name(ParamRole r);

struct ParamEntry {
  std::string name;
  ParamRole role;
  Tensor* tensor;
};

// Ordered, name-addressed parameter collection. Creation order is fixed by
// the model builder, which makes checkpoints and RNG draws reproducible.
// Tensors are heap-stable; pointers stay valid for the store's lifetime.
class ParamStore {
 public:
  Tensor* add(const std::string& name, ParamRole role, Tensor t);
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t total_size() const;
  void zero_grads();

 private:
  std::vector<ParamEntry> entries_;
  std::vector<std::unique_ptr<Tensor>> storage_;
};

Tensor init_uniform_matrix(int rows, int cols, int fan_in, Rng& rng);

struct LstmCell {
  int input_dim = 0;
  int hidden_dim = 0;
  Tensor *w_i, *w_f, *w_o, *w_g;  // [hidden, input+hidden]
  Tensor *b_i, *b_f, *b_o, *b_g;  // [hidden]

  static LstmCell create(ParamStore& store, const std::string& prefix,
                         ParamRole role, int input_dim, int hidden_dim,
                         Rng& rng, real forget_bias = real(1));

  // Standard LSTM step; x [input_dim], h_prev/c_prev [hidden_dim].
  std::pair<Var, Var> step(Graph& g, Var x, Var h_prev, Var c_prev) const;
};

// 4-headed additive attention: per head, score_i = v . tanh(Q q + K k_i),
// weights = softmax(scores), context = sum_i w_i k_i; contexts concatenate
// across heads.
struct Attention {
  int num_heads = 0;
  int attn_dim = 0;
  int query_dim = 0;
  int key_dim = 0;
  std::vector<Tensor*> q_proj;  // per head [attn_dim, query_dim]
  std::vector<Tensor*> k_proj;  // per head [key_dim, attn_dim]
  std::vector<Tensor*> score_v; // per head [attn_dim]

  static Attention create(ParamStore& store, const std::string& prefix,
                          ParamRole role, int num_heads, int attn_dim,
                          int query_dim, int key_dim, Rng& rng);

  int context_dim() const { return num_heads * key_dim; }

  // Key projections are step-independent; computed once per utterance.
  struct KeyCache {
    Var keys;                    // [T, key_dim]
    std::vector<Var> projected;  // per head [T, attn_dim]
  };
  KeyCache project_keys(Graph& g, std::span<const Var> keys) const;

  struct Result {
    Var context;               // [num_heads * key_dim]
    std::vector<Var> weights;  // per head [T]
  };
  Result attend(Graph& g, Var query, const KeyCache& cache) const;
  Result attend(Graph& g, Var query, std::span<const Var> keys) const;
};

// Uni- or bidirectional LSTM stack; bidirectional layers concatenate the
// forward and reverse hidden state per step.
struct Encoder {
  bool bidirectional = false;
  int hidden_dim = 0;
  std::vector<LstmCell> forward_cells;
  std::vector<LstmCell> backward_cells;  // empty when unidirectional

  static Encoder create(ParamStore& store, const std::string& prefix,
                        ParamRole role, int num_layers, int input_dim,
                        int hidden_dim, bool bidirectional, Rng& rng);

  int output_dim() const { return bidirectional ? 2 * hidden_dim : hidden_dim; }
  std::vector<Var> run(Graph& g, std::span<const Var> inputs) const;
};

// Attention decoder stack: embedding, LSTM layers, additive attention, and
// an output projection to vocab size. The attention context enters both the
// next step's input and the output projection.
struct Decoder {
  int vocab_size = 0;
  int emb_dim = 0;
  int hidden_dim = 0;
  Tensor* embedding = nullptr;  // [vocab, emb_dim]
  std::vector<LstmCell> cells;
  Attention attn;
  Tensor* w_out = nullptr;  // [vocab, hidden + context_dim]
  Tensor* b_out = nullptr;  // [vocab]

  static Decoder create(ParamStore& store, const std::string& prefix,
                        ParamRole role, int num_layers, int vocab_size,
                        int emb_dim, int hidden_dim, int num_heads,
                        int key_dim, Rng& rng);

  struct State {
    std::vector<Var> h;
    std::vector<Var> c;
    Var context;
  };
  State initial_state(Graph& g) const;

  // One teacher-forced / search step: returns logits [vocab] and advances
  // `state` in place. Pure in (params, prev_token, state, cache).
  Var step(Graph& g, int prev_token, State& state,
           const Attention::KeyCache& cache) const;
};

}  // namespace slu
