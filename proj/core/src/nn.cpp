#include "slu/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace slu {

const char* role_name(ParamRole r) {
  switch (r) {
    case ParamRole::encoder: return "encoder";
    case ParamRole::decoder_w: return "decoder_w";
    case ParamRole::decoder_s: return "decoder_s";
    case ParamRole::stage1: return "stage1";
    case ParamRole::stage2: return "stage2";
    case ParamRole::single: return "single";
  }
  return "?";
}

Tensor* ParamStore::add(const std::string& name, ParamRole role, Tensor t) {
  if (find(name) != nullptr)
    throw std::invalid_argument("ParamStore: duplicate name " + name);
  storage_.push_back(std::make_unique<Tensor>(std::move(t)));
  Tensor* p = storage_.back().get();
  entries_.push_back(ParamEntry{name, role, p});
  return p;
}

Tensor* ParamStore::find(const std::string& name) {
  for (const ParamEntry& e : entries_)
    if (e.name == name) return e.tensor;
  return nullptr;
}

const Tensor* ParamStore::find(const std::string& name) const {
  for (const ParamEntry& e : entries_)
    if (e.name == name) return e.tensor;
  return nullptr;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const ParamEntry& e : entries_) n += e.tensor->size();
  return n;
}

void ParamStore::zero_grads() {
  for (const ParamEntry& e : entries_) e.tensor->zero_grad();
}

Tensor init_uniform_matrix(int rows, int cols, int fan_in, Rng& rng) {
  Tensor t({rows, cols});
  real s = static_cast<real>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  for (real& x : t.data) x = static_cast<real>(rng.uniform(-s, s));
  return t;
}

LstmCell LstmCell::create(ParamStore& store, const std::string& prefix,
                          ParamRole role, int input_dim, int hidden_dim,
                          Rng& rng, real forget_bias) {
  if (input_dim <= 0 || hidden_dim <= 0)
    throw std::invalid_argument("LstmCell: non-positive dimension");
  LstmCell cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  int fan_in = input_dim + hidden_dim;
  auto mat = [&](const char* gate) {
    return store.add(prefix + ".w_" + gate, role,
                     init_uniform_matrix(hidden_dim, fan_in, fan_in, rng));
  };
  auto bias = [&](const char* gate, real v) {
    Tensor b({hidden_dim});
    for (real& x : b.data) x = v;
    return store.add(prefix + ".b_" + gate, role, std::move(b));
  };
  cell.w_i = mat("i");
  cell.w_f = mat("f");
  cell.w_o = mat("o");
  cell.w_g = mat("g");
  cell.b_i = bias("i", 0);
  cell.b_f = bias("f", forget_bias);
  cell.b_o = bias("o", 0);
  cell.b_g = bias("g", 0);
  return cell;
}

std::pair<Var, Var> LstmCell::step(Graph& g, Var x, Var h_prev,
                                   Var c_prev) const {
  if (x.value().rank() != 1 ||
      x.value().shape[0] != input_dim ||
      h_prev.value().shape[0] != hidden_dim ||
      c_prev.value().shape[0] != hidden_dim)
    throw ShapeError("lstm_step: input dims do not match cell params");
  Var xh = concat(x, h_prev);
  Var i = sigmoid(add(matmul(g.leaf(w_i), xh), g.leaf(b_i)));
  Var f = sigmoid(add(matmul(g.leaf(w_f), xh), g.leaf(b_f)));
  Var o = sigmoid(add(matmul(g.leaf(w_o), xh), g.leaf(b_o)));
  Var cand = tanh(add(matmul(g.leaf(w_g), xh), g.leaf(b_g)));
  Var c = add(mul(f, c_prev), mul(i, cand));
  Var h = mul(o, tanh(c));
  return {h, c};
}

Attention Attention::create(ParamStore& store, const std::string& prefix,
                            ParamRole role, int num_heads, int attn_dim,
                            int query_dim, int key_dim, Rng& rng) {
  if (num_heads < 1) throw std::invalid_argument("Attention: num_heads < 1");
  Attention a;
  a.num_heads = num_heads;
  a.attn_dim = attn_dim;
  a.query_dim = query_dim;
  a.key_dim = key_dim;
  for (int h = 0; h < num_heads; ++h) {
    std::string hp = prefix + ".h" + std::to_string(h);
    a.q_proj.push_back(store.add(
        hp + ".q", role, init_uniform_matrix(attn_dim, query_dim, query_dim, rng)));
    a.k_proj.push_back(store.add(
        hp + ".k", role, init_uniform_matrix(key_dim, attn_dim, key_dim, rng)));
    Tensor v({attn_dim});
    real s = static_cast<real>(1.0 / std::sqrt(static_cast<double>(attn_dim)));
    for (real& x : v.data) x = static_cast<real>(rng.uniform(-s, s));
    a.score_v.push_back(store.add(hp + ".v", role, std::move(v)));
  }
  return a;
}

Attention::KeyCache Attention::project_keys(Graph& g,
                                            std::span<const Var> keys) const {
  if (keys.empty()) throw std::invalid_argument("attend: empty keys");
  KeyCache cache;
  cache.keys = stack_rows(g, keys);  // [T, key_dim]
  for (int h = 0; h < num_heads; ++h)
    cache.projected.push_back(matmul(cache.keys, g.leaf(k_proj[h])));
  return cache;
}

Attention::Result Attention::attend(Graph& g, Var query,
                                    const KeyCache& cache) const {
  Result res;
  Var context{};
  for (int h = 0; h < num_heads; ++h) {
    Var qp = matmul(g.leaf(q_proj[h]), query);            // [attn_dim]
    Var pre = tanh(add_rowvec(cache.projected[h], qp));   // [T, attn_dim]
    Var s = matmul(pre, g.leaf(score_v[h]));              // [T]
    Var w = softmax(s);
    Var ctx = matmul(w, cache.keys);                      // [key_dim]
    res.weights.push_back(w);
    context = (h == 0) ? ctx : concat(context, ctx);
  }
  res.context = context;
  return res;
}

Attention::Result Attention::attend(Graph& g, Var query,
                                    std::span<const Var> keys) const {
  KeyCache cache = project_keys(g, keys);
  return attend(g, query, cache);
}

Encoder Encoder::create(ParamStore& store, const std::string& prefix,
                        ParamRole role, int num_layers, int input_dim,
                        int hidden_dim, bool bidirectional, Rng& rng) {
  Encoder enc;
  enc.bidirectional = bidirectional;
  enc.hidden_dim = hidden_dim;
  int in_dim = input_dim;
  for (int l = 0; l < num_layers; ++l) {
    std::string lp = prefix + ".l" + std::to_string(l);
    enc.forward_cells.push_back(
        LstmCell::create(store, lp + ".fwd", role, in_dim, hidden_dim, rng));
    if (bidirectional)
      enc.backward_cells.push_back(
          LstmCell::create(store, lp + ".bwd", role, in_dim, hidden_dim, rng));
    in_dim = enc.output_dim();
  }
  return enc;
}

std::vector<Var> Encoder::run(Graph& g, std::span<const Var> inputs) const {
  if (inputs.empty()) throw std::invalid_argument("run_encoder: empty sequence");
  std::vector<Var> current(inputs.begin(), inputs.end());
  std::size_t T = current.size();
  for (std::size_t l = 0; l < forward_cells.size(); ++l) {
    const LstmCell& fwd = forward_cells[l];
    Var h = g.constant(Tensor({hidden_dim}));
    Var c = g.constant(Tensor({hidden_dim}));
    std::vector<Var> fwd_out;
    fwd_out.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      auto [nh, nc] = fwd.step(g, current[t], h, c);
      h = nh;
      c = nc;
      fwd_out.push_back(nh);
    }
    if (!bidirectional) {
      current = std::move(fwd_out);
      continue;
    }
    const LstmCell& bwd = backward_cells[l];
    Var hb = g.constant(Tensor({hidden_dim}));
    Var cb = g.constant(Tensor({hidden_dim}));
    std::vector<Var> bwd_out(T, Var{});
    for (std::size_t t = T; t-- > 0;) {
      auto [nh, nc] = bwd.step(g, current[t], hb, cb);
      hb = nh;
      cb = nc;
      bwd_out[t] = nh;
    }
    std::vector<Var> combined;
    combined.reserve(T);
    for (std::size_t t = 0; t < T; ++t)
      combined.push_back(concat(fwd_out[t], bwd_out[t]));
    current = std::move(combined);
  }
  return current;
}

Decoder Decoder::create(ParamStore& store, const std::string& prefix,
                        ParamRole role, int num_layers, int vocab_size,
                        int emb_dim, int hidden_dim, int num_heads,
                        int key_dim, Rng& rng) {
  Decoder dec;
  dec.vocab_size = vocab_size;
  dec.emb_dim = emb_dim;
  dec.hidden_dim = hidden_dim;
  dec.embedding = store.add(
      prefix + ".emb", role,
      init_uniform_matrix(vocab_size, emb_dim, emb_dim, rng));
  int attn_dim = std::max(1, hidden_dim / num_heads);
  dec.attn = Attention::create(store, prefix + ".attn", role, num_heads,
                               attn_dim, hidden_dim, key_dim, rng);
  int in_dim = emb_dim + dec.attn.context_dim();
  for (int l = 0; l < num_layers; ++l) {
    dec.cells.push_back(LstmCell::create(store,
                                         prefix + ".l" + std::to_string(l),
                                         role, in_dim, hidden_dim, rng));
    in_dim = hidden_dim;
  }
  int out_in = hidden_dim + dec.attn.context_dim();
  dec.w_out = store.add(prefix + ".w_out", role,
                        init_uniform_matrix(vocab_size, out_in, out_in, rng));
  dec.b_out = store.add(prefix + ".b_out", role, Tensor({vocab_size}));
  return dec;
}

Decoder::State Decoder::initial_state(Graph& g) const {
  State s;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    s.h.push_back(g.constant(Tensor({hidden_dim})));
    s.c.push_back(g.constant(Tensor({hidden_dim})));
  }
  s.context = g.constant(Tensor({attn.context_dim()}));
  return s;
}

Var Decoder::step(Graph& g, int prev_token, State& state,
                  const Attention::KeyCache& cache) const {
  if (prev_token < 0 || prev_token >= vocab_size)
    throw std::out_of_range("decode_step: token id " +
                            std::to_string(prev_token) + " out of vocab " +
                            std::to_string(vocab_size));
  Var x = concat(embed_lookup(g.leaf(embedding), prev_token), state.context);
  for (std::size_t l = 0; l < cells.size(); ++l) {
    auto [nh, nc] = cells[l].step(g, x, state.h[l], state.c[l]);
    state.h[l] = nh;
    state.c[l] = nc;
    x = nh;
  }
  Attention::Result att = attn.attend(g, x, cache);
  state.context = att.context;
  Var logits = add(matmul(g.leaf(w_out), concat(x, att.context)),
                   g.leaf(b_out));
  return logits;
}

}  // namespace slu
