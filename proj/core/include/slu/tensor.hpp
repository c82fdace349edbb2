#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace slu {

#ifdef SLU_REAL32
using real = float;
#else
using real = double;
#endif

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of rank 1 or 2, with an optional same-shape
// gradient buffer.
struct Tensor {
  std::vector<int> shape;
  std::vector<real> data;
  std::vector<real> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, std::vector<real> d);

  static Tensor vector(std::vector<real> d);
  static Tensor matrix(int rows, int cols, std::vector<real> d = {});
  static Tensor scalar(real v);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return rank() == 2 ? shape[1] : 1; }

  real& at(int i) { return data[static_cast<std::size_t>(i)]; }
  real at(int i) const { return data[static_cast<std::size_t>(i)]; }
  real& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  real at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

  void ensure_grad();   // allocate + zero if absent
  void zero_grad();
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

enum class OpKind {
  leaf,
  constant,
  matmul,
  add,
  add_rowvec,  // [T,d] + [d] broadcast over rows
  mul,         // elementwise, or (any, scalar[1])
  tanh_fn,
  sigmoid_fn,
  softmax_fn,      // rowwise for rank 2
  log_softmax_fn,  // rowwise for rank 2
  concat,          // rank-1 concatenation
  stack_rows,      // n vectors of dim d -> [n,d]
  slice,           // contiguous rank-1 slice
  embed_lookup,    // table [V,d], row id -> [d]
  sum,             // all elements -> [1]
  scale,           // multiply by compile-time constant
  detach,          // identity forward, blocks gradient
};

const char* op_name(OpKind k);

class Graph;

// Lightweight handle to a node on a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  bool valid() const { return graph != nullptr && id >= 0; }
};

struct Node {
  OpKind op = OpKind::leaf;
  std::vector<int> inputs;
  Tensor value;
  Tensor* param = nullptr;  // bound external tensor for leaves
  int attr0 = 0;            // slice offset / embed row
  int attr1 = 0;            // slice length
  real cval = 0;            // scale constant
};

// Define-by-run computation tape. Nodes are appended in topological order;
// backward walks them in reverse. One graph per training step, confined to
// a single thread. Any non-finite value produced in a forward or backward
// pass raises NumericalError naming the node.
class Graph {
 public:
  Var leaf(Tensor* param);            // parameter leaf, grads flow to *param
  Var constant(Tensor value);         // input data, no gradient
  Var constant(std::vector<real> v) { return constant(Tensor::vector(std::move(v))); }

  // Populates grads of every parameter leaf reachable from `loss`.
  // The graph is single-use: a second backward call is an error.
  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t num_nodes() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // op builders (also exposed as free functions below)
  Var apply(OpKind op, std::vector<int> inputs, int attr0 = 0, int attr1 = 0,
            real cval = 0);

 private:
  friend struct Var;
  Tensor eval(OpKind op, const std::vector<int>& inputs, int attr0, int attr1,
              real cval) const;
  void backprop_node(int id);
  void check_finite(const Tensor& t, OpKind op, int id, const char* pass) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_cache_;
  bool consumed_ = false;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var add_rowvec(Var m, Var v);
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax(Var a);
Var log_softmax(Var a);
Var concat(Var a, Var b);
Var stack_rows(Graph& g, std::span<const Var> rows);
Var slice(Var a, int offset, int len);
Var embed_lookup(Var table, int id);
Var sum(Var a);
Var scale(Var a, real c);
Var detach(Var a);

}  // namespace slu
