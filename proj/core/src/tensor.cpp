#include "slu/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace slu {

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("Tensor: non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  data.assign(n, real(0));
}

Tensor::Tensor(std::vector<int> s, std::vector<real> d) : Tensor(std::move(s)) {
  if (d.size() != data.size()) throw ShapeError("Tensor: data/shape mismatch");
  data = std::move(d);
}

Tensor Tensor::vector(std::vector<real> d) {
  // Read the size before the move: argument evaluation order is unspecified.
  const int n = static_cast<int>(d.size());
  return Tensor({n}, std::move(d));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<real> d) {
  if (d.empty()) return Tensor({rows, cols});
  return Tensor({rows, cols}, std::move(d));
}

Tensor Tensor::scalar(real v) { return Tensor({1}, {v}); }

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), real(0));
}

void Tensor::zero_grad() { grad.assign(data.size(), real(0)); }

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_rowvec: return "add_rowvec";
    case OpKind::mul: return "mul";
    case OpKind::tanh_fn: return "tanh";
    case OpKind::sigmoid_fn: return "sigmoid";
    case OpKind::softmax_fn: return "softmax";
    case OpKind::log_softmax_fn: return "log_softmax";
    case OpKind::concat: return "concat";
    case OpKind::stack_rows: return "stack_rows";
    case OpKind::slice: return "slice";
    case OpKind::embed_lookup: return "embed_lookup";
    case OpKind::sum: return "sum";
    case OpKind::scale: return "scale";
    case OpKind::detach: return "detach";
  }
  return "?";
}

const Tensor& Var::value() const { return graph->value(id); }

namespace {

[[noreturn]] void shape_fail(OpKind op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " +
                   a.shape_str() + " and " + b.shape_str());
}

void softmax_row(const real* in, real* out, int n) {
  real mx = in[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  real total = 0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    total += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= total;
}

void log_softmax_row(const real* in, real* out, int n) {
  real mx = in[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  real total = 0;
  for (int i = 0; i < n; ++i) total += std::exp(in[i] - mx);
  real lz = mx + std::log(total);
  for (int i = 0; i < n; ++i) out[i] = in[i] - lz;
}

}  // namespace

Var Graph::leaf(Tensor* param) {
  if (param == nullptr) throw std::invalid_argument("Graph::leaf: null param");
  auto it = leaf_cache_.find(param);
  if (it != leaf_cache_.end()) return Var{this, it->second};
  Node n;
  n.op = OpKind::leaf;
  n.value = *param;  // copy of the value; grads flow back through `param`
  n.param = param;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  leaf_cache_.emplace(param, id);
  return Var{this, id};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = OpKind::constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::apply(OpKind op, std::vector<int> inputs, int attr0, int attr1,
                 real cval) {
  Node n;
  n.op = op;
  n.value = eval(op, inputs, attr0, attr1, cval);
  n.inputs = std::move(inputs);
  n.attr0 = attr0;
  n.attr1 = attr1;
  n.cval = cval;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  check_finite(nodes_.back().value, op, id, "forward");
  return Var{this, id};
}

Tensor Graph::eval(OpKind op, const std::vector<int>& inputs, int attr0,
                   int attr1, real cval) const {
  auto in = [&](std::size_t i) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(inputs.at(i))].value;
  };
  switch (op) {
    case OpKind::matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() == 2 && b.rank() == 2) {
        if (a.shape[1] != b.shape[0]) shape_fail(op, a, b);
        Tensor c({a.shape[0], b.shape[1]});
        int m = a.shape[0], k = a.shape[1], n = b.shape[1];
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            real av = a.at(i, p);
            if (av == 0) continue;
            for (int j = 0; j < n; ++j) c.at(i, j) += av * b.at(p, j);
          }
        return c;
      }
      if (a.rank() == 2 && b.rank() == 1) {
        if (a.shape[1] != b.shape[0]) shape_fail(op, a, b);
        Tensor c({a.shape[0]});
        for (int i = 0; i < a.shape[0]; ++i) {
          real acc = 0;
          for (int p = 0; p < a.shape[1]; ++p) acc += a.at(i, p) * b.at(p);
          c.at(i) = acc;
        }
        return c;
      }
      if (a.rank() == 1 && b.rank() == 2) {
        if (a.shape[0] != b.shape[0]) shape_fail(op, a, b);
        Tensor c({b.shape[1]});
        for (int p = 0; p < b.shape[0]; ++p) {
          real av = a.at(p);
          if (av == 0) continue;
          for (int j = 0; j < b.shape[1]; ++j) c.at(j) += av * b.at(p, j);
        }
        return c;
      }
      shape_fail(op, a, b);
    }
    case OpKind::add: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (!a.same_shape(b)) shape_fail(op, a, b);
      Tensor c = a;
      for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += b.data[i];
      return c;
    }
    case OpKind::add_rowvec: {
      const Tensor& m = in(0);
      const Tensor& v = in(1);
      if (m.rank() != 2 || v.rank() != 1 || m.shape[1] != v.shape[0])
        shape_fail(op, m, v);
      Tensor c = m;
      for (int r = 0; r < m.shape[0]; ++r)
        for (int j = 0; j < m.shape[1]; ++j) c.at(r, j) += v.at(j);
      return c;
    }
    case OpKind::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (b.size() == 1 && b.rank() == 1) {
        Tensor c = a;
        for (real& x : c.data) x *= b.data[0];
        return c;
      }
      if (!a.same_shape(b)) shape_fail(op, a, b);
      Tensor c = a;
      for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= b.data[i];
      return c;
    }
    case OpKind::tanh_fn: {
      Tensor c = in(0);
      for (real& x : c.data) x = std::tanh(x);
      return c;
    }
    case OpKind::sigmoid_fn: {
      Tensor c = in(0);
      for (real& x : c.data) x = real(1) / (real(1) + std::exp(-x));
      return c;
    }
    case OpKind::softmax_fn:
    case OpKind::log_softmax_fn: {
      const Tensor& a = in(0);
      Tensor c = a;
      int ncols = a.rank() == 2 ? a.shape[1] : a.shape[0];
      int nrows = a.rank() == 2 ? a.shape[0] : 1;
      for (int r = 0; r < nrows; ++r) {
        const real* src = a.data.data() + static_cast<std::size_t>(r) * ncols;
        real* dst = c.data.data() + static_cast<std::size_t>(r) * ncols;
        if (op == OpKind::softmax_fn)
          softmax_row(src, dst, ncols);
        else
          log_softmax_row(src, dst, ncols);
      }
      return c;
    }
    case OpKind::concat: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 1 || b.rank() != 1) shape_fail(op, a, b);
      Tensor c({a.shape[0] + b.shape[0]});
      std::copy(a.data.begin(), a.data.end(), c.data.begin());
      std::copy(b.data.begin(), b.data.end(), c.data.begin() + a.shape[0]);
      return c;
    }
    case OpKind::stack_rows: {
      if (inputs.empty()) throw ShapeError("stack_rows: no inputs");
      int d = in(0).shape.at(0);
      Tensor c({static_cast<int>(inputs.size()), d});
      for (std::size_t r = 0; r < inputs.size(); ++r) {
        const Tensor& v = in(r);
        if (v.rank() != 1 || v.shape[0] != d) shape_fail(op, in(0), v);
        std::copy(v.data.begin(), v.data.end(),
                  c.data.begin() + static_cast<std::ptrdiff_t>(r) * d);
      }
      return c;
    }
    case OpKind::slice: {
      const Tensor& a = in(0);
      if (a.rank() != 1 || attr0 < 0 || attr1 <= 0 ||
          attr0 + attr1 > a.shape[0])
        throw ShapeError("slice: range [" + std::to_string(attr0) + "," +
                         std::to_string(attr0 + attr1) + ") out of " +
                         a.shape_str());
      Tensor c({attr1});
      std::copy(a.data.begin() + attr0, a.data.begin() + attr0 + attr1,
                c.data.begin());
      return c;
    }
    case OpKind::embed_lookup: {
      const Tensor& t = in(0);
      if (t.rank() != 2 || attr0 < 0 || attr0 >= t.shape[0])
        throw ShapeError("embed_lookup: row " + std::to_string(attr0) +
                         " out of " + t.shape_str());
      Tensor c({t.shape[1]});
      for (int j = 0; j < t.shape[1]; ++j) c.at(j) = t.at(attr0, j);
      return c;
    }
    case OpKind::sum: {
      real acc = 0;
      for (real x : in(0).data) acc += x;
      return Tensor::scalar(acc);
    }
    case OpKind::scale: {
      Tensor c = in(0);
      for (real& x : c.data) x *= cval;
      return c;
    }
    case OpKind::detach:
      return in(0);
    case OpKind::leaf:
    case OpKind::constant:
      break;
  }
  throw std::invalid_argument("eval: unsupported op");
}

void Graph::check_finite(const Tensor& t, OpKind op, int id,
                         const char* pass) const {
  for (real x : t.data)
    if (!std::isfinite(x))
      throw NumericalError(std::string("non-finite value in ") + pass +
                           " pass at node " + std::to_string(id) + " (" +
                           op_name(op) + ")");
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw std::invalid_argument("backward: foreign Var");
  if (consumed_) throw std::runtime_error("backward: graph already consumed");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + lv.shape_str());
  consumed_ = true;
  Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
  ln.value.ensure_grad();
  ln.value.grad[0] = 1;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.value.grad.empty()) continue;  // not reached from loss
    backprop_node(id);
    if (n.op == OpKind::leaf && n.param != nullptr) {
      n.param->ensure_grad();
      for (std::size_t i = 0; i < n.value.grad.size(); ++i)
        n.param->grad[i] += n.value.grad[i];
    }
  }
}

void Graph::backprop_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& y = n.value;
  const std::vector<real>& dy = n.value.grad;
  auto input = [&](std::size_t i) -> Node& {
    return nodes_[static_cast<std::size_t>(n.inputs.at(i))];
  };
  auto grad_of = [&](std::size_t i) -> Tensor& {
    Node& m = input(i);
    m.value.ensure_grad();
    return m.value;
  };
  switch (n.op) {
    case OpKind::leaf:
    case OpKind::constant:
    case OpKind::detach:
      return;
    case OpKind::matmul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      Tensor& ga = grad_of(0);
      Tensor& gb = grad_of(1);
      if (a.rank() == 2 && b.rank() == 2) {
        int m = a.shape[0], k = a.shape[1], c = b.shape[1];
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            real acc = 0;
            for (int j = 0; j < c; ++j)
              acc += dy[static_cast<std::size_t>(i) * c + j] * b.at(p, j);
            ga.grad[static_cast<std::size_t>(i) * k + p] += acc;
          }
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < c; ++j) {
            real acc = 0;
            for (int i = 0; i < m; ++i)
              acc += a.at(i, p) * dy[static_cast<std::size_t>(i) * c + j];
            gb.grad[static_cast<std::size_t>(p) * c + j] += acc;
          }
      } else if (a.rank() == 2 && b.rank() == 1) {
        int m = a.shape[0], k = a.shape[1];
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            ga.grad[static_cast<std::size_t>(i) * k + p] +=
                dy[static_cast<std::size_t>(i)] * b.at(p);
            gb.grad[static_cast<std::size_t>(p)] +=
                a.at(i, p) * dy[static_cast<std::size_t>(i)];
          }
      } else {  // [k] x [k,n]
        int k = b.shape[0], c = b.shape[1];
        for (int p = 0; p < k; ++p) {
          real acc = 0;
          for (int j = 0; j < c; ++j) {
            acc += dy[static_cast<std::size_t>(j)] * b.at(p, j);
            gb.grad[static_cast<std::size_t>(p) * c + j] +=
                a.at(p) * dy[static_cast<std::size_t>(j)];
          }
          ga.grad[static_cast<std::size_t>(p)] += acc;
        }
      }
      break;
    }
    case OpKind::add: {
      Tensor& ga = grad_of(0);
      Tensor& gb = grad_of(1);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        ga.grad[i] += dy[i];
        gb.grad[i] += dy[i];
      }
      break;
    }
    case OpKind::add_rowvec: {
      Tensor& gm = grad_of(0);
      Tensor& gv = grad_of(1);
      int rows = y.shape[0], cols = y.shape[1];
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) {
          real d = dy[static_cast<std::size_t>(r) * cols + j];
          gm.grad[static_cast<std::size_t>(r) * cols + j] += d;
          gv.grad[static_cast<std::size_t>(j)] += d;
        }
      break;
    }
    case OpKind::mul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      Tensor& ga = grad_of(0);
      Tensor& gb = grad_of(1);
      if (b.size() == 1 && !a.same_shape(b)) {
        real acc = 0;
        for (std::size_t i = 0; i < dy.size(); ++i) {
          ga.grad[i] += dy[i] * b.data[0];
          acc += dy[i] * a.data[i];
        }
        gb.grad[0] += acc;
      } else {
        for (std::size_t i = 0; i < dy.size(); ++i) {
          ga.grad[i] += dy[i] * b.data[i];
          gb.grad[i] += dy[i] * a.data[i];
        }
      }
      break;
    }
    case OpKind::tanh_fn: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < dy.size(); ++i)
        ga.grad[i] += dy[i] * (real(1) - y.data[i] * y.data[i]);
      break;
    }
    case OpKind::sigmoid_fn: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < dy.size(); ++i)
        ga.grad[i] += dy[i] * y.data[i] * (real(1) - y.data[i]);
      break;
    }
    case OpKind::softmax_fn: {
      Tensor& ga = grad_of(0);
      int cols = y.rank() == 2 ? y.shape[1] : y.shape[0];
      int rows = y.rank() == 2 ? y.shape[0] : 1;
      for (int r = 0; r < rows; ++r) {
        std::size_t off = static_cast<std::size_t>(r) * cols;
        real dot = 0;
        for (int j = 0; j < cols; ++j) dot += dy[off + j] * y.data[off + j];
        for (int j = 0; j < cols; ++j)
          ga.grad[off + j] += y.data[off + j] * (dy[off + j] - dot);
      }
      break;
    }
    case OpKind::log_softmax_fn: {
      Tensor& ga = grad_of(0);
      int cols = y.rank() == 2 ? y.shape[1] : y.shape[0];
      int rows = y.rank() == 2 ? y.shape[0] : 1;
      for (int r = 0; r < rows; ++r) {
        std::size_t off = static_cast<std::size_t>(r) * cols;
        real total = 0;
        for (int j = 0; j < cols; ++j) total += dy[off + j];
        for (int j = 0; j < cols; ++j)
          ga.grad[off + j] += dy[off + j] - std::exp(y.data[off + j]) * total;
      }
      break;
    }
    case OpKind::concat: {
      Tensor& ga = grad_of(0);
      Tensor& gb = grad_of(1);
      std::size_t na = ga.data.size();
      for (std::size_t i = 0; i < na; ++i) ga.grad[i] += dy[i];
      for (std::size_t i = 0; i < gb.data.size(); ++i)
        gb.grad[i] += dy[na + i];
      break;
    }
    case OpKind::stack_rows: {
      int d = y.shape[1];
      for (std::size_t r = 0; r < n.inputs.size(); ++r) {
        Tensor& g = grad_of(r);
        for (int j = 0; j < d; ++j)
          g.grad[static_cast<std::size_t>(j)] += dy[r * d + j];
      }
      break;
    }
    case OpKind::slice: {
      Tensor& ga = grad_of(0);
      for (int j = 0; j < n.attr1; ++j)
        ga.grad[static_cast<std::size_t>(n.attr0 + j)] +=
            dy[static_cast<std::size_t>(j)];
      break;
    }
    case OpKind::embed_lookup: {
      Tensor& gt = grad_of(0);
      int d = y.shape[0];
      for (int j = 0; j < d; ++j)
        gt.grad[static_cast<std::size_t>(n.attr0) * d + j] +=
            dy[static_cast<std::size_t>(j)];
      break;
    }
    case OpKind::sum: {
      Tensor& ga = grad_of(0);
      for (real& g : ga.grad) g += dy[0];
      break;
    }
    case OpKind::scale: {
      Tensor& ga = grad_of(0);
      for (std::size_t i = 0; i < dy.size(); ++i) ga.grad[i] += dy[i] * n.cval;
      break;
    }
  }
  for (int in_id : n.inputs) {
    const Node& m = nodes_[static_cast<std::size_t>(in_id)];
    if (!m.value.grad.empty())
      for (real g : m.value.grad)
        if (!std::isfinite(g))
          throw NumericalError("non-finite value in backward pass at node " +
                               std::to_string(in_id) + " (" +
                               op_name(m.op) + ")");
  }
}

namespace {
Graph& same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw std::invalid_argument("op: Vars from different graphs");
  return *a.graph;
}
}  // namespace

Var matmul(Var a, Var b) { return same_graph(a, b).apply(OpKind::matmul, {a.id, b.id}); }
Var add(Var a, Var b) { return same_graph(a, b).apply(OpKind::add, {a.id, b.id}); }
Var add_rowvec(Var m, Var v) { return same_graph(m, v).apply(OpKind::add_rowvec, {m.id, v.id}); }
Var mul(Var a, Var b) { return same_graph(a, b).apply(OpKind::mul, {a.id, b.id}); }
Var tanh(Var a) { return a.graph->apply(OpKind::tanh_fn, {a.id}); }
Var sigmoid(Var a) { return a.graph->apply(OpKind::sigmoid_fn, {a.id}); }
Var softmax(Var a) { return a.graph->apply(OpKind::softmax_fn, {a.id}); }
Var log_softmax(Var a) { return a.graph->apply(OpKind::log_softmax_fn, {a.id}); }
Var concat(Var a, Var b) { return same_graph(a, b).apply(OpKind::concat, {a.id, b.id}); }

Var stack_rows(Graph& g, std::span<const Var> rows) {
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (Var v : rows) {
    if (v.graph != &g) throw std::invalid_argument("stack_rows: foreign Var");
    ids.push_back(v.id);
  }
  return g.apply(OpKind::stack_rows, std::move(ids));
}

Var slice(Var a, int offset, int len) {
  return a.graph->apply(OpKind::slice, {a.id}, offset, len);
}

Var embed_lookup(Var table, int id) {
  return table.graph->apply(OpKind::embed_lookup, {table.id}, id);
}

Var sum(Var a) { return a.graph->apply(OpKind::sum, {a.id}); }
Var scale(Var a, real c) { return a.graph->apply(OpKind::scale, {a.id}, 0, 0, c); }
Var detach(Var a) { return a.graph->apply(OpKind::detach, {a.id}); }

}  // namespace slu
