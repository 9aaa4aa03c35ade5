#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgnn/errors.hpp"
#include "cgnn/tensor.hpp"

namespace cgnn {

enum class OpKind : std::uint8_t {
  Leaf,
  Matmul,
  Add,
  Hadamard,
  Scale,
  Concat,
  Slice,
  Sigmoid,
  Tanh,
  Softmax,
  Log,
  Sum,
  Mean,
  Clamp,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Hadamard: return "hadamard";
    case OpKind::Scale: return "scale";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Softmax: return "softmax";
    case OpKind::Log: return "log";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Clamp: return "clamp";
  }
  return "?";
}

// Extra attributes for primitives that need them (scale factor, slice
// bounds, clamp range). Plain aggregate; unused fields are ignored.
struct OpAttrs {
  double scale = 1.0;
  std::int64_t begin = 0;
  std::int64_t end = 0;
  double lo = 0.0;
  double hi = 0.0;
};

template <class Real>
using GradientMap = std::map<std::string, Tensor<Real>>;

namespace detail {

template <class Real>
Real sigmoid_value(Real x) {
  if (x >= Real(0)) {
    const Real z = std::exp(-x);
    return Real(1) / (Real(1) + z);
  }
  const Real z = std::exp(x);
  return z / (Real(1) + z);
}

}  // namespace detail

// Evaluates one primitive. Shared by Tape::apply and Tape::replay so a
// replayed forward pass runs the exact same kernels.
template <class Real>
Tensor<Real> eval_primitive(OpKind kind, const std::vector<const Tensor<Real>*>& in,
                            const OpAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) {
      throw ContractError(std::string(op_name(kind)) + " expects " + std::to_string(n) +
                          " operands, got " + std::to_string(in.size()));
    }
  };
  auto shape_fail = [&](const Tensor<Real>& a, const Tensor<Real>& b) {
    return ShapeError(std::string(op_name(kind)) + ": incompatible shapes " +
                      shape_str(a.shape()) + " and " + shape_str(b.shape()));
  };

  switch (kind) {
    case OpKind::Leaf:
      throw ContractError("leaf is not an applicable primitive");

    case OpKind::Matmul: {
      arity(2);
      const Tensor<Real>& a = *in[0];
      const Tensor<Real>& b = *in[1];
      if (a.rank() != 2) throw shape_fail(a, b);
      const std::int64_t m = a.dim(0), k = a.dim(1);
      if (b.rank() == 1) {
        if (b.dim(0) != k) throw shape_fail(a, b);
        Tensor<Real> out(Shape{m});
        for (std::int64_t i = 0; i < m; ++i) {
          Real acc = 0;
          for (std::int64_t j = 0; j < k; ++j) acc += a.at(i, j) * b[j];
          out[i] = acc;
        }
        return out;
      }
      if (b.rank() == 2) {
        if (b.dim(0) != k) throw shape_fail(a, b);
        const std::int64_t n = b.dim(1);
        Tensor<Real> out(Shape{m, n});
        for (std::int64_t i = 0; i < m; ++i) {
          for (std::int64_t j = 0; j < k; ++j) {
            const Real aij = a.at(i, j);
            for (std::int64_t c = 0; c < n; ++c) out.at(i, c) += aij * b.at(j, c);
          }
        }
        return out;
      }
      throw shape_fail(a, b);
    }

    case OpKind::Add: {
      arity(2);
      const Tensor<Real>& a = *in[0];
      const Tensor<Real>& b = *in[1];
      if (!a.same_shape(b)) throw shape_fail(a, b);
      Tensor<Real> out(a.shape());
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
      return out;
    }

    case OpKind::Hadamard: {
      arity(2);
      const Tensor<Real>& a = *in[0];
      const Tensor<Real>& b = *in[1];
      if (!a.same_shape(b)) throw shape_fail(a, b);
      Tensor<Real> out(a.shape());
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
      return out;
    }

    case OpKind::Scale: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      Tensor<Real> out(a.shape());
      const Real s = static_cast<Real>(attrs.scale);
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = s * a[i];
      return out;
    }

    case OpKind::Concat: {
      if (in.empty()) throw ContractError("concat expects at least one operand");
      std::int64_t total = 0;
      for (const auto* t : in) {
        if (t->rank() != 1) {
          throw ShapeError("concat supports rank-1 operands, got " + shape_str(t->shape()));
        }
        total += t->numel();
      }
      Tensor<Real> out(Shape{total});
      std::int64_t off = 0;
      for (const auto* t : in) {
        for (std::int64_t i = 0; i < t->numel(); ++i) out[off + i] = (*t)[i];
        off += t->numel();
      }
      return out;
    }

    case OpKind::Slice: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      if (a.rank() != 1) throw ShapeError("slice supports rank-1 operands, got " + shape_str(a.shape()));
      if (attrs.begin < 0 || attrs.end > a.numel() || attrs.begin >= attrs.end) {
        throw ShapeError("slice [" + std::to_string(attrs.begin) + "," + std::to_string(attrs.end) +
                         ") out of range for " + shape_str(a.shape()));
      }
      Tensor<Real> out(Shape{attrs.end - attrs.begin});
      for (std::int64_t i = attrs.begin; i < attrs.end; ++i) out[i - attrs.begin] = a[i];
      return out;
    }

    case OpKind::Sigmoid: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      Tensor<Real> out(a.shape());
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = detail::sigmoid_value(a[i]);
      return out;
    }

    case OpKind::Tanh: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      Tensor<Real> out(a.shape());
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = std::tanh(a[i]);
      return out;
    }

    case OpKind::Softmax: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      if (a.rank() != 1) throw ShapeError("softmax supports rank-1 operands, got " + shape_str(a.shape()));
      Tensor<Real> out(a.shape());
      Real mx = a[0];
      for (std::int64_t i = 1; i < a.numel(); ++i) mx = std::max(mx, a[i]);
      Real denom = 0;
      for (std::int64_t i = 0; i < a.numel(); ++i) {
        out[i] = std::exp(a[i] - mx);
        denom += out[i];
      }
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] /= denom;
      return out;
    }

    case OpKind::Log: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      Tensor<Real> out(a.shape());
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = std::log(a[i]);
      return out;
    }

    case OpKind::Sum: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      Real acc = 0;
      for (std::int64_t i = 0; i < a.numel(); ++i) acc += a[i];
      Tensor<Real> out(Shape{1});
      out[0] = acc;
      return out;
    }

    case OpKind::Mean: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      Real acc = 0;
      for (std::int64_t i = 0; i < a.numel(); ++i) acc += a[i];
      Tensor<Real> out(Shape{1});
      out[0] = acc / static_cast<Real>(a.numel());
      return out;
    }

    case OpKind::Clamp: {
      arity(1);
      const Tensor<Real>& a = *in[0];
      if (!(attrs.lo < attrs.hi)) throw ContractError("clamp requires lo < hi");
      Tensor<Real> out(a.shape());
      const Real lo = static_cast<Real>(attrs.lo);
      const Real hi = static_cast<Real>(attrs.hi);
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = std::min(hi, std::max(lo, a[i]));
      return out;
    }
  }
  throw ContractError("unknown primitive kind");
}

// Records primitive applications for reverse-mode differentiation.
//
// Node values double as the forward cache: every op stores its output, and
// backward rules read operand/output values straight off the tape. An op is
// still stored when no operand requires gradients (the value is needed and
// the tape stays replayable) but backward skips it.
//
// A tape and its tensors form a single-owner unit: no internal locking,
// no shared mutable state between independent tapes.
template <class Real>
class Tape {
 public:
  using Id = std::int32_t;

  Id leaf(Tensor<Real> value, std::string name = {}) {
    const bool grad = value.requires_grad;
    if (grad && name.empty()) {
      throw ContractError("a requires_grad leaf must be named so its gradient is addressable");
    }
    value.ensure_finite("leaf");
    return push(Node{OpKind::Leaf, {}, std::move(value), grad, OpAttrs{}, std::move(name)});
  }

  Id constant(Tensor<Real> value) {
    value.requires_grad = false;
    return leaf(std::move(value));
  }

  Id constant_scalar(Real v) { return constant(Tensor<Real>::scalar(v)); }

  Id zeros(Shape shape) { return constant(Tensor<Real>::zeros(std::move(shape))); }

  // Generic primitive application; the named members below are wrappers.
  Id apply(OpKind kind, const std::vector<Id>& args, const OpAttrs& attrs = {}) {
    std::vector<const Tensor<Real>*> in;
    in.reserve(args.size());
    bool grad = false;
    for (Id a : args) {
      in.push_back(&node(a).value);
      grad = grad || node(a).needs_grad;
    }
    Tensor<Real> out = eval_primitive(kind, in, attrs);
    out.ensure_finite(op_name(kind));
    return push(Node{kind, args, std::move(out), grad, attrs, {}});
  }

  Id matmul(Id a, Id b) { return apply(OpKind::Matmul, {a, b}); }
  Id add(Id a, Id b) { return apply(OpKind::Add, {a, b}); }
  Id hadamard(Id a, Id b) { return apply(OpKind::Hadamard, {a, b}); }
  Id scale(Id a, double s) {
    OpAttrs at;
    at.scale = s;
    return apply(OpKind::Scale, {a}, at);
  }
  Id concat(const std::vector<Id>& parts) { return apply(OpKind::Concat, parts); }
  Id slice(Id a, std::int64_t begin, std::int64_t end) {
    OpAttrs at;
    at.begin = begin;
    at.end = end;
    return apply(OpKind::Slice, {a}, at);
  }
  Id sigmoid(Id a) { return apply(OpKind::Sigmoid, {a}); }
  Id tanh(Id a) { return apply(OpKind::Tanh, {a}); }
  Id softmax(Id a) { return apply(OpKind::Softmax, {a}); }
  Id log(Id a) { return apply(OpKind::Log, {a}); }
  Id sum(Id a) { return apply(OpKind::Sum, {a}); }
  Id mean(Id a) { return apply(OpKind::Mean, {a}); }
  Id clamp(Id a, double lo, double hi) {
    OpAttrs at;
    at.lo = lo;
    at.hi = hi;
    return apply(OpKind::Clamp, {a}, at);
  }

  const Tensor<Real>& value(Id id) const { return node(id).value; }
  bool requires_grad(Id id) const { return node(id).needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Recomputes every non-leaf value from the leaves with the same kernels.
  // Returns the recomputed values, index-aligned with node ids.
  std::vector<Tensor<Real>> replay() const {
    std::vector<Tensor<Real>> out(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.kind == OpKind::Leaf) {
        out[i] = n.value;
        continue;
      }
      std::vector<const Tensor<Real>*> in;
      in.reserve(n.args.size());
      for (Id a : n.args) in.push_back(&out[static_cast<std::size_t>(a)]);
      out[i] = eval_primitive(n.kind, in, n.attrs);
    }
    return out;
  }

  // Reverse sweep from a scalar loss. Every named requires_grad leaf gets an
  // entry; leaves unreachable from the loss get zero gradients.
  GradientMap<Real> backward(Id loss) const {
    const Node& ln = node(loss);
    if (ln.value.numel() != 1) {
      throw ContractError("backpropagate requires a scalar loss, got shape " +
                          shape_str(ln.value.shape()));
    }
    std::vector<Tensor<Real>> adj(nodes_.size());
    std::vector<bool> touched(nodes_.size(), false);
    auto accumulate = [&](Id id, const Tensor<Real>& g) {
      auto i = static_cast<std::size_t>(id);
      if (!touched[i]) {
        adj[i] = g;
        touched[i] = true;
        return;
      }
      for (std::int64_t j = 0; j < g.numel(); ++j) adj[i][j] += g[j];
    };

    if (ln.needs_grad) {
      adj[static_cast<std::size_t>(loss)] = Tensor<Real>::scalar(Real(1));
      touched[static_cast<std::size_t>(loss)] = true;
    }

    for (Id id = loss; id >= 0; --id) {
      const auto i = static_cast<std::size_t>(id);
      const Node& n = nodes_[i];
      if (!n.needs_grad || !touched[i] || n.kind == OpKind::Leaf) continue;
      backward_one(n, adj[i], accumulate);
    }

    GradientMap<Real> grads;
    for (const Node& n : nodes_) {
      if (n.kind != OpKind::Leaf || !n.needs_grad || n.name.empty()) continue;
      const auto i = static_cast<std::size_t>(&n - nodes_.data());
      if (touched[i]) {
        Tensor<Real> g = adj[i];
        g.ensure_finite("gradient");
        grads[n.name] = std::move(g);
      } else {
        grads[n.name] = Tensor<Real>::zeros(n.value.shape());
      }
    }
    return grads;
  }

 private:
  struct Node {
    OpKind kind;
    std::vector<Id> args;
    Tensor<Real> value;
    bool needs_grad;
    OpAttrs attrs;
    std::string name;
  };

  const Node& node(Id id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw ContractError("tape id out of range");
    }
    return nodes_[static_cast<std::size_t>(id)];
  }

  Id push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  template <class Accum>
  void backward_one(const Node& n, const Tensor<Real>& g, Accum&& accumulate) const {
    auto arg_value = [&](std::size_t i) -> const Tensor<Real>& { return node(n.args[i]).value; };
    auto arg_needs = [&](std::size_t i) { return node(n.args[i]).needs_grad; };

    switch (n.kind) {
      case OpKind::Leaf:
        return;

      case OpKind::Matmul: {
        const Tensor<Real>& a = arg_value(0);
        const Tensor<Real>& b = arg_value(1);
        const std::int64_t m = a.dim(0), k = a.dim(1);
        if (b.rank() == 1) {
          if (arg_needs(0)) {
            Tensor<Real> da(a.shape());
            for (std::int64_t i = 0; i < m; ++i)
              for (std::int64_t j = 0; j < k; ++j) da.at(i, j) = g[i] * b[j];
            accumulate(n.args[0], da);
          }
          if (arg_needs(1)) {
            Tensor<Real> db(b.shape());
            for (std::int64_t j = 0; j < k; ++j) {
              Real acc = 0;
              for (std::int64_t i = 0; i < m; ++i) acc += a.at(i, j) * g[i];
              db[j] = acc;
            }
            accumulate(n.args[1], db);
          }
        } else {
          const std::int64_t c = b.dim(1);
          if (arg_needs(0)) {
            Tensor<Real> da(a.shape());
            for (std::int64_t i = 0; i < m; ++i)
              for (std::int64_t j = 0; j < k; ++j) {
                Real acc = 0;
                for (std::int64_t t = 0; t < c; ++t) acc += g[i * c + t] * b.at(j, t);
                da.at(i, j) = acc;
              }
            accumulate(n.args[0], da);
          }
          if (arg_needs(1)) {
            Tensor<Real> db(b.shape());
            for (std::int64_t j = 0; j < k; ++j)
              for (std::int64_t t = 0; t < c; ++t) {
                Real acc = 0;
                for (std::int64_t i = 0; i < m; ++i) acc += a.at(i, j) * g[i * c + t];
                db.at(j, t) = acc;
              }
            accumulate(n.args[1], db);
          }
        }
        return;
      }

      case OpKind::Add: {
        if (arg_needs(0)) accumulate(n.args[0], g);
        if (arg_needs(1)) accumulate(n.args[1], g);
        return;
      }

      case OpKind::Hadamard: {
        const Tensor<Real>& a = arg_value(0);
        const Tensor<Real>& b = arg_value(1);
        if (arg_needs(0)) {
          Tensor<Real> da(a.shape());
          for (std::int64_t i = 0; i < a.numel(); ++i) da[i] = g[i] * b[i];
          accumulate(n.args[0], da);
        }
        if (arg_needs(1)) {
          Tensor<Real> db(b.shape());
          for (std::int64_t i = 0; i < b.numel(); ++i) db[i] = g[i] * a[i];
          accumulate(n.args[1], db);
        }
        return;
      }

      case OpKind::Scale: {
        if (!arg_needs(0)) return;
        Tensor<Real> da(arg_value(0).shape());
        const Real s = static_cast<Real>(n.attrs.scale);
        for (std::int64_t i = 0; i < da.numel(); ++i) da[i] = s * g[i];
        accumulate(n.args[0], da);
        return;
      }

      case OpKind::Concat: {
        std::int64_t off = 0;
        for (std::size_t p = 0; p < n.args.size(); ++p) {
          const Tensor<Real>& a = arg_value(p);
          if (arg_needs(p)) {
            Tensor<Real> da(a.shape());
            for (std::int64_t i = 0; i < a.numel(); ++i) da[i] = g[off + i];
            accumulate(n.args[p], da);
          }
          off += a.numel();
        }
        return;
      }

      case OpKind::Slice: {
        if (!arg_needs(0)) return;
        Tensor<Real> da(arg_value(0).shape());
        for (std::int64_t i = n.attrs.begin; i < n.attrs.end; ++i) da[i] = g[i - n.attrs.begin];
        accumulate(n.args[0], da);
        return;
      }

      case OpKind::Sigmoid: {
        if (!arg_needs(0)) return;
        const Tensor<Real>& y = n.value;
        Tensor<Real> da(y.shape());
        for (std::int64_t i = 0; i < y.numel(); ++i) da[i] = g[i] * y[i] * (Real(1) - y[i]);
        accumulate(n.args[0], da);
        return;
      }

      case OpKind::Tanh: {
        if (!arg_needs(0)) return;
        const Tensor<Real>& y = n.value;
        Tensor<Real> da(y.shape());
        for (std::int64_t i = 0; i < y.numel(); ++i) da[i] = g[i] * (Real(1) - y[i] * y[i]);
        accumulate(n.args[0], da);
        return;
      }

      case OpKind::Softmax: {
        if (!arg_needs(0)) return;
        const Tensor<Real>& y = n.value;
        Real dot = 0;
        for (std::int64_t i = 0; i < y.numel(); ++i) dot += g[i] * y[i];
        Tensor<Real> da(y.shape());
        for (std::int64_t i = 0; i < y.numel(); ++i) da[i] = y[i] * (g[i] - dot);
        accumulate(n.args[0], da);
        return;
      }

      case OpKind::Log: {
        if (!arg_needs(0)) return;
        const Tensor<Real>& a = arg_value(0);
        Tensor<Real> da(a.shape());
        for (std::int64_t i = 0; i < a.numel(); ++i) da[i] = g[i] / a[i];
        accumulate(n.args[0], da);
        return;
      }

      case OpKind::Sum: {
        if (!arg_needs(0)) return;
        Tensor<Real> da(arg_value(0).shape());
        for (std::int64_t i = 0; i < da.numel(); ++i) da[i] = g[0];
        accumulate(n.args[0], da);
        return;
      }

      case OpKind::Mean: {
        if (!arg_needs(0)) return;
        Tensor<Real> da(arg_value(0).shape());
        const Real s = g[0] / static_cast<Real>(da.numel());
        for (std::int64_t i = 0; i < da.numel(); ++i) da[i] = s;
        accumulate(n.args[0], da);
        return;
      }

      case OpKind::Clamp: {
        if (!arg_needs(0)) return;
        const Tensor<Real>& a = arg_value(0);
        const Real lo = static_cast<Real>(n.attrs.lo);
        const Real hi = static_cast<Real>(n.attrs.hi);
        Tensor<Real> da(a.shape());
        for (std::int64_t i = 0; i < a.numel(); ++i) {
          da[i] = (a[i] >= lo && a[i] <= hi) ? g[i] : Real(0);
        }
        accumulate(n.args[0], da);
        return;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace cgnn
