#include "guq/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "guq/error.hpp"

namespace guq::ad {

namespace {

void accumulate(Matrix& target, Matrix&& contribution) {
  if (target.empty()) {
    target = std::move(contribution);
  } else {
    axpy(target, 1.0, contribution);
  }
}

Matrix& ensure(Matrix& target, std::size_t rows, std::size_t cols) {
  if (target.empty()) target = Matrix(rows, cols);
  return target;
}

Tape* tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError("autodiff: operands belong to different tapes");
  }
  return a.tape;
}

}  // namespace

const Matrix& Var::value() const {
  if (tape == nullptr) throw ContractError("autodiff: Var not bound to a tape");
  return tape->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw ContractError("autodiff: Var does not belong to this tape");
  }
}

Var Tape::variable(Matrix value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_ref(const Matrix& value) {
  Node n;
  n.ref = &value;
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value();
}

Matrix Tape::grad(Var v) const {
  check(v);
  const Matrix& val = nodes_[v.id].value();
  if (v.id < adjoints_.size() && !adjoints_[v.id].empty()) return adjoints_[v.id];
  return Matrix(val.rows(), val.cols());
}

Var Tape::record_binary(Op op, Var av, Var bv) {
  check(av);
  check(bv);
  const Matrix& a = nodes_[av.id].value();
  const Matrix& b = nodes_[bv.id].value();
  Node n;
  n.op = op;
  n.a = av.id;
  n.b = bv.id;
  n.requires_grad = nodes_[av.id].requires_grad || nodes_[bv.id].requires_grad;
  switch (op) {
    case Op::MatMul:
      n.owned = guq::matmul(a, b);
      break;
    case Op::Add:
      n.owned = guq::add(a, b);
      break;
    case Op::Sub:
      n.owned = guq::subtract(a, b);
      break;
    case Op::Mul:
      n.owned = guq::hadamard(a, b);
      break;
    case Op::AddRow: {
      if (b.rows() != 1 || b.cols() != a.cols()) {
        throw ShapeError("add_row: row " + b.shape_string() + " does not broadcast over " +
                         a.shape_string());
      }
      n.owned = a;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = n.owned.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) row[c] += b[c];
      }
      break;
    }
    default:
      throw ContractError("autodiff: not a binary op");
  }
  return push(std::move(n));
}

Var Tape::record_unary(Op op, Var av, double p0, double p1) {
  check(av);
  const Matrix& a = nodes_[av.id].value();
  Node n;
  n.op = op;
  n.a = av.id;
  n.p0 = p0;
  n.p1 = p1;
  n.requires_grad = nodes_[av.id].requires_grad;
  auto map = [&](auto fn) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i]);
    return out;
  };
  switch (op) {
    case Op::Transpose:
      n.owned = guq::transpose(a);
      break;
    case Op::Scale:
      n.owned = map([p0](double x) { return p0 * x; });
      break;
    case Op::AddScalar:
      n.owned = map([p0](double x) { return x + p0; });
      break;
    case Op::Relu:
      n.owned = map([](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case Op::Tanh:
      n.owned = map([](double x) { return std::tanh(x); });
      break;
    case Op::Exp:
      n.owned = map([](double x) { return std::exp(x); });
      break;
    case Op::Log:
      n.owned = map([](double x) { return std::log(x); });
      break;
    case Op::Square:
      n.owned = map([](double x) { return x * x; });
      break;
    case Op::Clamp:
      n.owned = map([p0, p1](double x) { return std::clamp(x, p0, p1); });
      break;
    case Op::Sum:
    case Op::Mean: {
      double s = 0.0;
      for (double x : a.values()) s += x;
      if (op == Op::Mean) {
        if (a.empty()) throw ContractError("mean: empty operand");
        s /= static_cast<double>(a.size());
      }
      n.owned = Matrix(1, 1, s);
      break;
    }
    case Op::SumCols: {
      n.owned = Matrix(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (double x : a.row(r)) s += x;
        n.owned[r] = s;
      }
      break;
    }
    default:
      throw ContractError("autodiff: not a unary op");
  }
  return push(std::move(n));
}

Var Tape::record_slice(Var av, std::size_t begin, std::size_t count) {
  check(av);
  const Matrix& a = nodes_[av.id].value();
  if (begin + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + a.shape_string());
  }
  Node n;
  n.op = Op::SliceCols;
  n.a = av.id;
  n.p0 = static_cast<double>(begin);
  n.p1 = static_cast<double>(count);
  n.requires_grad = nodes_[av.id].requires_grad;
  n.owned = Matrix(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) n.owned(r, c) = a(r, begin + c);
  return push(std::move(n));
}

void Tape::backward(Var output) {
  check(output);
  if (!nodes_[output.id].value().is_scalar()) {
    throw ContractError("backward: output must be scalar, got " +
                        nodes_[output.id].value().shape_string());
  }
  backward(output, Matrix(1, 1, 1.0));
}

void Tape::backward(Var output, const Matrix& seed) {
  check(output);
  const Matrix& out = nodes_[output.id].value();
  if (seed.rows() != out.rows() || seed.cols() != out.cols()) {
    throw ShapeError("backward: seed " + seed.shape_string() + " does not match output " +
                     out.shape_string());
  }
  adjoints_.assign(nodes_.size(), Matrix());
  adjoints_[output.id] = seed;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    if (adjoints_[i].empty() || !nodes_[i].requires_grad) continue;
    propagate(i, adjoints_);
  }
}

void Tape::propagate(std::size_t index, std::vector<Matrix>& adj) {
  const Node& n = nodes_[index];
  const Matrix& g = adj[index];
  const bool ga = n.op != Op::Leaf && nodes_[n.a].requires_grad;
  auto elementwise = [&](auto fn) {
    const Matrix& a = nodes_[n.a].value();
    Matrix& da = ensure(adj[n.a], a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) da[i] += fn(i) * g[i];
  };
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul: {
      const Matrix& a = nodes_[n.a].value();
      const Matrix& b = nodes_[n.b].value();
      if (ga) accumulate(adj[n.a], matmul_nt(g, b));
      if (nodes_[n.b].requires_grad) accumulate(adj[n.b], matmul_tn(a, g));
      break;
    }
    case Op::Transpose:
      if (ga) accumulate(adj[n.a], guq::transpose(g));
      break;
    case Op::Add:
      if (ga) accumulate(adj[n.a], Matrix(g));
      if (nodes_[n.b].requires_grad) accumulate(adj[n.b], Matrix(g));
      break;
    case Op::Sub:
      if (ga) accumulate(adj[n.a], Matrix(g));
      if (nodes_[n.b].requires_grad) accumulate(adj[n.b], scaled(g, -1.0));
      break;
    case Op::Mul: {
      const Matrix& a = nodes_[n.a].value();
      const Matrix& b = nodes_[n.b].value();
      if (ga) accumulate(adj[n.a], hadamard(g, b));
      if (nodes_[n.b].requires_grad) accumulate(adj[n.b], hadamard(g, a));
      break;
    }
    case Op::AddRow: {
      if (ga) accumulate(adj[n.a], Matrix(g));
      if (nodes_[n.b].requires_grad) {
        Matrix& db = ensure(adj[n.b], 1, g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto row = g.row(r);
          for (std::size_t c = 0; c < g.cols(); ++c) db[c] += row[c];
        }
      }
      break;
    }
    case Op::Scale:
      if (ga) accumulate(adj[n.a], scaled(g, n.p0));
      break;
    case Op::AddScalar:
      if (ga) accumulate(adj[n.a], Matrix(g));
      break;
    case Op::Relu: {
      if (!ga) break;
      const Matrix& a = nodes_[n.a].value();
      elementwise([&](std::size_t i) { return a[i] > 0.0 ? 1.0 : 0.0; });
      break;
    }
    case Op::Tanh: {
      if (!ga) break;
      const Matrix& t = n.value();
      elementwise([&](std::size_t i) { return 1.0 - t[i] * t[i]; });
      break;
    }
    case Op::Exp: {
      if (!ga) break;
      const Matrix& e = n.value();
      elementwise([&](std::size_t i) { return e[i]; });
      break;
    }
    case Op::Log: {
      if (!ga) break;
      const Matrix& a = nodes_[n.a].value();
      elementwise([&](std::size_t i) { return 1.0 / a[i]; });
      break;
    }
    case Op::Square: {
      if (!ga) break;
      const Matrix& a = nodes_[n.a].value();
      elementwise([&](std::size_t i) { return 2.0 * a[i]; });
      break;
    }
    case Op::Clamp: {
      if (!ga) break;
      const Matrix& a = nodes_[n.a].value();
      elementwise([&](std::size_t i) { return (a[i] > n.p0 && a[i] < n.p1) ? 1.0 : 0.0; });
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      if (!ga) break;
      const Matrix& a = nodes_[n.a].value();
      const double s = n.op == Op::Mean ? g[0] / static_cast<double>(a.size()) : g[0];
      Matrix& da = ensure(adj[n.a], a.rows(), a.cols());
      for (auto& v : da.values()) v += s;
      break;
    }
    case Op::SliceCols: {
      if (!ga) break;
      const Matrix& a = nodes_[n.a].value();
      const auto begin = static_cast<std::size_t>(n.p0);
      Matrix& da = ensure(adj[n.a], a.rows(), a.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) da(r, begin + c) += g(r, c);
      break;
    }
    case Op::SumCols: {
      if (!ga) break;
      const Matrix& a = nodes_[n.a].value();
      Matrix& da = ensure(adj[n.a], a.rows(), a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (auto& v : da.row(r)) v += g[r];
      break;
    }
  }
}

Var matmul(Var a, Var b) { return tape_of(a, b)->record_binary(Tape::Op::MatMul, a, b); }
Var transpose(Var a) { return a.tape->record_unary(Tape::Op::Transpose, a); }
Var operator+(Var a, Var b) { return tape_of(a, b)->record_binary(Tape::Op::Add, a, b); }
Var operator-(Var a, Var b) { return tape_of(a, b)->record_binary(Tape::Op::Sub, a, b); }
Var operator*(Var a, Var b) { return tape_of(a, b)->record_binary(Tape::Op::Mul, a, b); }
Var operator*(double s, Var a) { return a.tape->record_unary(Tape::Op::Scale, a, s); }
Var operator*(Var a, double s) { return s * a; }
Var operator+(Var a, double s) { return a.tape->record_unary(Tape::Op::AddScalar, a, s); }
Var operator-(Var a, double s) { return a + (-s); }
Var add_row(Var x, Var row) { return tape_of(x, row)->record_binary(Tape::Op::AddRow, x, row); }
Var relu(Var a) { return a.tape->record_unary(Tape::Op::Relu, a); }
Var tanh(Var a) { return a.tape->record_unary(Tape::Op::Tanh, a); }
Var exp(Var a) { return a.tape->record_unary(Tape::Op::Exp, a); }
Var log(Var a) { return a.tape->record_unary(Tape::Op::Log, a); }
Var square(Var a) { return a.tape->record_unary(Tape::Op::Square, a); }
Var clamp(Var a, double lo, double hi) {
  return a.tape->record_unary(Tape::Op::Clamp, a, lo, hi);
}
Var sum(Var a) { return a.tape->record_unary(Tape::Op::Sum, a); }
Var mean(Var a) { return a.tape->record_unary(Tape::Op::Mean, a); }
Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  return a.tape->record_slice(a, begin, count);
}
Var sum_cols(Var a) { return a.tape->record_unary(Tape::Op::SumCols, a); }

Matrix gradient(const ScalarFunction& f, const Matrix& at) {
  Tape tape;
  Var x = tape.variable(at);
  Var y = f(x);
  if (!y.value().is_scalar()) {
    throw ContractError("gradient: function output must be scalar, got " +
                        y.value().shape_string());
  }
  tape.backward(y);
  return tape.grad(x);
}

Matrix jacobian(const VectorFunction& f, const Matrix& at) {
  if (at.rows() != 1 && at.cols() != 1) {
    throw ContractError("jacobian: input must be a vector, got " + at.shape_string());
  }
  Tape tape;
  Var x = tape.variable(at);
  Var y = f(x);
  const Matrix& out = y.value();
  if (out.rows() != 1 && out.cols() != 1) {
    throw ContractError("jacobian: output must be a vector, got " + out.shape_string());
  }
  const std::size_t l = out.size();
  const std::size_t d = at.size();
  Matrix jac(l, d);
  for (std::size_t i = 0; i < l; ++i) {
    Matrix seed(out.rows(), out.cols());
    seed[i] = 1.0;
    tape.backward(y, seed);
    const Matrix g = tape.grad(x);
    for (std::size_t j = 0; j < d; ++j) jac(i, j) = g[j];
  }
  return jac;
}

std::vector<Matrix> batch_jacobian(const VectorFunction& f, const Matrix& batch) {
  Tape tape;
  Var x = tape.variable(batch);
  Var y = f(x);
  const Matrix& out = y.value();
  if (out.rows() != batch.rows()) {
    throw ShapeError("batch_jacobian: output rows " + out.shape_string() +
                     " do not match batch " + batch.shape_string());
  }
  const std::size_t B = batch.rows(), d = batch.cols(), l = out.cols();
  std::vector<Matrix> jacs(B, Matrix(l, d));
  for (std::size_t i = 0; i < l; ++i) {
    Matrix seed(B, l);
    for (std::size_t r = 0; r < B; ++r) seed(r, i) = 1.0;
    tape.backward(y, seed);
    const Matrix g = tape.grad(x);
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t j = 0; j < d; ++j) jacs[r](i, j) = g(r, j);
  }
  return jacs;
}

}  // namespace guq::ad
