#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "guq/matrix.hpp"

namespace guq::ad {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape over matrix-valued primitives.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. backward() walks it once in reverse. Nodes that do not
/// depend on any variable leaf carry no adjoint and are skipped.
class Tape {
 public:
  enum class Op {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    AddRow,
    Scale,
    AddScalar,
    Relu,
    Tanh,
    Exp,
    Log,
    Square,
    Clamp,
    Sum,
    Mean,
    SliceCols,
    SumCols,
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Matrix value);
  /// Leaf without gradient, owning its value.
  Var constant(Matrix value);
  /// Leaf without gradient referencing external storage, which must outlive
  /// the tape.
  Var constant_ref(const Matrix& value);

  const Matrix& value(Var v) const;
  /// Adjoint of v after the most recent backward(); zeros if v was not reached.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Seeds a 1×1 output with 1.
  void backward(Var output);
  /// Seeds output with an explicit adjoint of the same shape.
  void backward(Var output, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }

  // Primitive recorders. Prefer the free functions below.
  Var record_binary(Op op, Var a, Var b);
  Var record_unary(Op op, Var a, double p0 = 0.0, double p1 = 0.0);
  Var record_slice(Var a, std::size_t begin, std::size_t count);

 private:
  struct Node {
    Op op = Op::Leaf;
    std::size_t a = 0;
    std::size_t b = 0;
    double p0 = 0.0;
    double p1 = 0.0;
    Matrix owned;
    const Matrix* ref = nullptr;
    bool requires_grad = false;
    const Matrix& value() const { return ref ? *ref : owned; }
  };

  Var push(Node node);
  void check(Var v) const;
  void propagate(std::size_t index, std::vector<Matrix>& adj);

  std::vector<Node> nodes_;
  std::vector<Matrix> adjoints_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product.
Var operator*(Var a, Var b);
Var operator*(double s, Var a);
Var operator*(Var a, double s);
Var operator+(Var a, double s);
Var operator-(Var a, double s);
/// x (n×m) plus a 1×m row added to every row; the only broadcast supported.
Var add_row(Var x, Var row);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// Elementwise clamp; gradient passes only where lo < a < hi.
Var clamp(Var a, double lo, double hi);
/// Scalar (1×1) sum of all entries.
Var sum(Var a);
Var mean(Var a);
/// Columns [begin, begin+count).
Var slice_cols(Var a, std::size_t begin, std::size_t count);
/// n×1 vector of row sums.
Var sum_cols(Var a);

using ScalarFunction = std::function<Var(Var)>;
using VectorFunction = std::function<Var(Var)>;

/// ∂f/∂x at `at`, same shape as `at`. f must return a 1×1 value.
Matrix gradient(const ScalarFunction& f, const Matrix& at);

/// l×d Jacobian of f at a d-vector (1×d or d×1); one backward pass per output.
Matrix jacobian(const VectorFunction& f, const Matrix& at);

/// Row-wise Jacobians for a map that acts independently on each row of a
/// batch: f takes B×d and returns B×l. Returns B matrices of shape l×d.
/// Row coupling inside f makes the result meaningless.
std::vector<Matrix> batch_jacobian(const VectorFunction& f, const Matrix& batch);

}  // namespace guq::ad
