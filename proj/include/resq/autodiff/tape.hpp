#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "resq/autodiff/tensor.hpp"

namespace resq::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run record of primitive operations.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order, so backward is a single reverse sweep. A tape built with
/// `grad_enabled == false` stores values only and is used for target and
/// evaluation passes.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that requires grad; its gradient is read back with grad().
  Var variable(Tensor value);
  /// Leaf bound to a Parameter; backward accumulates into `param.grad`.
  Var parameter(Parameter& param);

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  /// Gradient of the last backward() with respect to `v` (zeros if unreached).
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  /// Reverse sweep from a scalar. Parameter grads accumulate across calls.
  void backward(Var loss);

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by primitive implementations.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn, const char* op);
  Tensor& grad_slot(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives. Every op records its result on the tape of its first argument.

Var matmul(Var x, Var w);
/// y = x W + b with x [batch,in], W [in,out], b [out].
Var linear(Var x, Var w, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var square(Var a);
Var reshape(Var a, Shape shape);

Var relu(Var a);
Var elu(Var a);
/// Derivative of ELU as a differentiable function (1 for x>0, exp(x) else).
Var elu_derivative(Var a);
Var abs(Var a);
Var sigmoid(Var a);
Var tanh(Var a);

enum class Activation { relu, elu, abs, sigmoid, tanh };
Var activation(Var a, Activation kind);

Var sum(Var a);
Var mean(Var a);
/// Row sums: [R,C] -> [R,1].
Var sum_cols(Var a);
/// Picks one column per row: [R,C] x idx[R] -> [R,1].
Var gather_cols(Var a, std::span<const int> idx);
/// Rows [begin, begin + count) of a matrix.
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Stacks matrices with equal column counts vertically.
Var concat_rows(std::span<const Var> parts);
/// Per-row vector-matrix product: q [R,n], W [R,n*E] (row-major n x E) -> [R,E].
Var row_vecmat(Var q, Var w, std::size_t n);
/// Per-row matrix-vector product: W [R,n*E], v [R,E] -> [R,n].
Var row_matvec(Var w, Var v, std::size_t n);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator-(Var a) { return neg(a); }

}  // namespace resq::ad
