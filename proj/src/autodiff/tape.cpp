#include "resq/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <cblas.h>

#include "resq/error.hpp"

namespace resq::ad {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, grad_enabled_, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
  nodes_.push_back(Node{param.value, {}, grad_enabled_, nullptr, grad_enabled_ ? &param : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.id_];
  if (node.grad.empty()) return Tensor(node.value.shape());
  return node.grad;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn, const char* op) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn), op);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn, const char* op) {
#ifndef NDEBUG
  if (!value.all_finite()) throw ContractError(std::string("non-finite value produced by ") + op);
#else
  (void)op;
#endif
  bool needs = false;
  if (grad_enabled_) {
    for (Var in : inputs) {
      if (in.tape_ != this) throw ContractError("operands recorded on different tapes");
      needs = needs || nodes_[in.id_].requires_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_slot(Var v) {
  Node& node = nodes_[v.id_];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward on a variable from another tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(nodes_[loss.id_].value.shape()));
  }
  if (!grad_enabled_) throw ContractError("backward on a tape recorded without gradients");
  for (Node& node : nodes_) node.grad = Tensor();
  grad_slot(loss)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
#ifndef NDEBUG
    if (!node.grad.all_finite()) throw ContractError("non-finite gradient at tape node " + std::to_string(i));
#endif
    if (node.backward) node.backward(*this, node.grad);
    if (node.param != nullptr) {
      Parameter& p = *node.param;
      if (!p.has_grad()) p.zero_grad();
      for (std::size_t k = 0; k < node.grad.size(); ++k) p.grad[k] += node.grad[k];
    }
  }
}

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// out[R,O] += x[R,I] * w[I,O]
void gemm_acc(const Tensor& x, const Tensor& w, Tensor& out) {
  const auto rows = static_cast<blasint>(x.rows()), in = static_cast<blasint>(x.cols()),
             outc = static_cast<blasint>(w.cols());
  if (rows == 0 || in == 0 || outc == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, rows, outc, in, 1.0, x.data().data(), in, w.data().data(),
              outc, 1.0, out.data().data(), outc);
}

// Backward of y = x w: dx += dy w^T, dw += x^T dy.
void gemm_backward(Tape& tape, Var x, Var w, const Tensor& dy) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const auto rows = static_cast<blasint>(xv.rows()), in = static_cast<blasint>(xv.cols()),
             outc = static_cast<blasint>(wv.cols());
  if (rows == 0 || in == 0 || outc == 0) return;
  if (tape.requires_grad(x)) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, rows, in, outc, 1.0, dy.data().data(), outc,
                wv.data().data(), outc, 1.0, tape.grad_slot(x).data().data(), in);
  }
  if (tape.requires_grad(w)) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, in, outc, rows, 1.0, xv.data().data(), in, dy.data().data(),
                outc, 1.0, tape.grad_slot(w).data().data(), outc);
  }
}

template <class F, class DF>
Var unary(Var a, const char* op, F f, DF df) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return a.tape().record(
      std::move(out), {a},
      [a, df](Tape& tape, const Tensor& g) {
        const Tensor& x = a.value();
        Tensor& da = tape.grad_slot(a);
        for (std::size_t i = 0; i < x.size(); ++i) da[i] += g[i] * df(x[i]);
      },
      op);
}

}  // namespace

Var matmul(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank2(xv, "matmul");
  require_rank2(wv, "matmul");
  if (xv.cols() != wv.rows()) {
    throw DimensionError("matmul: " + shape_string(xv.shape()) + " x " + shape_string(wv.shape()));
  }
  Tensor out({xv.rows(), wv.cols()});
  gemm_acc(xv, wv, out);
  return x.tape().record(
      std::move(out), {x, w}, [x, w](Tape& tape, const Tensor& g) { gemm_backward(tape, x, w, g); }, "matmul");
}

Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_rank2(xv, "linear");
  require_rank2(wv, "linear");
  if (xv.cols() != wv.rows() || bv.size() != wv.cols()) {
    throw DimensionError("linear: x " + shape_string(xv.shape()) + ", W " + shape_string(wv.shape()) + ", b " +
                         shape_string(bv.shape()));
  }
  Tensor out({xv.rows(), wv.cols()});
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(r, j) = bv[j];
  }
  gemm_acc(xv, wv, out);
  return x.tape().record(
      std::move(out), {x, w, b},
      [x, w, b](Tape& tape, const Tensor& g) {
        gemm_backward(tape, x, w, g);
        if (tape.requires_grad(b)) {
          Tensor& db = tape.grad_slot(b);
          const std::size_t cols = g.cols();
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t j = 0; j < cols; ++j) db[j] += g[r * cols + j];
          }
        }
      },
      "linear");
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const Tensor& g) {
        for (Var v : {a, b}) {
          if (!tape.requires_grad(v)) continue;
          Tensor& d = tape.grad_slot(v);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const Tensor& g) {
        if (tape.requires_grad(a)) {
          Tensor& d = tape.grad_slot(a);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
        if (tape.requires_grad(b)) {
          Tensor& d = tape.grad_slot(b);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
        }
      },
      "sub");
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& tape, const Tensor& g) {
        if (tape.requires_grad(a)) {
          const Tensor& bv = b.value();
          Tensor& d = tape.grad_slot(a);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
        }
        if (tape.requires_grad(b)) {
          const Tensor& av = a.value();
          Tensor& d = tape.grad_slot(b);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
        }
      },
      "mul");
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  return unary(a, "scale", [c](double x) { return c * x; }, [c](double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, "add_scalar", [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Var square(Var a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value();
  out.reshape(std::move(shape));
  return a.tape().record(
      std::move(out), {a},
      [a](Tape& tape, const Tensor& g) {
        Tensor& d = tape.grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      },
      "reshape");
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var elu(Var a) {
  return unary(
      a, "elu", [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
}

Var elu_derivative(Var a) {
  return unary(
      a, "elu_derivative", [](double x) { return x > 0.0 ? 1.0 : std::exp(x); },
      [](double x) { return x > 0.0 ? 0.0 : std::exp(x); });
}

Var abs(Var a) {
  // Subgradient 0 at the kink.
  return unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sigmoid(Var a) {
  const auto s = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary(a, "sigmoid", s, [s](double x) {
    const double y = s(x);
    return y * (1.0 - y);
  });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

Var activation(Var a, Activation kind) {
  switch (kind) {
    case Activation::relu: return relu(a);
    case Activation::elu: return elu(a);
    case Activation::abs: return abs(a);
    case Activation::sigmoid: return sigmoid(a);
    case Activation::tanh: return tanh(a);
  }
  throw ContractError("unknown activation");
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.tape().record(
      Tensor::scalar(total), {a},
      [a](Tape& tape, const Tensor& g) {
        Tensor& d = tape.grad_slot(a);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0];
      },
      "sum");
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_cols(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "sum_cols");
  Tensor out({av.rows(), 1});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double v : av.row(r)) s += v;
    out[r] = s;
  }
  return a.tape().record(
      std::move(out), {a},
      [a](Tape& tape, const Tensor& g) {
        Tensor& d = tape.grad_slot(a);
        const std::size_t cols = d.cols();
        for (std::size_t r = 0; r < d.rows(); ++r) {
          for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] += g[r];
        }
      },
      "sum_cols");
}

Var gather_cols(Var a, std::span<const int> idx) {
  const Tensor& av = a.value();
  require_rank2(av, "gather_cols");
  if (idx.size() != av.rows()) throw DimensionError("gather_cols: index count does not match rows");
  std::vector<int> index(idx.begin(), idx.end());
  Tensor out({av.rows(), 1});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= av.cols()) {
      throw DimensionError("gather_cols: index " + std::to_string(index[r]) + " out of range");
    }
    out[r] = av(r, static_cast<std::size_t>(index[r]));
  }
  return a.tape().record(
      std::move(out), {a},
      [a, index = std::move(index)](Tape& tape, const Tensor& g) {
        Tensor& d = tape.grad_slot(a);
        for (std::size_t r = 0; r < index.size(); ++r) d(r, static_cast<std::size_t>(index[r])) += g[r];
      },
      "gather_cols");
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  require_rank2(av, "slice_rows");
  if (begin + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of " + shape_string(av.shape()));
  }
  const std::size_t cols = av.cols();
  Tensor out({count, cols});
  std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols), count * cols, out.data().begin());
  return a.tape().record(
      std::move(out), {a},
      [a, begin, cols](Tape& tape, const Tensor& g) {
        Tensor& d = tape.grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) d[begin * cols + i] += g[i];
      },
      "slice_rows");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    require_rank2(p.value(), "concat_rows");
    if (p.value().cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.value().rows();
  }
  Tensor out({rows, cols});
  std::size_t at = 0;
  for (Var p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(
      std::move(out), parts,
      [inputs](Tape& tape, const Tensor& g) {
        std::size_t at = 0;
        for (Var p : inputs) {
          const std::size_t size = p.value().size();
          if (tape.requires_grad(p)) {
            Tensor& d = tape.grad_slot(p);
            for (std::size_t i = 0; i < size; ++i) d[i] += g[at + i];
          }
          at += size;
        }
      },
      "concat_rows");
}

Var row_vecmat(Var q, Var w, std::size_t n) {
  const Tensor& qv = q.value();
  const Tensor& wv = w.value();
  require_rank2(qv, "row_vecmat");
  require_rank2(wv, "row_vecmat");
  if (qv.cols() != n || wv.rows() != qv.rows() || n == 0 || wv.cols() % n != 0) {
    throw DimensionError("row_vecmat: q " + shape_string(qv.shape()) + ", W " + shape_string(wv.shape()));
  }
  const std::size_t rows = qv.rows(), e = wv.cols() / n;
  Tensor out({rows, e});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = wv.data().data() + r * n * e;
    double* o = out.data().data() + r * e;
    for (std::size_t a = 0; a < n; ++a) {
      const double qa = qv(r, a);
      for (std::size_t j = 0; j < e; ++j) o[j] += qa * wr[a * e + j];
    }
  }
  return q.tape().record(
      std::move(out), {q, w},
      [q, w, n, e](Tape& tape, const Tensor& g) {
        const Tensor& qv = q.value();
        const Tensor& wv = w.value();
        const std::size_t rows = qv.rows();
        if (tape.requires_grad(q)) {
          Tensor& dq = tape.grad_slot(q);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* wr = wv.data().data() + r * n * e;
            const double* gr = g.data().data() + r * e;
            for (std::size_t a = 0; a < n; ++a) {
              double acc = 0.0;
              for (std::size_t j = 0; j < e; ++j) acc += gr[j] * wr[a * e + j];
              dq(r, a) += acc;
            }
          }
        }
        if (tape.requires_grad(w)) {
          Tensor& dw = tape.grad_slot(w);
          for (std::size_t r = 0; r < rows; ++r) {
            double* dwr = dw.data().data() + r * n * e;
            const double* gr = g.data().data() + r * e;
            for (std::size_t a = 0; a < n; ++a) {
              const double qa = qv(r, a);
              for (std::size_t j = 0; j < e; ++j) dwr[a * e + j] += qa * gr[j];
            }
          }
        }
      },
      "row_vecmat");
}

Var row_matvec(Var w, Var v, std::size_t n) {
  const Tensor& wv = w.value();
  const Tensor& vv = v.value();
  require_rank2(wv, "row_matvec");
  require_rank2(vv, "row_matvec");
  if (n == 0 || wv.rows() != vv.rows() || wv.cols() != n * vv.cols()) {
    throw DimensionError("row_matvec: W " + shape_string(wv.shape()) + ", v " + shape_string(vv.shape()));
  }
  const std::size_t rows = wv.rows(), e = vv.cols();
  Tensor out({rows, n});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = wv.data().data() + r * n * e;
    const double* vr = vv.data().data() + r * e;
    for (std::size_t a = 0; a < n; ++a) {
      double acc = 0.0;
      for (std::size_t j = 0; j < e; ++j) acc += wr[a * e + j] * vr[j];
      out(r, a) = acc;
    }
  }
  return w.tape().record(
      std::move(out), {w, v},
      [w, v, n, e](Tape& tape, const Tensor& g) {
        const Tensor& wv = w.value();
        const Tensor& vv = v.value();
        const std::size_t rows = wv.rows();
        if (tape.requires_grad(w)) {
          Tensor& dw = tape.grad_slot(w);
          for (std::size_t r = 0; r < rows; ++r) {
            double* dwr = dw.data().data() + r * n * e;
            const double* vr = vv.data().data() + r * e;
            for (std::size_t a = 0; a < n; ++a) {
              const double ga = g(r, a);
              for (std::size_t j = 0; j < e; ++j) dwr[a * e + j] += ga * vr[j];
            }
          }
        }
        if (tape.requires_grad(v)) {
          Tensor& dv = tape.grad_slot(v);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* wr = wv.data().data() + r * n * e;
            double* dvr = dv.data().data() + r * e;
            for (std::size_t a = 0; a < n; ++a) {
              const double ga = g(r, a);
              for (std::size_t j = 0; j < e; ++j) dvr[j] += ga * wr[a * e + j];
            }
          }
        }
      },
      "row_matvec");
}

}  // namespace resq::ad
