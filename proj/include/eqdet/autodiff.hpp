#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "eqdet/rng.hpp"
#include "eqdet/tensor.hpp"

namespace eqdet {

class Tape;

// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  int index() const { return idx_; }
  Tape* tape() const { return tape_; }
  const Tensor& val() const;

 private:
  friend class Tape;
  Var(Tape* t, int i) : tape_(t), idx_(i) {}
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

// Define-by-run reverse-mode tape. Creation order is a topological order, so
// backward is a single reverse sweep. A tape is built fresh for every forward
// pass and is single-threaded; independent tapes may run concurrently.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  // Leaf with gradient tracking (parameters, or inputs being differentiated).
  Var leaf(Tensor value) { return push(std::move(value), grad_enabled_); }

  // Constant: participates in forward math, receives no gradient.
  Var constant(Tensor value) { return push(std::move(value), false); }

  const Tensor& value(Var x) const { return node_value(x.idx_); }
  const Tensor& node_value(int i) const { return nodes_[static_cast<size_t>(i)].value; }
  bool requires_grad(Var x) const {
    return nodes_[static_cast<size_t>(x.idx_)].requires_grad;
  }

  size_t size() const { return nodes_.size(); }

  // Reverse accumulation from a scalar loss. Gradients from any previous
  // backward call are discarded first, so repeated calls give identical
  // results (no silent accumulation).
  void backward(Var loss) {
    check_arg(loss.tape_ == this, "backward: loss is not on this tape");
    const Tensor& lv = value(loss);
    check_arg(lv.numel() == 1 && lv.rank() <= 1,
              "backward: loss must be scalar, got shape " + lv.shape_str());
    grads_.assign(nodes_.size(), Tensor{});
    grads_[static_cast<size_t>(loss.idx_)] = Tensor({1}, {1.0});
    for (int i = loss.idx_; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.backward && !grads_[static_cast<size_t>(i)].v.empty())
        n.backward(*this, grads_[static_cast<size_t>(i)]);
    }
    ran_backward_ = true;
  }

  // Gradient of a node; zeros if backward did not reach it.
  Tensor grad(Var x) const {
    check_arg(x.tape_ == this, "grad: var is not on this tape");
    check_arg(ran_backward_, "grad: backward has not been run");
    const Tensor& g = grads_[static_cast<size_t>(x.idx_)];
    if (g.v.empty()) return Tensor::zeros(value(x).shape);
    return g;
  }

  // --- internals used by op implementations ---

  using BackwardFn = std::function<void(Tape&, const Tensor& gout)>;

  Var push(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), requires_grad && grad_enabled_, nullptr});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  void set_backward(Var x, BackwardFn fn) {
    nodes_[static_cast<size_t>(x.idx_)].backward = std::move(fn);
  }

  // Accumulation buffer for node i, allocated lazily.
  Tensor& grad_buf(int i) {
    Tensor& g = grads_[static_cast<size_t>(i)];
    if (g.v.empty()) g = Tensor::zeros(nodes_[static_cast<size_t>(i)].value.shape);
    return g;
  }

 private:
  struct Node {
    Tensor value;
    bool requires_grad;
    BackwardFn backward;
  };

  // deque: node references stay valid while the tape grows
  std::deque<Node> nodes_;
  std::vector<Tensor> grads_;
  bool grad_enabled_;
  bool ran_backward_ = false;
};

inline const Tensor& Var::val() const { return tape_->value(*this); }

namespace detail {

// C += op(A) * op(B), row-major dense. ta: A passed as k x m and used
// transposed; likewise tb for B (n x k).
inline void gemm(const double* A, bool ta, const double* B, bool tb, double* C,
                 int m, int k, int n) {
  if (!ta && !tb) {
    for (int i = 0; i < m; ++i) {
      double* c = C + static_cast<size_t>(i) * n;
      const double* a = A + static_cast<size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const double av = a[p];
        const double* b = B + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  } else if (!ta && tb) {
    for (int i = 0; i < m; ++i) {
      const double* a = A + static_cast<size_t>(i) * k;
      double* c = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* b = B + static_cast<size_t>(j) * k;
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += a[p] * b[p];
        c[j] += s;
      }
    }
  } else if (ta && !tb) {
    for (int p = 0; p < k; ++p) {
      const double* a = A + static_cast<size_t>(p) * m;
      const double* b = B + static_cast<size_t>(p) * n;
      for (int i = 0; i < m; ++i) {
        const double av = a[i];
        double* c = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double* c = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const double* b = B + static_cast<size_t>(j) * k;
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += A[static_cast<size_t>(p) * m + i] * b[p];
        c[j] += s;
      }
    }
  }
}

inline Tape& tape_of(Var a) {
  check_arg(a.valid(), "op: uninitialized Var");
  return *a.tape();
}

inline Tape& tape_of(Var a, Var b) {
  check_arg(a.valid() && b.valid(), "op: uninitialized Var");
  check_arg(a.tape() == b.tape(), "op: operands live on different tapes");
  return *a.tape();
}

// (outer, axis_dim, inner) factorization for slicing along an axis.
inline void axis_strides(const std::vector<int>& shape, int axis, int64_t& outer,
                         int64_t& adim, int64_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
  adim = shape[static_cast<size_t>(axis)];
  inner = 1;
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul
//   (m,k)x(k,n)->(m,n)      (m,k)x(k)->(m)
//   (B,m,k)x(B,k,n)->(B,m,n)
//   (B,m,k)x(k,n)->(B,m,n)  shared right matrix
//   (m,k)x(B,k,n)->(B,m,n)  shared left matrix
// ---------------------------------------------------------------------------
inline Var matmul(Var a, Var b) {
  Tape& T = detail::tape_of(a, b);
  const Tensor& A = T.value(a);
  const Tensor& B = T.value(b);
  const int ra = A.rank(), rb = B.rank();
  const bool ga = T.requires_grad(a), gb = T.requires_grad(b);
  const bool rg = ga || gb;
  const int ia = a.index(), ib = b.index();

  auto bad = [&]() -> void {
    throw std::invalid_argument("matmul: incompatible shapes " + shapes_str(A, B));
  };

  if (ra == 2 && rb == 2) {
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    if (B.dim(0) != k) bad();
    Tensor C = Tensor::zeros({m, n});
    detail::gemm(A.v.data(), false, B.v.data(), false, C.v.data(), m, k, n);
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, ib, ga, gb, m, k, n](Tape& t, const Tensor& g) {
        if (ga)
          detail::gemm(g.v.data(), false, t.node_value(ib).v.data(), true,
                       t.grad_buf(ia).v.data(), m, n, k);
        if (gb)
          detail::gemm(t.node_value(ia).v.data(), true, g.v.data(), false,
                       t.grad_buf(ib).v.data(), k, m, n);
      });
    return out;
  }

  if (ra == 2 && rb == 1) {  // matrix * vector
    const int m = A.dim(0), k = A.dim(1);
    if (B.dim(0) != k) bad();
    Tensor C = Tensor::zeros({m});
    detail::gemm(A.v.data(), false, B.v.data(), false, C.v.data(), m, k, 1);
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, ib, ga, gb, m, k](Tape& t, const Tensor& g) {
        if (ga)
          detail::gemm(g.v.data(), false, t.node_value(ib).v.data(), false,
                       t.grad_buf(ia).v.data(), m, 1, k);
        if (gb)
          detail::gemm(t.node_value(ia).v.data(), true, g.v.data(), false,
                       t.grad_buf(ib).v.data(), k, m, 1);
      });
    return out;
  }

  if (ra == 3 && rb == 3) {  // batched
    const int nb = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(2);
    if (B.dim(0) != nb || B.dim(1) != k) bad();
    Tensor C = Tensor::zeros({nb, m, n});
    const int64_t sa = static_cast<int64_t>(m) * k, sb = static_cast<int64_t>(k) * n,
                  sc = static_cast<int64_t>(m) * n;
    for (int t = 0; t < nb; ++t)
      detail::gemm(A.v.data() + t * sa, false, B.v.data() + t * sb, false,
                   C.v.data() + t * sc, m, k, n);
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, ib, ga, gb, nb, m, k, n, sa, sb, sc](Tape& t,
                                                                    const Tensor& g) {
        for (int q = 0; q < nb; ++q) {
          if (ga)
            detail::gemm(g.v.data() + q * sc, false, t.node_value(ib).v.data() + q * sb,
                         true, t.grad_buf(ia).v.data() + q * sa, m, n, k);
          if (gb)
            detail::gemm(t.node_value(ia).v.data() + q * sa, true, g.v.data() + q * sc,
                         false, t.grad_buf(ib).v.data() + q * sb, k, m, n);
        }
      });
    return out;
  }

  if (ra == 3 && rb == 2) {  // shared right matrix
    const int nb = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(1);
    if (B.dim(0) != k) bad();
    Tensor C = Tensor::zeros({nb, m, n});
    const int64_t sa = static_cast<int64_t>(m) * k, sc = static_cast<int64_t>(m) * n;
    for (int t = 0; t < nb; ++t)
      detail::gemm(A.v.data() + t * sa, false, B.v.data(), false, C.v.data() + t * sc, m,
                   k, n);
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, ib, ga, gb, nb, m, k, n, sa, sc](Tape& t,
                                                                const Tensor& g) {
        for (int q = 0; q < nb; ++q) {
          if (ga)
            detail::gemm(g.v.data() + q * sc, false, t.node_value(ib).v.data(), true,
                         t.grad_buf(ia).v.data() + q * sa, m, n, k);
          if (gb)
            detail::gemm(t.node_value(ia).v.data() + q * sa, true, g.v.data() + q * sc,
                         false, t.grad_buf(ib).v.data(), k, m, n);
        }
      });
    return out;
  }

  if (ra == 2 && rb == 3) {  // shared left matrix
    const int nb = B.dim(0), m = A.dim(0), k = A.dim(1), n = B.dim(2);
    if (B.dim(1) != k) bad();
    Tensor C = Tensor::zeros({nb, m, n});
    const int64_t sb = static_cast<int64_t>(k) * n, sc = static_cast<int64_t>(m) * n;
    for (int t = 0; t < nb; ++t)
      detail::gemm(A.v.data(), false, B.v.data() + t * sb, false, C.v.data() + t * sc, m,
                   k, n);
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, ib, ga, gb, nb, m, k, n, sb, sc](Tape& t,
                                                                const Tensor& g) {
        for (int q = 0; q < nb; ++q) {
          if (ga)
            detail::gemm(g.v.data() + q * sc, false, t.node_value(ib).v.data() + q * sb,
                         true, t.grad_buf(ia).v.data(), m, n, k);
          if (gb)
            detail::gemm(t.node_value(ia).v.data(), true, g.v.data() + q * sc, false,
                         t.grad_buf(ib).v.data() + q * sb, k, m, n);
        }
      });
    return out;
  }

  bad();
  return Var();
}

// Batched matrix-vector product: (B,n,n?) actually (B,m,k)x(B,k)->(B,m).
inline Var bmatvec(Var a, Var b) {
  Tape& T = detail::tape_of(a, b);
  const Tensor& A = T.value(a);
  const Tensor& B = T.value(b);
  check_arg(A.rank() == 3 && B.rank() == 2 && A.dim(0) == B.dim(0) && A.dim(2) == B.dim(1),
            "bmatvec: incompatible shapes " + shapes_str(A, B));
  const int nb = A.dim(0), m = A.dim(1), k = A.dim(2);
  const bool ga = T.requires_grad(a), gb = T.requires_grad(b);
  const bool rg = ga || gb;
  const int ia = a.index(), ib = b.index();
  Tensor C = Tensor::zeros({nb, m});
  const int64_t sa = static_cast<int64_t>(m) * k;
  for (int t = 0; t < nb; ++t)
    detail::gemm(A.v.data() + t * sa, false, B.v.data() + static_cast<int64_t>(t) * k,
                 false, C.v.data() + static_cast<int64_t>(t) * m, m, k, 1);
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, ib, ga, gb, nb, m, k, sa](Tape& t, const Tensor& g) {
      for (int q = 0; q < nb; ++q) {
        const double* gq = g.v.data() + static_cast<int64_t>(q) * m;
        if (ga)
          detail::gemm(gq, false, t.node_value(ib).v.data() + static_cast<int64_t>(q) * k,
                       false, t.grad_buf(ia).v.data() + q * sa, m, 1, k);
        if (gb)
          detail::gemm(t.node_value(ia).v.data() + q * sa, true, gq, false,
                       t.grad_buf(ib).v.data() + static_cast<int64_t>(q) * k, k, m, 1);
      }
    });
  return out;
}

// 2-D transpose, or transpose of the last two axes for rank 3.
inline Var transpose(Var a) {
  Tape& T = detail::tape_of(a);
  const Tensor& A = T.value(a);
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  if (A.rank() == 2) {
    const int m = A.dim(0), n = A.dim(1);
    Tensor C = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) C.at(j, i) = A.at(i, j);
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, m, n](Tape& t, const Tensor& g) {
        Tensor& gi = t.grad_buf(ia);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gi.at(i, j) += g.at(j, i);
      });
    return out;
  }
  if (A.rank() == 3) {
    const int nb = A.dim(0), m = A.dim(1), n = A.dim(2);
    Tensor C = Tensor::zeros({nb, n, m});
    for (int b = 0; b < nb; ++b)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) C.at(b, j, i) = A.at(b, i, j);
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, nb, m, n](Tape& t, const Tensor& g) {
        Tensor& gi = t.grad_buf(ia);
        for (int b = 0; b < nb; ++b)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) gi.at(b, i, j) += g.at(b, j, i);
      });
    return out;
  }
  throw std::invalid_argument("transpose: rank must be 2 or 3, got " + A.shape_str());
}

// add: same shape, or b broadcast as a scalar {1}, or b broadcast as a bias
// over the last axis ((...,n) + (n)).
inline Var add(Var a, Var b) {
  Tape& T = detail::tape_of(a, b);
  const Tensor& A = T.value(a);
  const Tensor& B = T.value(b);
  const bool ga = T.requires_grad(a), gb = T.requires_grad(b);
  const bool rg = ga || gb;
  const int ia = a.index(), ib = b.index();

  if (A.same_shape(B)) {
    Tensor C = A;
    for (int64_t i = 0; i < C.numel(); ++i) C.v[static_cast<size_t>(i)] += B.v[static_cast<size_t>(i)];
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, ib, ga, gb](Tape& t, const Tensor& g) {
        if (ga) {
          Tensor& gi = t.grad_buf(ia);
          for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i];
        }
        if (gb) {
          Tensor& gi = t.grad_buf(ib);
          for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i];
        }
      });
    return out;
  }

  if (B.numel() == 1 && B.rank() <= 1) {  // scalar broadcast
    Tensor C = A;
    const double s = B.v[0];
    for (double& x : C.v) x += s;
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, ib, ga, gb](Tape& t, const Tensor& g) {
        if (ga) {
          Tensor& gi = t.grad_buf(ia);
          for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i];
        }
        if (gb) {
          double s = 0.0;
          for (double x : g.v) s += x;
          t.grad_buf(ib).v[0] += s;
        }
      });
    return out;
  }

  if (B.rank() == 1 && A.rank() >= 2 && A.shape.back() == B.dim(0)) {  // bias
    const int n = B.dim(0);
    const int64_t rows = A.numel() / n;
    Tensor C = A;
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < n; ++j) C.v[static_cast<size_t>(r * n + j)] += B.v[static_cast<size_t>(j)];
    Var out = T.push(std::move(C), rg);
    if (rg)
      T.set_backward(out, [ia, ib, ga, gb, rows, n](Tape& t, const Tensor& g) {
        if (ga) {
          Tensor& gi = t.grad_buf(ia);
          for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i];
        }
        if (gb) {
          Tensor& gi = t.grad_buf(ib);
          for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < n; ++j)
              gi.v[static_cast<size_t>(j)] += g.v[static_cast<size_t>(r * n + j)];
        }
      });
    return out;
  }

  throw std::invalid_argument("add: incompatible shapes " + shapes_str(A, B));
}

inline Var sub(Var a, Var b) {
  Tape& T = detail::tape_of(a, b);
  const Tensor& A = T.value(a);
  const Tensor& B = T.value(b);
  check_arg(A.same_shape(B), "sub: shape mismatch " + shapes_str(A, B));
  const bool ga = T.requires_grad(a), gb = T.requires_grad(b);
  const bool rg = ga || gb;
  const int ia = a.index(), ib = b.index();
  Tensor C = A;
  for (size_t i = 0; i < C.v.size(); ++i) C.v[i] -= B.v[i];
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, ib, ga, gb](Tape& t, const Tensor& g) {
      if (ga) {
        Tensor& gi = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i];
      }
      if (gb) {
        Tensor& gi = t.grad_buf(ib);
        for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] -= g.v[i];
      }
    });
  return out;
}

// Elementwise product (same shape).
inline Var mul(Var a, Var b) {
  Tape& T = detail::tape_of(a, b);
  const Tensor& A = T.value(a);
  const Tensor& B = T.value(b);
  check_arg(A.same_shape(B), "mul: shape mismatch " + shapes_str(A, B));
  const bool ga = T.requires_grad(a), gb = T.requires_grad(b);
  const bool rg = ga || gb;
  const int ia = a.index(), ib = b.index();
  Tensor C = A;
  for (size_t i = 0; i < C.v.size(); ++i) C.v[i] *= B.v[i];
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, ib, ga, gb](Tape& t, const Tensor& g) {
      if (ga) {
        Tensor& gi = t.grad_buf(ia);
        const Tensor& bv = t.node_value(ib);
        for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i] * bv.v[i];
      }
      if (gb) {
        Tensor& gi = t.grad_buf(ib);
        const Tensor& av = t.node_value(ia);
        for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i] * av.v[i];
      }
    });
  return out;
}

// Elementwise alpha*a + beta.
inline Var affine(Var a, double alpha, double beta) {
  Tape& T = detail::tape_of(a);
  Tensor C = T.value(a);
  for (double& x : C.v) x = alpha * x + beta;
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, alpha](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += alpha * g.v[i];
    });
  return out;
}

inline Var scale(Var a, double alpha) { return affine(a, alpha, 0.0); }

inline Var relu(Var a) {
  Tape& T = detail::tape_of(a);
  Tensor C = T.value(a);
  for (double& x : C.v) x = x > 0.0 ? x : 0.0;
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      const Tensor& x = t.node_value(ia);
      // subgradient 0 at the kink
      for (size_t i = 0; i < g.v.size(); ++i)
        if (x.v[i] > 0.0) gi.v[i] += g.v[i];
    });
  return out;
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  Tape& T = detail::tape_of(a);
  Tensor C = T.value(a);
  for (double& x : C.v) x = sigmoid_scalar(x);
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg) {
    const int io = out.index();
    T.set_backward(out, [ia, io](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      const Tensor& y = t.node_value(io);
      for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
    });
  }
  return out;
}

inline Var tanh_op(Var a) {
  Tape& T = detail::tape_of(a);
  Tensor C = T.value(a);
  for (double& x : C.v) x = std::tanh(x);
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg) {
    const int io = out.index();
    T.set_backward(out, [ia, io](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      const Tensor& y = t.node_value(io);
      for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i] * (1.0 - y.v[i] * y.v[i]);
    });
  }
  return out;
}

inline Var reciprocal(Var a) {
  Tape& T = detail::tape_of(a);
  Tensor C = T.value(a);
  for (double& x : C.v) x = 1.0 / x;
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg) {
    const int io = out.index();
    T.set_backward(out, [ia, io](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      const Tensor& y = t.node_value(io);
      for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] -= g.v[i] * y.v[i] * y.v[i];
    });
  }
  return out;
}

// L2 norm of each row: (B,n) -> (B), or (n) -> (1). eps2 is added under the
// square root so the gradient stays finite at the zero vector.
inline Var rows_l2norm(Var a, double eps2 = 1e-60) {
  Tape& T = detail::tape_of(a);
  const Tensor& A = T.value(a);
  check_arg(A.rank() == 1 || A.rank() == 2, "rows_l2norm: rank must be 1 or 2");
  const int nb = A.rank() == 2 ? A.dim(0) : 1;
  const int n = A.rank() == 2 ? A.dim(1) : A.dim(0);
  Tensor C = Tensor::zeros(A.rank() == 2 ? std::vector<int>{nb} : std::vector<int>{1});
  for (int b = 0; b < nb; ++b) {
    double s = eps2;
    const double* row = A.v.data() + static_cast<int64_t>(b) * n;
    for (int j = 0; j < n; ++j) s += row[j] * row[j];
    C.v[static_cast<size_t>(b)] = std::sqrt(s);
  }
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg) {
    const int io = out.index();
    T.set_backward(out, [ia, io, nb, n](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      const Tensor& x = t.node_value(ia);
      const Tensor& y = t.node_value(io);
      for (int b = 0; b < nb; ++b) {
        const double w = g.v[static_cast<size_t>(b)] / y.v[static_cast<size_t>(b)];
        const double* row = x.v.data() + static_cast<int64_t>(b) * n;
        double* grow = gi.v.data() + static_cast<int64_t>(b) * n;
        for (int j = 0; j < n; ++j) grow[j] += w * row[j];
      }
    });
  }
  return out;
}

// Multiply each batch slice by its own scalar: a (B,...) * s (B).
inline Var scale_rows(Var a, Var s) {
  Tape& T = detail::tape_of(a, s);
  const Tensor& A = T.value(a);
  const Tensor& S = T.value(s);
  check_arg(A.rank() >= 2 && S.rank() == 1 && A.dim(0) == S.dim(0),
            "scale_rows: incompatible shapes " + shapes_str(A, S));
  const int nb = A.dim(0);
  const int64_t stride = A.numel() / nb;
  Tensor C = A;
  for (int b = 0; b < nb; ++b) {
    const double f = S.v[static_cast<size_t>(b)];
    double* row = C.v.data() + b * stride;
    for (int64_t j = 0; j < stride; ++j) row[j] *= f;
  }
  const bool ga = T.requires_grad(a), gb = T.requires_grad(s);
  const bool rg = ga || gb;
  const int ia = a.index(), is = s.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, is, ga, gb, nb, stride](Tape& t, const Tensor& g) {
      const Tensor& x = t.node_value(ia);
      const Tensor& sv = t.node_value(is);
      for (int b = 0; b < nb; ++b) {
        const double* grow = g.v.data() + b * stride;
        if (ga) {
          double* gi = t.grad_buf(ia).v.data() + b * stride;
          const double f = sv.v[static_cast<size_t>(b)];
          for (int64_t j = 0; j < stride; ++j) gi[j] += grow[j] * f;
        }
        if (gb) {
          const double* row = x.v.data() + b * stride;
          double acc = 0.0;
          for (int64_t j = 0; j < stride; ++j) acc += grow[j] * row[j];
          t.grad_buf(is).v[static_cast<size_t>(b)] += acc;
        }
      }
    });
  return out;
}

// Multiply a whole tensor by a scalar tensor {1}.
inline Var scale_by(Var a, Var s) {
  Tape& T = detail::tape_of(a, s);
  const Tensor& A = T.value(a);
  const Tensor& S = T.value(s);
  check_arg(S.numel() == 1, "scale_by: scale must be a scalar tensor");
  Tensor C = A;
  const double f = S.v[0];
  for (double& x : C.v) x *= f;
  const bool ga = T.requires_grad(a), gb = T.requires_grad(s);
  const bool rg = ga || gb;
  const int ia = a.index(), is = s.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, is, ga, gb](Tape& t, const Tensor& g) {
      const Tensor& x = t.node_value(ia);
      const Tensor& sv = t.node_value(is);
      if (ga) {
        Tensor& gi = t.grad_buf(ia);
        for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i] * sv.v[0];
      }
      if (gb) {
        double acc = 0.0;
        for (size_t i = 0; i < g.v.size(); ++i) acc += g.v[i] * x.v[i];
        t.grad_buf(is).v[0] += acc;
      }
    });
  return out;
}

inline Var sum_all(Var a) {
  Tape& T = detail::tape_of(a);
  const Tensor& A = T.value(a);
  double s = 0.0;
  for (double x : A.v) s += x;
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(Tensor::scalar(s), rg);
  if (rg)
    T.set_backward(out, [ia](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      for (double& x : gi.v) x += g.v[0];
    });
  return out;
}

inline Var mean_all(Var a) {
  Tape& T = detail::tape_of(a);
  const Tensor& A = T.value(a);
  check_arg(A.numel() > 0, "mean_all: empty tensor");
  double s = 0.0;
  for (double x : A.v) s += x;
  const double inv = 1.0 / static_cast<double>(A.numel());
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(Tensor::scalar(s * inv), rg);
  if (rg)
    T.set_backward(out, [ia, inv](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      for (double& x : gi.v) x += g.v[0] * inv;
    });
  return out;
}

inline Var concat(Var a, Var b, int axis) {
  Tape& T = detail::tape_of(a, b);
  const Tensor& A = T.value(a);
  const Tensor& B = T.value(b);
  check_arg(A.rank() == B.rank() && axis >= 0 && axis < A.rank(),
            "concat: rank/axis mismatch " + shapes_str(A, B));
  for (int i = 0; i < A.rank(); ++i)
    check_arg(i == axis || A.dim(i) == B.dim(i),
              "concat: non-axis dims differ " + shapes_str(A, B));
  std::vector<int> oshape = A.shape;
  oshape[static_cast<size_t>(axis)] += B.dim(axis);
  int64_t outer, adim, inner, bdim;
  detail::axis_strides(A.shape, axis, outer, adim, inner);
  bdim = B.dim(axis);
  Tensor C = Tensor::zeros(oshape);
  const int64_t ablock = adim * inner, bblock = bdim * inner, cblock = ablock + bblock;
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(A.v.data() + o * ablock, ablock, C.v.data() + o * cblock);
    std::copy_n(B.v.data() + o * bblock, bblock, C.v.data() + o * cblock + ablock);
  }
  const bool ga = T.requires_grad(a), gb = T.requires_grad(b);
  const bool rg = ga || gb;
  const int ia = a.index(), ib = b.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, ib, ga, gb, outer, ablock, bblock, cblock](Tape& t,
                                                                        const Tensor& g) {
      for (int64_t o = 0; o < outer; ++o) {
        if (ga) {
          double* gi = t.grad_buf(ia).v.data() + o * ablock;
          const double* gs = g.v.data() + o * cblock;
          for (int64_t j = 0; j < ablock; ++j) gi[j] += gs[j];
        }
        if (gb) {
          double* gi = t.grad_buf(ib).v.data() + o * bblock;
          const double* gs = g.v.data() + o * cblock + ablock;
          for (int64_t j = 0; j < bblock; ++j) gi[j] += gs[j];
        }
      }
    });
  return out;
}

inline Var slice(Var a, int axis, int start, int len) {
  Tape& T = detail::tape_of(a);
  const Tensor& A = T.value(a);
  check_arg(axis >= 0 && axis < A.rank(), "slice: bad axis");
  check_arg(start >= 0 && len >= 1 && start + len <= A.dim(axis),
            "slice: range out of bounds for " + A.shape_str());
  int64_t outer, adim, inner;
  detail::axis_strides(A.shape, axis, outer, adim, inner);
  std::vector<int> oshape = A.shape;
  oshape[static_cast<size_t>(axis)] = len;
  Tensor C = Tensor::zeros(oshape);
  const int64_t iblock = adim * inner, oblock = static_cast<int64_t>(len) * inner;
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(A.v.data() + o * iblock + start * inner, oblock, C.v.data() + o * oblock);
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, outer, iblock, oblock, start, inner](Tape& t,
                                                                  const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      for (int64_t o = 0; o < outer; ++o) {
        double* dst = gi.v.data() + o * iblock + start * inner;
        const double* src = g.v.data() + o * oblock;
        for (int64_t j = 0; j < oblock; ++j) dst[j] += src[j];
      }
    });
  return out;
}

// Take index i along axis 0 and drop the axis: (B,...) -> (...).
inline Var slice0(Var a, int i) {
  Tape& T = detail::tape_of(a);
  const Tensor& A = T.value(a);
  check_arg(A.rank() >= 2 && i >= 0 && i < A.dim(0), "slice0: index out of range");
  const int64_t stride = A.numel() / A.dim(0);
  std::vector<int> oshape(A.shape.begin() + 1, A.shape.end());
  Tensor C = Tensor::zeros(oshape);
  std::copy_n(A.v.data() + i * stride, stride, C.v.data());
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, i, stride](Tape& t, const Tensor& g) {
      double* dst = t.grad_buf(ia).v.data() + i * stride;
      for (int64_t j = 0; j < stride; ++j) dst[j] += g.v[static_cast<size_t>(j)];
    });
  return out;
}

// Stack equally shaped tensors along a new leading axis.
inline Var stack0(const std::vector<Var>& items) {
  check_arg(!items.empty(), "stack0: empty list");
  Tape& T = detail::tape_of(items[0]);
  const Tensor& first = T.value(items[0]);
  const int64_t stride = first.numel();
  std::vector<int> oshape;
  oshape.push_back(static_cast<int>(items.size()));
  oshape.insert(oshape.end(), first.shape.begin(), first.shape.end());
  Tensor C = Tensor::zeros(oshape);
  bool rg = false;
  std::vector<int> idx(items.size());
  for (size_t k = 0; k < items.size(); ++k) {
    const Tensor& tk = T.value(items[k]);
    check_arg(tk.same_shape(first), "stack0: shape mismatch " + shapes_str(first, tk));
    std::copy_n(tk.v.data(), stride, C.v.data() + static_cast<int64_t>(k) * stride);
    rg = rg || T.requires_grad(items[k]);
    idx[k] = items[k].index();
  }
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [idx, stride](Tape& t, const Tensor& g) {
      for (size_t k = 0; k < idx.size(); ++k) {
        double* dst = t.grad_buf(idx[k]).v.data();
        const double* src = g.v.data() + static_cast<int64_t>(k) * stride;
        for (int64_t j = 0; j < stride; ++j) dst[j] += src[j];
      }
    });
  return out;
}

inline Var reshape(Var a, std::vector<int> shape) {
  Tape& T = detail::tape_of(a);
  const Tensor& A = T.value(a);
  check_arg(Tensor::numel_of(shape) == A.numel(),
            "reshape: numel mismatch for " + A.shape_str());
  Tensor C(shape, A.v);
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i];
    });
  return out;
}

// Inverted dropout: keep with probability 1-rate and scale by 1/(1-rate), so
// inference needs no rescaling. Mask is drawn from the given rng.
inline Var dropout(Var a, double rate, Rng& rng) {
  Tape& T = detail::tape_of(a);
  check_arg(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (rate == 0.0) return a;
  const Tensor& A = T.value(a);
  auto mask = std::make_shared<std::vector<double>>(A.v.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor C = A;
  for (size_t i = 0; i < C.v.size(); ++i) {
    const double m = rng.uniform() >= rate ? keep_scale : 0.0;
    (*mask)[i] = m;
    C.v[i] *= m;
  }
  const bool rg = T.requires_grad(a);
  const int ia = a.index();
  Var out = T.push(std::move(C), rg);
  if (rg)
    T.set_backward(out, [ia, mask](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ia);
      for (size_t i = 0; i < g.v.size(); ++i) gi.v[i] += g.v[i] * (*mask)[i];
    });
  return out;
}

// Mean binary cross-entropy against a fixed binary target, with an optional
// weight on the positive-class term. Predictions are clamped to
// [1e-7, 1-1e-7]; coordinates pushed outside that range get zero gradient
// (the clamp is constant there).
inline Var bce_mean(Var pred, const Tensor& target, double pos_weight = 1.0) {
  Tape& T = detail::tape_of(pred);
  const Tensor& P = T.value(pred);
  check_arg(P.same_shape(target), "bce: shape mismatch " + shapes_str(P, target));
  check_arg(P.numel() > 0, "bce: empty prediction");
  check_arg(pos_weight > 0.0, "bce: pos_weight must be > 0");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  double s = 0.0;
  for (size_t i = 0; i < P.v.size(); ++i) {
    const double p = std::min(hi, std::max(lo, P.v[i]));
    const double y = target.v[i];
    s -= pos_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  const double inv = 1.0 / static_cast<double>(P.numel());
  const bool rg = T.requires_grad(pred);
  const int ip = pred.index();
  auto tgt = std::make_shared<Tensor>(target);
  Var out = T.push(Tensor::scalar(s * inv), rg);
  if (rg)
    T.set_backward(out, [ip, tgt, inv, pos_weight](Tape& t, const Tensor& g) {
      Tensor& gi = t.grad_buf(ip);
      const Tensor& p = t.node_value(ip);
      for (size_t i = 0; i < p.v.size(); ++i) {
        const double pi = p.v[i];
        if (pi < lo || pi > hi) continue;
        const double y = tgt->v[i];
        gi.v[i] += g.v[0] * inv * (-pos_weight * y / pi + (1.0 - y) / (1.0 - pi));
      }
    });
  return out;
}

}  // namespace eqdet
