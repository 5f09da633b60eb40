// Reverse-mode autodiff over dense tensors. Define-by-run: every op computes
// its value eagerly and appends a node to the tape, so tape order is already
// a topological order and backward() is a single reverse sweep.
//
// Contracts the rest of the code relies on:
//  - every op validates shapes and rejects non-finite outputs eagerly
//  - backward() visits each node at most once; leaves created with
//    requires_grad that the loss never touched end up with zero grads
//  - no broadcasting except bias-add along the last axis
//  - results are bit-reproducible for a fixed build, ISA and op sequence,
//    independent of the thread-pool size

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cmlab/kernels.hpp"
#include "cmlab/tensor.hpp"
#include "cmlab/threadpool.hpp"

namespace cmlab {

struct Var {
  int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

template <typename T>
class Graph {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily during backward
    bool requires_grad = false;
    bool needs_grad = false;  // this node or an ancestor requires grad
    std::function<void(Graph&, int32_t)> backward_fn;
    const char* op = "leaf";
  };

  Var leaf(Tensor<T> v, bool requires_grad) {
    if (!kernels::all_finite(v.numel(), v.data.data()))
      throw std::runtime_error("graph: non-finite values in leaf tensor");
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.needs_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.idx).value; }
  const Tensor<T>& grad(Var v) const {
    const Node& n = nodes_.at(v.idx);
    if (n.grad.data.empty())
      throw std::runtime_error("graph: grad not populated (run backward first)");
    return n.grad;
  }
  bool needs_grad(Var v) const { return nodes_.at(v.idx).needs_grad; }
  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Each node's
  // backward runs once, only if the loss actually reached it.
  void backward(Var loss) {
    Node& ln = nodes_.at(loss.idx);
    if (ln.value.numel() != 1)
      throw std::runtime_error("backward: loss must be a scalar, got shape " +
                               shape_str(ln.value.shape));
    ensure_grad(loss.idx);
    ln.grad.data[0] = T(1);
    for (int32_t i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward_fn && !n.grad.data.empty()) n.backward_fn(*this, i);
    }
    // leaves the loss never reached still report a (zero) gradient
    for (auto& n : nodes_)
      if (n.requires_grad && n.grad.data.empty())
        n.grad = Tensor<T>::zeros(n.value.shape);
  }

  // ---- helpers used by op implementations -------------------------------

  Tensor<T>& grad_buf(int32_t idx) {
    ensure_grad(idx);
    return nodes_[idx].grad;
  }

  Var emit(const char* op, Tensor<T> value, bool needs_grad,
           std::function<void(Graph&, int32_t)> backward_fn) {
    if (!kernels::all_finite(value.numel(), value.data.data()))
      throw std::runtime_error(std::string("op '") + op +
                               "': non-finite values in output");
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.op = op;
    if (needs_grad) n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  Node& node(int32_t idx) { return nodes_.at(idx); }

 private:
  void ensure_grad(int32_t idx) {
    Node& n = nodes_[idx];
    if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
  }

  std::vector<Node> nodes_;
};

namespace detail {

[[noreturn]] inline void op_fail(const char* op, const std::string& msg) {
  throw std::runtime_error(std::string("op '") + op + "': " + msg);
}

inline void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) op_fail(op, msg);
}

// gemm with output-row parallelism; bit-identical for any pool size.
template <typename T>
void pgemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, T alpha,
           const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c,
           int64_t ldc) {
  auto& pool = ThreadPool::global();
  if (pool.size() > 1 && m >= 2 * pool.size() && m * n * k >= (1 << 16)) {
    pool.parallel_for(m, [&](int64_t r0, int64_t r1) {
      const T* ap = ta ? a + r0 : a + r0 * lda;
      kernels::gemm<T>(ta, tb, r1 - r0, n, k, alpha, ap, lda, b, ldb, beta,
                       c + r0 * ldc, ldc);
    });
  } else {
    kernels::gemm<T>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

template <typename T>
void pgemm_batched(bool ta, bool tb, int64_t g, int64_t m, int64_t n, int64_t k,
                   T alpha, const T* a, const T* b, T beta, T* c) {
  auto& pool = ThreadPool::global();
  const int64_t sa = m * k, sb = k * n, sc = m * n;
  const int64_t lda = ta ? m : k, ldb = tb ? k : n;
  auto run = [&](int64_t g0, int64_t g1) {
    for (int64_t i = g0; i < g1; ++i)
      kernels::gemm<T>(ta, tb, m, n, k, alpha, a + i * sa, lda, b + i * sb, ldb,
                       beta, c + i * sc, n);
  };
  if (pool.size() > 1 && g >= 2) {
    pool.parallel_for(g, run);
  } else {
    run(0, g);
  }
}

}  // namespace detail

// ---------------------------------------------------------------- matmul

template <typename T>
Var matmul(Graph<T>& g, Var a, Var b, bool ta = false, bool tb = false) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  detail::require(av.rank() == 2 && bv.rank() == 2, "matmul",
                  "expects rank-2 inputs, got " + shape_str(av.shape) + " x " +
                      shape_str(bv.shape));
  const int64_t m = ta ? av.dim(1) : av.dim(0);
  const int64_t ka = ta ? av.dim(0) : av.dim(1);
  const int64_t kb = tb ? bv.dim(1) : bv.dim(0);
  const int64_t n = tb ? bv.dim(0) : bv.dim(1);
  detail::require(ka == kb, "matmul",
                  "inner dimensions disagree: " + shape_str(av.shape) +
                      (ta ? "^T" : "") + " x " + shape_str(bv.shape) +
                      (tb ? "^T" : ""));
  Tensor<T> out({m, n});
  detail::pgemm<T>(ta, tb, m, n, ka, T(1), av.data.data(), av.dim(1),
                   bv.data.data(), bv.dim(1), T(0), out.data.data(), n);
  const bool ng = g.needs_grad(a) || g.needs_grad(b);
  const int64_t k = ka;
  return g.emit("matmul", std::move(out), ng,
                [a, b, ta, tb, m, n, k](Graph<T>& gr, int32_t self) {
    const auto& dy = gr.node(self).grad;
    const auto& avv = gr.value(a);
    const auto& bvv = gr.value(b);
    if (gr.needs_grad(a)) {
      auto& da = gr.grad_buf(a.idx);
      // four transpose cases; see forward for layout conventions
      if (!ta && !tb)
        detail::pgemm<T>(false, true, m, k, n, T(1), dy.data.data(), n,
                         bvv.data.data(), n, T(1), da.data.data(), k);
      else if (!ta && tb)
        detail::pgemm<T>(false, false, m, k, n, T(1), dy.data.data(), n,
                         bvv.data.data(), k, T(1), da.data.data(), k);
      else if (ta && !tb)
        detail::pgemm<T>(false, true, k, m, n, T(1), bvv.data.data(), n,
                         dy.data.data(), n, T(1), da.data.data(), m);
      else
        detail::pgemm<T>(true, true, k, m, n, T(1), bvv.data.data(), k,
                         dy.data.data(), n, T(1), da.data.data(), m);
    }
    if (gr.needs_grad(b)) {
      auto& db = gr.grad_buf(b.idx);
      if (!ta && !tb)
        detail::pgemm<T>(true, false, k, n, m, T(1), avv.data.data(), k,
                         dy.data.data(), n, T(1), db.data.data(), n);
      else if (!ta && tb)
        detail::pgemm<T>(true, false, n, k, m, T(1), dy.data.data(), n,
                         avv.data.data(), k, T(1), db.data.data(), k);
      else if (ta && !tb)
        detail::pgemm<T>(false, false, k, n, m, T(1), avv.data.data(), m,
                         dy.data.data(), n, T(1), db.data.data(), n);
      else
        detail::pgemm<T>(true, true, n, k, m, T(1), dy.data.data(), n,
                         avv.data.data(), m, T(1), db.data.data(), k);
    }
  });
}

// Batched matmul over the leading axis: a [G,m,k] (or [G,k,m] if ta), etc.
template <typename T>
Var bmm(Graph<T>& g, Var a, Var b, bool ta = false, bool tb = false) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  detail::require(av.rank() == 3 && bv.rank() == 3, "bmm",
                  "expects rank-3 inputs");
  detail::require(av.dim(0) == bv.dim(0), "bmm", "batch extents disagree");
  const int64_t gg = av.dim(0);
  const int64_t m = ta ? av.dim(2) : av.dim(1);
  const int64_t ka = ta ? av.dim(1) : av.dim(2);
  const int64_t kb = tb ? bv.dim(2) : bv.dim(1);
  const int64_t n = tb ? bv.dim(1) : bv.dim(2);
  detail::require(ka == kb, "bmm",
                  "inner dimensions disagree: " + shape_str(av.shape) + " x " +
                      shape_str(bv.shape));
  Tensor<T> out({gg, m, n});
  detail::pgemm_batched<T>(ta, tb, gg, m, n, ka, T(1), av.data.data(),
                           bv.data.data(), T(0), out.data.data());
  const bool ng = g.needs_grad(a) || g.needs_grad(b);
  const int64_t k = ka;
  return g.emit("bmm", std::move(out), ng,
                [a, b, ta, tb, gg, m, n, k](Graph<T>& gr, int32_t self) {
    const auto& dy = gr.node(self).grad;
    const auto& avv = gr.value(a);
    const auto& bvv = gr.value(b);
    const int64_t sa = m * k, sb = k * n, sc = m * n;
    auto& pool = ThreadPool::global();
    const bool da_ng = gr.needs_grad(a), db_ng = gr.needs_grad(b);
    T* da = da_ng ? gr.grad_buf(a.idx).data.data() : nullptr;
    T* db = db_ng ? gr.grad_buf(b.idx).data.data() : nullptr;
    auto run = [&](int64_t g0, int64_t g1) {
      for (int64_t i = g0; i < g1; ++i) {
        const T* ai = avv.data.data() + i * sa;
        const T* bi = bvv.data.data() + i * sb;
        const T* dyi = dy.data.data() + i * sc;
        if (da_ng) {
          T* dai = da + i * sa;
          if (!ta && !tb)
            kernels::gemm<T>(false, true, m, k, n, T(1), dyi, n, bi, n, T(1), dai, k);
          else if (!ta && tb)
            kernels::gemm<T>(false, false, m, k, n, T(1), dyi, n, bi, k, T(1), dai, k);
          else if (ta && !tb)
            kernels::gemm<T>(false, true, k, m, n, T(1), bi, n, dyi, n, T(1), dai, m);
          else
            kernels::gemm<T>(true, true, k, m, n, T(1), bi, k, dyi, n, T(1), dai, m);
        }
        if (db_ng) {
          T* dbi = db + i * sb;
          if (!ta && !tb)
            kernels::gemm<T>(true, false, k, n, m, T(1), ai, k, dyi, n, T(1), dbi, n);
          else if (!ta && tb)
            kernels::gemm<T>(true, false, n, k, m, T(1), dyi, n, ai, k, T(1), dbi, k);
          else if (ta && !tb)
            kernels::gemm<T>(false, false, k, n, m, T(1), ai, m, dyi, n, T(1), dbi, n);
          else
            kernels::gemm<T>(true, true, n, k, m, T(1), dyi, n, ai, m, T(1), dbi, k);
        }
      }
    };
    if (pool.size() > 1 && gg >= 2) {
      pool.parallel_for(gg, run);
    } else {
      run(0, gg);
    }
  });
}

// ------------------------------------------------------------- elementwise

// Same-shape add, or bias-add when b is rank-1 matching a's last axis (the
// only broadcast this engine supports).
template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  const bool bias = bv.rank() == 1 && av.rank() >= 1 &&
                    av.shape.back() == bv.dim(0) && av.shape != bv.shape;
  detail::require(bias || av.shape == bv.shape, "add",
                  "shape mismatch " + shape_str(av.shape) + " vs " +
                      shape_str(bv.shape) +
                      " (only last-axis bias broadcast is supported)");
  Tensor<T> out(av.shape);
  if (bias) {
    const int64_t cols = bv.dim(0), rows = av.numel() / cols;
    for (int64_t r = 0; r < rows; ++r)
      kernels::add<T>(cols, av.data.data() + r * cols, bv.data.data(),
                      out.data.data() + r * cols);
  } else {
    kernels::add<T>(av.numel(), av.data.data(), bv.data.data(),
                    out.data.data());
  }
  const bool ng = g.needs_grad(a) || g.needs_grad(b);
  return g.emit("add", std::move(out), ng,
                [a, b, bias](Graph<T>& gr, int32_t self) {
    const auto& dy = gr.node(self).grad;
    if (gr.needs_grad(a)) {
      auto& da = gr.grad_buf(a.idx);
      kernels::axpy<T>(dy.numel(), T(1), dy.data.data(), da.data.data());
    }
    if (gr.needs_grad(b)) {
      auto& db = gr.grad_buf(b.idx);
      if (bias) {
        const int64_t cols = db.numel(), rows = dy.numel() / cols;
        for (int64_t r = 0; r < rows; ++r)
          kernels::axpy<T>(cols, T(1), dy.data.data() + r * cols,
                           db.data.data());
      } else {
        kernels::axpy<T>(dy.numel(), T(1), dy.data.data(), db.data.data());
      }
    }
  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  const auto& av = g.value(a);
  const auto& bv = g.value(b);
  detail::require(av.shape == bv.shape, "mul",
                  "shape mismatch " + shape_str(av.shape) + " vs " +
                      shape_str(bv.shape));
  Tensor<T> out(av.shape);
  kernels::mul<T>(av.numel(), av.data.data(), bv.data.data(), out.data.data());
  const bool ng = g.needs_grad(a) || g.needs_grad(b);
  return g.emit("mul", std::move(out), ng, [a, b](Graph<T>& gr, int32_t self) {
    const auto& dy = gr.node(self).grad;
    const int64_t n = dy.numel();
    if (gr.needs_grad(a)) {
      auto& da = gr.grad_buf(a.idx);
      const auto& bvv = gr.value(b);
      for (int64_t i = 0; i < n; ++i)
        da.data[i] += dy.data[i] * bvv.data[i];
    }
    if (gr.needs_grad(b)) {
      auto& db = gr.grad_buf(b.idx);
      const auto& avv = gr.value(a);
      for (int64_t i = 0; i < n; ++i)
        db.data[i] += dy.data[i] * avv.data[i];
    }
  });
}

// y = c * a for a compile-time-known constant c
template <typename T>
Var scale(Graph<T>& g, Var a, T c) {
  const auto& av = g.value(a);
  Tensor<T> out(av.shape);
  kernels::scale<T>(av.numel(), c, av.data.data(), out.data.data());
  return g.emit("scale", std::move(out), g.needs_grad(a),
                [a, c](Graph<T>& gr, int32_t self) {
    const auto& dy = gr.node(self).grad;
    if (gr.needs_grad(a))
      kernels::axpy<T>(dy.numel(), c, dy.data.data(),
                       gr.grad_buf(a.idx).data.data());
  });
}

// y = a * s where s is a single-element tensor in the graph (learned scalar)
template <typename T>
Var mul_scalar(Graph<T>& g, Var a, Var s) {
  const auto& av = g.value(a);
  const auto& sv = g.value(s);
  detail::require(sv.numel() == 1, "mul_scalar", "s must have one element");
  Tensor<T> out(av.shape);
  kernels::scale<T>(av.numel(), sv.data[0], av.data.data(), out.data.data());
  const bool ng = g.needs_grad(a) || g.needs_grad(s);
  return g.emit("mul_scalar", std::move(out), ng,
                [a, s](Graph<T>& gr, int32_t self) {
    const auto& dy = gr.node(self).grad;
    const T sval = gr.value(s).data[0];
    if (gr.needs_grad(a))
      kernels::axpy<T>(dy.numel(), sval, dy.data.data(),
                       gr.grad_buf(a.idx).data.data());
    if (gr.needs_grad(s))
      gr.grad_buf(s.idx).data[0] +=
          kernels::dot<T>(dy.numel(), dy.data.data(), gr.value(a).data.data());
  });
}

template <typename T>
Var exp_op(Graph<T>& g, Var a) {
  const auto& av = g.value(a);
  Tensor<T> out(av.shape);
  for (int64_t i = 0; i < av.numel(); ++i) out.data[i] = std::exp(av.data[i]);
  return g.emit("exp", std::move(out), g.needs_grad(a),
                [a](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const auto& dy = gr.node(self).grad;
    const auto& y = gr.node(self).value;
    auto& da = gr.grad_buf(a.idx);
    for (int64_t i = 0; i < dy.numel(); ++i)
      da.data[i] += dy.data[i] * y.data[i];
  });
}

// y = min(max(a, lo), hi); gradient is zero at and beyond the bounds
template <typename T>
Var clamp(Graph<T>& g, Var a, T lo, T hi) {
  const auto& av = g.value(a);
  Tensor<T> out(av.shape);
  for (int64_t i = 0; i < av.numel(); ++i)
    out.data[i] = std::min(hi, std::max(lo, av.data[i]));
  return g.emit("clamp", std::move(out), g.needs_grad(a),
                [a, lo, hi](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const auto& dy = gr.node(self).grad;
    const auto& x = gr.value(a);
    auto& da = gr.grad_buf(a.idx);
    for (int64_t i = 0; i < dy.numel(); ++i)
      if (x.data[i] > lo && x.data[i] < hi) da.data[i] += dy.data[i];
  });
}

// --------------------------------------------------------- shape plumbing

namespace detail {

template <typename T>
Tensor<T> permute_copy(const Tensor<T>& in, const std::vector<int>& axes) {
  const size_t r = in.rank();
  Shape out_shape(r);
  for (size_t i = 0; i < r; ++i) out_shape[i] = in.shape[axes[i]];
  std::vector<int64_t> in_strides(r, 1), out_strides(r, 1);
  for (int i = static_cast<int>(r) - 2; i >= 0; --i)
    in_strides[i] = in_strides[i + 1] * in.shape[i + 1];
  for (int i = static_cast<int>(r) - 2; i >= 0; --i)
    out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
  Tensor<T> out(out_shape);
  const int64_t n = in.numel();
  // walk output linearly; compute source index from permuted coordinates
  std::vector<int64_t> src_stride_for_out(r);
  for (size_t i = 0; i < r; ++i) src_stride_for_out[i] = in_strides[axes[i]];
  std::vector<int64_t> coord(r, 0);
  for (int64_t o = 0; o < n; ++o) {
    int64_t src = 0;
    for (size_t i = 0; i < r; ++i) src += coord[i] * src_stride_for_out[i];
    out.data[o] = in.data[src];
    for (int i = static_cast<int>(r) - 1; i >= 0; --i) {
      if (++coord[i] < out_shape[i]) break;
      coord[i] = 0;
    }
  }
  return out;
}

}  // namespace detail

// General axis permutation; transpose(g, a) == permute(g, a, {1, 0}).
template <typename T>
Var permute(Graph<T>& g, Var a, std::vector<int> axes) {
  const auto& av = g.value(a);
  detail::require(axes.size() == av.rank(), "permute",
                  "axes length must equal rank");
  std::vector<bool> seen(axes.size(), false);
  for (int ax : axes) {
    detail::require(ax >= 0 && ax < static_cast<int>(axes.size()) && !seen[ax],
                    "permute", "axes must be a permutation");
    seen[ax] = true;
  }
  Tensor<T> out = detail::permute_copy(av, axes);
  return g.emit("permute", std::move(out), g.needs_grad(a),
                [a, axes](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    std::vector<int> inv(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = static_cast<int>(i);
    Tensor<T> dback = detail::permute_copy(gr.node(self).grad, inv);
    kernels::axpy<T>(dback.numel(), T(1), dback.data.data(),
                     gr.grad_buf(a.idx).data.data());
  });
}

template <typename T>
Var transpose(Graph<T>& g, Var a) {
  return permute(g, a, {1, 0});
}

template <typename T>
Var reshape(Graph<T>& g, Var a, Shape shape) {
  const auto& av = g.value(a);
  detail::require(numel_of(shape) == av.numel(), "reshape",
                  "element count mismatch: " + shape_str(av.shape) + " -> " +
                      shape_str(shape));
  Tensor<T> out(shape, av.data);
  return g.emit("reshape", std::move(out), g.needs_grad(a),
                [a](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const auto& dy = gr.node(self).grad;
    kernels::axpy<T>(dy.numel(), T(1), dy.data.data(),
                     gr.grad_buf(a.idx).data.data());
  });
}

// out[i, :] = a[idx[i], :]; backward scatter-adds rows (repeats accumulate).
template <typename T>
Var gather_rows(Graph<T>& g, Var a, std::vector<int64_t> idx) {
  const auto& av = g.value(a);
  detail::require(av.rank() == 2, "gather_rows", "expects a rank-2 input");
  const int64_t rows = av.dim(0), cols = av.dim(1);
  for (int64_t i : idx)
    detail::require(i >= 0 && i < rows, "gather_rows",
                    "index " + std::to_string(i) + " out of range [0, " +
                        std::to_string(rows) + ")");
  Tensor<T> out({static_cast<int64_t>(idx.size()), cols});
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(av.data.data() + idx[i] * cols, cols,
                out.data.data() + i * cols);
  return g.emit("gather_rows", std::move(out), g.needs_grad(a),
                [a, idx = std::move(idx), cols](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const auto& dy = gr.node(self).grad;
    auto& da = gr.grad_buf(a.idx);
    for (size_t i = 0; i < idx.size(); ++i)
      kernels::axpy<T>(cols, T(1), dy.data.data() + i * cols,
                       da.data.data() + idx[i] * cols);
  });
}

// Token-table lookup is row gathering; kept as its own name for call sites.
template <typename T>
Var embedding_lookup(Graph<T>& g, Var table, std::vector<int64_t> ids) {
  return gather_rows(g, table, std::move(ids));
}

// Concatenate along axis 0; trailing dimensions must agree.
template <typename T>
Var concat0(Graph<T>& g, const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat", "needs at least one input");
  const auto& first = g.value(parts[0]);
  Shape tail(first.shape.begin() + 1, first.shape.end());
  int64_t rows = 0;
  const int64_t row_elems = first.numel() == 0 ? 0 : first.numel() / std::max<int64_t>(first.dim(0), 1);
  for (Var p : parts) {
    const auto& v = g.value(p);
    Shape t(v.shape.begin() + 1, v.shape.end());
    detail::require(t == tail, "concat", "trailing dimensions disagree");
    rows += v.dim(0);
  }
  Shape out_shape;
  out_shape.push_back(rows);
  out_shape.insert(out_shape.end(), tail.begin(), tail.end());
  Tensor<T> out(out_shape);
  int64_t at = 0;
  for (Var p : parts) {
    const auto& v = g.value(p);
    std::copy_n(v.data.data(), v.numel(), out.data.data() + at);
    at += v.numel();
  }
  bool ng = false;
  for (Var p : parts) ng = ng || g.needs_grad(p);
  return g.emit("concat", std::move(out), ng,
                [parts, row_elems](Graph<T>& gr, int32_t self) {
    (void)row_elems;
    const auto& dy = gr.node(self).grad;
    int64_t at = 0;
    for (Var p : parts) {
      const int64_t n = gr.value(p).numel();
      if (gr.needs_grad(p))
        kernels::axpy<T>(n, T(1), dy.data.data() + at,
                         gr.grad_buf(p.idx).data.data());
      at += n;
    }
  });
}

// ------------------------------------------------------------- reductions

template <typename T>
Var sum_all(Graph<T>& g, Var a) {
  const auto& av = g.value(a);
  Tensor<T> out = Tensor<T>::scalar(kernels::reduce_sum<T>(av.numel(), av.data.data()));
  return g.emit("sum", std::move(out), g.needs_grad(a),
                [a](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const T dy = gr.node(self).grad.data[0];
    auto& da = gr.grad_buf(a.idx);
    for (auto& x : da.data) x += dy;
  });
}

// Mean over one axis; output drops that axis.
template <typename T>
Var mean_axis(Graph<T>& g, Var a, int axis) {
  const auto& av = g.value(a);
  detail::require(axis >= 0 && axis < static_cast<int>(av.rank()), "mean",
                  "axis out of range");
  const int64_t extent = av.dim(axis);
  detail::require(extent > 0, "mean", "axis has zero extent");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= av.dim(i);
  for (size_t i = axis + 1; i < av.rank(); ++i) inner *= av.dim(i);
  Shape out_shape;
  for (int i = 0; i < static_cast<int>(av.rank()); ++i)
    if (i != axis) out_shape.push_back(av.dim(i));
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t e = 0; e < extent; ++e)
      kernels::axpy<T>(inner, T(1) / T(extent),
                       av.data.data() + (o * extent + e) * inner,
                       out.data.data() + o * inner);
  return g.emit("mean", std::move(out), g.needs_grad(a),
                [a, outer, extent, inner](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const auto& dy = gr.node(self).grad;
    auto& da = gr.grad_buf(a.idx);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t e = 0; e < extent; ++e)
        kernels::axpy<T>(inner, T(1) / T(extent), dy.data.data() + o * inner,
                         da.data.data() + (o * extent + e) * inner);
  });
}

// ------------------------------------------------------- row-wise nonlinear

// Softmax over the last axis, computed with the max-shift trick.
template <typename T>
Var softmax(Graph<T>& g, Var a) {
  const auto& av = g.value(a);
  detail::require(av.rank() >= 1, "softmax", "needs rank >= 1");
  const int64_t cols = av.shape.back();
  const int64_t rows = av.numel() / cols;
  Tensor<T> out(av.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = av.data.data() + r * cols;
    T* y = out.data.data() + r * cols;
    T mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    T denom = 0;
    for (int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      denom += y[j];
    }
    const T inv = T(1) / denom;
    for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
  }
  return g.emit("softmax", std::move(out), g.needs_grad(a),
                [a, rows, cols](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const auto& dy = gr.node(self).grad;
    const auto& y = gr.node(self).value;
    auto& da = gr.grad_buf(a.idx);
    for (int64_t r = 0; r < rows; ++r) {
      const T* yv = y.data.data() + r * cols;
      const T* dv = dy.data.data() + r * cols;
      T* dx = da.data.data() + r * cols;
      const T s = kernels::dot<T>(cols, yv, dv);
      for (int64_t j = 0; j < cols; ++j) dx[j] += yv[j] * (dv[j] - s);
    }
  });
}

// LayerNorm over the last axis with learned gain/bias.
template <typename T>
Var layernorm(Graph<T>& g, Var a, Var gain, Var bias, T eps = T(1e-5)) {
  const auto& av = g.value(a);
  const auto& gv = g.value(gain);
  const auto& bv = g.value(bias);
  const int64_t cols = av.shape.back();
  detail::require(gv.rank() == 1 && gv.dim(0) == cols, "layernorm",
                  "gain must be rank-1 of the last-axis extent");
  detail::require(bv.rank() == 1 && bv.dim(0) == cols, "layernorm",
                  "bias must be rank-1 of the last-axis extent");
  const int64_t rows = av.numel() / cols;
  Tensor<T> out(av.shape);
  auto xhat = std::make_shared<Tensor<T>>(av.shape);
  auto inv_std = std::make_shared<Tensor<T>>(Shape{rows});
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = av.data.data() + r * cols;
    const T mu = kernels::reduce_sum<T>(cols, x) / T(cols);
    T var = 0;
    for (int64_t j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= T(cols);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std->data[r] = is;
    T* xh = xhat->data.data() + r * cols;
    T* y = out.data.data() + r * cols;
    for (int64_t j = 0; j < cols; ++j) {
      xh[j] = (x[j] - mu) * is;
      y[j] = gv.data[j] * xh[j] + bv.data[j];
    }
  }
  const bool ng = g.needs_grad(a) || g.needs_grad(gain) || g.needs_grad(bias);
  return g.emit("layernorm", std::move(out), ng,
                [a, gain, bias, xhat, inv_std, rows, cols](Graph<T>& gr, int32_t self) {
    const auto& dy = gr.node(self).grad;
    const auto& gv = gr.value(gain);
    const bool nga = gr.needs_grad(a);
    const bool ngg = gr.needs_grad(gain);
    const bool ngb = gr.needs_grad(bias);
    T* da = nga ? gr.grad_buf(a.idx).data.data() : nullptr;
    T* dg = ngg ? gr.grad_buf(gain.idx).data.data() : nullptr;
    T* db = ngb ? gr.grad_buf(bias.idx).data.data() : nullptr;
    for (int64_t r = 0; r < rows; ++r) {
      const T* dv = dy.data.data() + r * cols;
      const T* xh = xhat->data.data() + r * cols;
      if (ngg)
        for (int64_t j = 0; j < cols; ++j) dg[j] += dv[j] * xh[j];
      if (ngb)
        for (int64_t j = 0; j < cols; ++j) db[j] += dv[j];
      if (nga) {
        // dx = is * (dxh - mean(dxh) - xh * mean(dxh * xh))
        T m1 = 0, m2 = 0;
        for (int64_t j = 0; j < cols; ++j) {
          const T dxh = dv[j] * gv.data[j];
          m1 += dxh;
          m2 += dxh * xh[j];
        }
        m1 /= T(cols);
        m2 /= T(cols);
        const T is = inv_std->data[r];
        T* dx = da + r * cols;
        for (int64_t j = 0; j < cols; ++j) {
          const T dxh = dv[j] * gv.data[j];
          dx[j] += is * (dxh - m1 - xh[j] * m2);
        }
      }
    }
  });
}

// GELU, tanh approximation.
template <typename T>
Var gelu(Graph<T>& g, Var a) {
  constexpr T c0 = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c1 = T(0.044715);
  const auto& av = g.value(a);
  Tensor<T> out(av.shape);
  auto th = std::make_shared<Tensor<T>>(av.shape);  // tanh(inner), reused in backward
  for (int64_t i = 0; i < av.numel(); ++i) {
    const T x = av.data[i];
    const T t = std::tanh(c0 * (x + c1 * x * x * x));
    th->data[i] = t;
    out.data[i] = T(0.5) * x * (T(1) + t);
  }
  return g.emit("gelu", std::move(out), g.needs_grad(a),
                [a, th](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const auto& dy = gr.node(self).grad;
    const auto& x = gr.value(a);
    auto& da = gr.grad_buf(a.idx);
    for (int64_t i = 0; i < dy.numel(); ++i) {
      const T xi = x.data[i];
      const T t = th->data[i];
      const T dinner = c0 * (T(1) + T(3) * c1 * xi * xi);
      const T dydx = T(0.5) * (T(1) + t) + T(0.5) * xi * (T(1) - t * t) * dinner;
      da.data[i] += dy.data[i] * dydx;
    }
  });
}

// Rows scaled to unit L2 norm. The norm is padded by a vanishing epsilon so
// an all-zero row maps to an all-zero row (degenerate zero-projection case)
// instead of dividing by zero; for any non-degenerate row the output norm is
// 1 within 1e-12.
template <typename T>
Var l2_normalize(Graph<T>& g, Var a) {
  const auto& av = g.value(a);
  detail::require(av.rank() == 2, "l2_normalize", "expects a rank-2 input");
  const int64_t rows = av.dim(0), cols = av.dim(1);
  Tensor<T> out(av.shape);
  auto inv_norm = std::make_shared<Tensor<T>>(Shape{rows});
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = av.data.data() + r * cols;
    const T nrm = std::sqrt(kernels::dot<T>(cols, x, x) + T(1e-24));
    const T inv = T(1) / nrm;
    inv_norm->data[r] = inv;
    kernels::scale<T>(cols, inv, x, out.data.data() + r * cols);
  }
  return g.emit("l2_normalize", std::move(out), g.needs_grad(a),
                [a, inv_norm, rows, cols](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(a)) return;
    const auto& dy = gr.node(self).grad;
    const auto& y = gr.node(self).value;
    auto& da = gr.grad_buf(a.idx);
    for (int64_t r = 0; r < rows; ++r) {
      const T* yv = y.data.data() + r * cols;
      const T* dv = dy.data.data() + r * cols;
      T* dx = da.data.data() + r * cols;
      const T proj = kernels::dot<T>(cols, yv, dv);
      const T inv = inv_norm->data[r];
      for (int64_t j = 0; j < cols; ++j)
        dx[j] += inv * (dv[j] - yv[j] * proj);
    }
  });
}

// Mean softmax cross-entropy against integer targets, with max-shift.
template <typename T>
Var cross_entropy_with_logits(Graph<T>& g, Var logits,
                              std::vector<int64_t> targets) {
  const auto& lv = g.value(logits);
  detail::require(lv.rank() == 2, "cross_entropy", "logits must be rank-2");
  const int64_t rows = lv.dim(0), cols = lv.dim(1);
  detail::require(static_cast<int64_t>(targets.size()) == rows,
                  "cross_entropy", "one target per row required");
  for (int64_t t : targets)
    detail::require(t >= 0 && t < cols, "cross_entropy",
                    "target out of range");
  auto probs = std::make_shared<Tensor<T>>(lv.shape);
  T total = 0;
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = lv.data.data() + r * cols;
    T* p = probs->data.data() + r * cols;
    T mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    T denom = 0;
    for (int64_t j = 0; j < cols; ++j) {
      p[j] = std::exp(x[j] - mx);
      denom += p[j];
    }
    const T inv = T(1) / denom;
    for (int64_t j = 0; j < cols; ++j) p[j] *= inv;
    total += std::log(denom) + mx - x[targets[r]];
  }
  Tensor<T> out = Tensor<T>::scalar(total / T(rows));
  return g.emit("cross_entropy", std::move(out), g.needs_grad(logits),
                [logits, targets = std::move(targets), probs, rows,
                 cols](Graph<T>& gr, int32_t self) {
    if (!gr.needs_grad(logits)) return;
    const T dy = gr.node(self).grad.data[0] / T(rows);
    auto& dl = gr.grad_buf(logits.idx);
    for (int64_t r = 0; r < rows; ++r) {
      const T* p = probs->data.data() + r * cols;
      T* dx = dl.data.data() + r * cols;
      for (int64_t j = 0; j < cols; ++j) dx[j] += dy * p[j];
      dx[targets[r]] -= dy;
    }
  });
}

}  // namespace cmlab
