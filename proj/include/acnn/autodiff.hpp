// Copyright 2026 The ACNN Triage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "acnn/error.hpp"
#include "acnn/hash.hpp"
#include "acnn/tensor.hpp"

// Reverse-mode automatic differentiation over a recorded tape.
//
// A Tape owns the forward values of every intermediate result and a backward
// closure per recorded operation. Leaves either borrow a caller-owned Tensor
// (parameters) or own a copy (constants). Gradients of leaves accumulate into
// caller-provided buffers, so several tapes (one per document) can add into
// the same gradient store one after another.
//
// All reductions run in a fixed left-to-right order; identical inputs give
// bitwise-identical values and gradients.

namespace acnn {

class Tape;

// Handle to a node on a tape. A default-constructed Var is detached.
class Var {
 public:
  Var() = default;

  bool attached() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  inline const Tensor& value() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // When track_branches is set, non-smooth operations (relu gates, max-pool
  // argmax, probability clamps) fold their branch decisions into
  // branch_signature(). The gradient checker uses this to detect kinks.
  explicit Tape(bool track_branches = false)
      : track_branches_(track_branches) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Tensor value) {
    Node node;
    node.owned = std::move(value);
    return Push(std::move(node));
  }

  // Leaf borrowing a caller-owned tensor without gradient tracking. The
  // tensor must outlive the tape.
  Var Borrow(const Tensor& value) {
    Node node;
    node.borrowed = &value;
    return Push(std::move(node));
  }

  // Leaf whose gradient accumulates into the tensor's own grad buffer.
  Var Watch(Tensor& tensor) { return Parameter(tensor, tensor.EnsureGrad()); }

  // Leaf borrowing value; gradient accumulates into grad_sink.
  Var Parameter(const Tensor& value, std::span<double> grad_sink) {
    Require(grad_sink.size() == value.size(), ErrorCode::kInvalidShape,
            "gradient sink size mismatch for leaf of shape " +
                ShapeString(value.shape()));
    Node node;
    node.borrowed = &value;
    node.sink = grad_sink;
    node.requires_grad = true;
    return Push(std::move(node));
  }

  Var Record(Tensor value, std::initializer_list<Var> parents,
             BackwardFn backward) {
    Node node;
    node.owned = std::move(value);
    for (const Var& p : parents) {
      CheckOwned(p);
      node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    return Push(std::move(node));
  }

  Var Record(Tensor value, const std::vector<Var>& parents,
             BackwardFn backward) {
    Node node;
    node.owned = std::move(value);
    for (const Var& p : parents) {
      CheckOwned(p);
      node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    return Push(std::move(node));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.owned;
  }

  bool RequiresGrad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of a node, allocated on first use.
  std::span<double> Grad(std::size_t id) {
    Node& n = nodes_[id];
    n.touched = true;
    if (!n.sink.empty()) return n.sink;
    if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
    return n.grad;
  }

  // Populates leaf gradients with d(loss)/d(leaf). The tape is consumed.
  void Backward(Var loss) {
    Require(loss.attached(), ErrorCode::kNoTape,
            "backward called on a detached tensor");
    Require(loss.tape_ == this, ErrorCode::kNoTape,
            "loss belongs to a different tape");
    Require(!consumed_, ErrorCode::kNoTape, "tape already consumed");
    Require(value(loss.id_).size() == 1, ErrorCode::kInvalidShape,
            "backward needs a scalar loss, got " +
                ShapeString(value(loss.id_).shape()));
    consumed_ = true;
    if (!nodes_[loss.id_].requires_grad) return;
    Grad(loss.id_)[0] += 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.touched || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  bool tracking_branches() const { return track_branches_; }
  void NoteBranch(std::uint64_t bits) {
    if (track_branches_) branch_hash_.Update(bits);
  }
  std::uint64_t branch_signature() const { return branch_hash_.Digest(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    std::vector<double> grad;
    std::span<double> sink;
    bool requires_grad = false;
    bool touched = false;
    BackwardFn backward;
  };

  void CheckOwned(const Var& v) const {
    Require(v.attached(), ErrorCode::kNoTape, "operand is detached");
    Require(v.tape_ == this, ErrorCode::kNoTape,
            "operands recorded on different tapes");
  }

  Var Push(Node node) {
    Require(!consumed_, ErrorCode::kNoTape, "recording on a consumed tape");
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  bool consumed_ = false;
  bool track_branches_ = false;
  Fnv1a branch_hash_;
};

inline const Tensor& Var::value() const {
  Require(attached(), ErrorCode::kNoTape, "value() on a detached tensor");
  return tape_->value(id_);
}

inline void Backward(Var loss) {
  Require(loss.attached(), ErrorCode::kNoTape,
          "backward called on a detached tensor");
  loss.tape()->Backward(loss);
}

namespace detail {

inline Tape& TapeOf(Var a) {
  Require(a.attached(), ErrorCode::kNoTape, "operand is detached");
  return *a.tape();
}

inline void RequireSameShape(const Tensor& a, const Tensor& b,
                             const char* op) {
  Require(a.shape() == b.shape(), ErrorCode::kInvalidShape,
          std::string(op) + ": shapes " + ShapeString(a.shape()) + " and " +
              ShapeString(b.shape()) + " differ");
}

inline void RequireRank(const Tensor& a, std::size_t rank, const char* op) {
  Require(a.rank() == rank, ErrorCode::kInvalidShape,
          std::string(op) + ": expected rank " + std::to_string(rank) +
              ", got " + ShapeString(a.shape()));
}

// Folds a gate pattern into the branch signature, 64 gates per word.
inline void NoteGates(Tape& tape, std::span<const double> pre) {
  if (!tape.tracking_branches()) return;
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (pre[i] > 0.0) word |= std::uint64_t{1} << (i % 64);
    if (i % 64 == 63 || i + 1 == pre.size()) {
      tape.NoteBranch(word ^ (i / 64));
      word = 0;
    }
  }
}

// Valid cross-correlation of an L x k input with a bank of f filters of
// shape m x k (stored m x k x f), followed by relu. Only the first
// 'positions' windows are produced.
inline void ConvForward(std::span<const double> x, std::span<const double> w,
                        std::span<const double> b, std::size_t k,
                        std::size_t m, std::size_t f, std::size_t positions,
                        std::span<double> out) {
  for (std::size_t t = 0; t < positions; ++t) {
    double* acc = out.data() + t * f;
    for (std::size_t j = 0; j < f; ++j) acc[j] = b[j];
    for (std::size_t r = 0; r < m; ++r) {
      const double* xr = x.data() + (t + r) * k;
      for (std::size_t c = 0; c < k; ++c) {
        const double xv = xr[c];
        const double* wrc = w.data() + (r * k + c) * f;
        for (std::size_t j = 0; j < f; ++j) acc[j] += xv * wrc[j];
      }
    }
  }
}

inline Var RecordConv(Var input, Var filters, Var bias, std::size_t m,
                      std::size_t f, std::size_t positions, Shape out_shape) {
  Tape& tape = TapeOf(input);
  const Tensor& x = input.value();
  const std::size_t k = x.dim(1);
  Tensor out(std::move(out_shape));
  ConvForward(x.data(), filters.value().data(), bias.value().data(), k, m, f,
              positions, out.data());
  NoteGates(tape, out.data());
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t xi = input.id(), wi = filters.id(), bi = bias.id();
  return tape.Record(
      std::move(out), {input, filters, bias},
      [xi, wi, bi, k, m, f, positions](Tape& tp, std::size_t self) {
        const Tensor& y = tp.value(self);
        std::vector<double> g(tp.Grad(self).begin(), tp.Grad(self).end());
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (!(y[i] > 0.0)) g[i] = 0.0;
        }
        const std::span<const double> xv = tp.value(xi).data();
        const std::span<const double> wv = tp.value(wi).data();
        if (tp.RequiresGrad(bi)) {
          std::span<double> db = tp.Grad(bi);
          for (std::size_t t = 0; t < positions; ++t)
            for (std::size_t j = 0; j < f; ++j) db[j] += g[t * f + j];
        }
        if (tp.RequiresGrad(wi)) {
          std::span<double> dw = tp.Grad(wi);
          for (std::size_t t = 0; t < positions; ++t) {
            const double* gt = g.data() + t * f;
            for (std::size_t r = 0; r < m; ++r) {
              const double* xr = xv.data() + (t + r) * k;
              for (std::size_t c = 0; c < k; ++c) {
                const double xval = xr[c];
                double* dwrc = dw.data() + (r * k + c) * f;
                for (std::size_t j = 0; j < f; ++j) dwrc[j] += xval * gt[j];
              }
            }
          }
        }
        if (tp.RequiresGrad(xi)) {
          std::span<double> dx = tp.Grad(xi);
          for (std::size_t t = 0; t < positions; ++t) {
            const double* gt = g.data() + t * f;
            for (std::size_t r = 0; r < m; ++r) {
              double* dxr = dx.data() + (t + r) * k;
              for (std::size_t c = 0; c < k; ++c) {
                const double* wrc = wv.data() + (r * k + c) * f;
                double s = 0.0;
                for (std::size_t j = 0; j < f; ++j) s += wrc[j] * gt[j];
                dxr[c] += s;
              }
            }
          }
        }
      });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var Add(Var a, Var b) {
  Tape& tape = detail::TapeOf(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::RequireSameShape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return tape.Record(std::move(out), {a, b}, [ai, bi](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    for (std::size_t p : {ai, bi}) {
      if (!tp.RequiresGrad(p)) continue;
      std::span<double> d = tp.Grad(p);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

inline Var Mul(Var a, Var b) {
  Tape& tape = detail::TapeOf(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::RequireSameShape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return tape.Record(std::move(out), {a, b}, [ai, bi](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    if (tp.RequiresGrad(ai)) {
      std::span<double> d = tp.Grad(ai);
      const Tensor& bv = tp.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (tp.RequiresGrad(bi)) {
      std::span<double> d = tp.Grad(bi);
      const Tensor& av = tp.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

inline Var Scale(Var a, double factor) {
  Tape& tape = detail::TapeOf(a);
  Tensor out = a.value();
  out.DropGrad();
  for (double& v : out.data()) v *= factor;
  const std::size_t ai = a.id();
  return tape.Record(std::move(out), {a}, [ai, factor](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    std::span<double> d = tp.Grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

// Multiplies by a fixed mask (dropout keep-mask already scaled by 1/keep).
inline Var ApplyMask(Var a, const Tensor& mask) {
  Tape& tape = detail::TapeOf(a);
  const Tensor& av = a.value();
  detail::RequireSameShape(av, mask, "apply_mask");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
  const std::size_t ai = a.id();
  return tape.Record(std::move(out), {a},
                     [ai, mask](Tape& tp, std::size_t self) {
                       std::span<const double> g = tp.Grad(self);
                       std::span<double> d = tp.Grad(ai);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         d[i] += g[i] * mask[i];
                     });
}

inline Var Sum(Var a) {
  Tape& tape = detail::TapeOf(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ai = a.id();
  return tape.Record(Tensor::Scalar(s), {a}, [ai](Tape& tp, std::size_t self) {
    const double g = tp.Grad(self)[0];
    for (double& d : tp.Grad(ai)) d += g;
  });
}

inline Var Relu(Var a) {
  Tape& tape = detail::TapeOf(a);
  const Tensor& av = a.value();
  detail::NoteGates(tape, av.data());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const std::size_t ai = a.id();
  return tape.Record(std::move(out), {a}, [ai](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    const Tensor& x = tp.value(ai);
    std::span<double> d = tp.Grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) d[i] += g[i];
  });
}

inline Var Tanh(Var a) {
  Tape& tape = detail::TapeOf(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  const std::size_t ai = a.id();
  return tape.Record(std::move(out), {a}, [ai](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    const Tensor& y = tp.value(self);
    std::span<double> d = tp.Grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

// (n x p) * (p x q) -> n x q
inline Var MatMul(Var a, Var b) {
  Tape& tape = detail::TapeOf(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::RequireRank(av, 2, "matmul");
  detail::RequireRank(bv, 2, "matmul");
  const std::size_t n = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Require(bv.dim(0) == p, ErrorCode::kInvalidShape,
          "matmul: inner dimensions " + ShapeString(av.shape()) + " * " +
              ShapeString(bv.shape()));
  Tensor out({n, q});
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data().data() + i * q;
    for (std::size_t r = 0; r < p; ++r) {
      const double x = av[i * p + r];
      const double* br = bv.data().data() + r * q;
      for (std::size_t j = 0; j < q; ++j) o[j] += x * br[j];
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  return tape.Record(std::move(out), {a, b}, [ai, bi, n, p, q](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    const Tensor& av = tp.value(ai);
    const Tensor& bv = tp.value(bi);
    if (tp.RequiresGrad(ai)) {
      std::span<double> da = tp.Grad(ai);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < p; ++r) {
          double s = 0.0;
          for (std::size_t j = 0; j < q; ++j) s += g[i * q + j] * bv[r * q + j];
          da[i * p + r] += s;
        }
    }
    if (tp.RequiresGrad(bi)) {
      std::span<double> db = tp.Grad(bi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < p; ++r) {
          const double x = av[i * p + r];
          for (std::size_t j = 0; j < q; ++j) db[r * q + j] += x * g[i * q + j];
        }
    }
  });
}

// Row vector (p) times matrix (p x q) -> q
inline Var VecMat(Var x, Var w) {
  Tape& tape = detail::TapeOf(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  detail::RequireRank(wv, 2, "vecmat");
  const std::size_t p = wv.dim(0), q = wv.dim(1);
  Require(xv.size() == p, ErrorCode::kInvalidShape,
          "vecmat: vector of size " + std::to_string(xv.size()) +
              " against " + ShapeString(wv.shape()));
  Tensor out({q});
  for (std::size_t r = 0; r < p; ++r) {
    const double v = xv[r];
    const double* wr = wv.data().data() + r * q;
    for (std::size_t j = 0; j < q; ++j) out[j] += v * wr[j];
  }
  const std::size_t xi = x.id(), wi = w.id();
  return tape.Record(std::move(out), {x, w}, [xi, wi, p, q](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    const Tensor& xv = tp.value(xi);
    const Tensor& wv = tp.value(wi);
    if (tp.RequiresGrad(xi)) {
      std::span<double> dx = tp.Grad(xi);
      for (std::size_t r = 0; r < p; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < q; ++j) s += wv[r * q + j] * g[j];
        dx[r] += s;
      }
    }
    if (tp.RequiresGrad(wi)) {
      std::span<double> dw = tp.Grad(wi);
      for (std::size_t r = 0; r < p; ++r) {
        const double v = xv[r];
        for (std::size_t j = 0; j < q; ++j) dw[r * q + j] += v * g[j];
      }
    }
  });
}

// Matrix (n x p) times column vector (p) -> n
inline Var MatVec(Var a, Var v) {
  Tape& tape = detail::TapeOf(a);
  const Tensor& av = a.value();
  const Tensor& vv = v.value();
  detail::RequireRank(av, 2, "matvec");
  const std::size_t n = av.dim(0), p = av.dim(1);
  Require(vv.size() == p, ErrorCode::kInvalidShape,
          "matvec: " + ShapeString(av.shape()) + " against vector of size " +
              std::to_string(vv.size()));
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += av[i * p + j] * vv[j];
    out[i] = s;
  }
  const std::size_t ai = a.id(), vi = v.id();
  return tape.Record(std::move(out), {a, v}, [ai, vi, n, p](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    const Tensor& av = tp.value(ai);
    const Tensor& vv = tp.value(vi);
    if (tp.RequiresGrad(ai)) {
      std::span<double> da = tp.Grad(ai);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) da[i * p + j] += g[i] * vv[j];
    }
    if (tp.RequiresGrad(vi)) {
      std::span<double> dv = tp.Grad(vi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) dv[j] += av[i * p + j] * g[i];
    }
  });
}

// Adds a length-q bias to every row of an (n x q) matrix, or to a q-vector.
inline Var AddBias(Var a, Var bias) {
  Tape& tape = detail::TapeOf(a);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  const std::size_t q = bv.size();
  Require(av.shape().back() == q && bv.rank() == 1, ErrorCode::kInvalidShape,
          "add_bias: " + ShapeString(av.shape()) + " + " +
              ShapeString(bv.shape()));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i % q];
  const std::size_t ai = a.id(), bi = bias.id();
  return tape.Record(std::move(out), {a, bias}, [ai, bi, q](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    if (tp.RequiresGrad(ai)) {
      std::span<double> da = tp.Grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (tp.RequiresGrad(bi)) {
      std::span<double> db = tp.Grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) db[i % q] += g[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Sequence operations

// Row gather: out[i] = table[ids[i]].
inline Var GatherRows(Var table, std::span<const std::size_t> ids) {
  Tape& tape = detail::TapeOf(table);
  const Tensor& tv = table.value();
  detail::RequireRank(tv, 2, "gather_rows");
  Require(!ids.empty(), ErrorCode::kInvalidShape, "gather_rows: no ids");
  const std::size_t n = tv.dim(0), k = tv.dim(1);
  Tensor out({ids.size(), k});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Require(ids[i] < n, ErrorCode::kIndex,
            "id " + std::to_string(ids[i]) + " outside table of " +
                std::to_string(n) + " rows");
    std::copy_n(tv.data().data() + ids[i] * k, k, out.data().data() + i * k);
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  const std::size_t ti = table.id();
  return tape.Record(std::move(out), {table},
                     [ti, k, rows = std::move(rows)](Tape& tp, std::size_t self) {
                       std::span<const double> g = tp.Grad(self);
                       std::span<double> d = tp.Grad(ti);
                       for (std::size_t i = 0; i < rows.size(); ++i)
                         for (std::size_t c = 0; c < k; ++c)
                           d[rows[i] * k + c] += g[i * k + c];
                     });
}

// relu(sum(filter * input[i:i+m]) + bias) for every window i; single filter.
inline Var ConvValid(Var input, Var filter, Var bias) {
  const Tensor& x = input.value();
  const Tensor& w = filter.value();
  detail::RequireRank(x, 2, "conv_valid");
  detail::RequireRank(w, 2, "conv_valid");
  Require(w.dim(1) == x.dim(1), ErrorCode::kInvalidShape,
          "conv_valid: filter " + ShapeString(w.shape()) + " vs input " +
              ShapeString(x.shape()));
  Require(bias.value().size() == 1, ErrorCode::kInvalidShape,
          "conv_valid: bias must be a scalar");
  const std::size_t len = x.dim(0), m = w.dim(0);
  Require(m <= len, ErrorCode::kWindowTooLarge,
          "window " + std::to_string(m) + " exceeds length " +
              std::to_string(len));
  const std::size_t positions = len - m + 1;
  return detail::RecordConv(input, filter, bias, m, 1, positions, {positions});
}

// Filter bank version: filters m x k x f, bias f -> (positions x f), where
// positions = min(L - m + 1, max_positions).
inline Var NgramConv(Var input, Var filters, Var bias,
                     std::size_t max_positions =
                         std::numeric_limits<std::size_t>::max()) {
  const Tensor& x = input.value();
  const Tensor& w = filters.value();
  detail::RequireRank(x, 2, "ngram_conv");
  detail::RequireRank(w, 3, "ngram_conv");
  const std::size_t len = x.dim(0), m = w.dim(0), f = w.dim(2);
  Require(w.dim(1) == x.dim(1), ErrorCode::kInvalidShape,
          "ngram_conv: filters " + ShapeString(w.shape()) + " vs input " +
              ShapeString(x.shape()));
  Require(bias.value().size() == f, ErrorCode::kInvalidShape,
          "ngram_conv: bias size");
  Require(m <= len, ErrorCode::kWindowTooLarge,
          "window " + std::to_string(m) + " exceeds length " +
              std::to_string(len));
  Require(max_positions >= 1, ErrorCode::kInvalidShape,
          "ngram_conv: no positions requested");
  const std::size_t positions = std::min(len - m + 1, max_positions);
  return detail::RecordConv(input, filters, bias, m, f, positions,
                            {positions, f});
}

// s = sum_t alpha[t] * V[t, :]
inline Var WeightedRowSum(Var rows, Var weights) {
  Tape& tape = detail::TapeOf(rows);
  const Tensor& v = rows.value();
  const Tensor& a = weights.value();
  detail::RequireRank(v, 2, "weighted_row_sum");
  const std::size_t t_len = v.dim(0), f = v.dim(1);
  Require(a.size() == t_len, ErrorCode::kInvalidShape,
          "weighted_row_sum: " + std::to_string(a.size()) + " weights for " +
              std::to_string(t_len) + " rows");
  Tensor out({f});
  for (std::size_t t = 0; t < t_len; ++t) {
    const double w = a[t];
    for (std::size_t j = 0; j < f; ++j) out[j] += w * v[t * f + j];
  }
  const std::size_t vi = rows.id(), ai = weights.id();
  return tape.Record(std::move(out), {rows, weights}, [vi, ai, t_len, f](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    const Tensor& v = tp.value(vi);
    const Tensor& a = tp.value(ai);
    if (tp.RequiresGrad(vi)) {
      std::span<double> dv = tp.Grad(vi);
      for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t j = 0; j < f; ++j) dv[t * f + j] += a[t] * g[j];
    }
    if (tp.RequiresGrad(ai)) {
      std::span<double> da = tp.Grad(ai);
      for (std::size_t t = 0; t < t_len; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < f; ++j) s += v[t * f + j] * g[j];
        da[t] += s;
      }
    }
  });
}

// Column-wise max over rows; ties resolve to the first row.
inline Var MaxRows(Var rows) {
  Tape& tape = detail::TapeOf(rows);
  const Tensor& v = rows.value();
  detail::RequireRank(v, 2, "max_rows");
  const std::size_t t_len = v.dim(0), f = v.dim(1);
  Tensor out({f});
  std::vector<std::size_t> arg(f, 0);
  for (std::size_t j = 0; j < f; ++j) {
    double best = v[j];
    for (std::size_t t = 1; t < t_len; ++t) {
      if (v[t * f + j] > best) {
        best = v[t * f + j];
        arg[j] = t;
      }
    }
    out[j] = best;
    tape.NoteBranch(arg[j] * 0x9e3779b97f4a7c15ULL + j);
  }
  const std::size_t vi = rows.id();
  return tape.Record(std::move(out), {rows},
                     [vi, f, arg = std::move(arg)](Tape& tp, std::size_t self) {
                       std::span<const double> g = tp.Grad(self);
                       std::span<double> dv = tp.Grad(vi);
                       for (std::size_t j = 0; j < f; ++j) dv[arg[j] * f + j] += g[j];
                     });
}

// Flattened concatenation.
inline Var Concat(const std::vector<Var>& parts) {
  Require(!parts.empty(), ErrorCode::kInvalidShape, "concat: no operands");
  Tape& tape = detail::TapeOf(parts.front());
  std::size_t total = 0;
  for (const Var& p : parts) total += p.value().size();
  Tensor out({total});
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + offset);
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += v.size();
  }
  return tape.Record(std::move(out), parts,
                     [ids = std::move(ids), offsets = std::move(offsets)](
                         Tape& tp, std::size_t self) {
                       std::span<const double> g = tp.Grad(self);
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (!tp.RequiresGrad(ids[i])) continue;
                         std::span<double> d = tp.Grad(ids[i]);
                         for (std::size_t j = 0; j < d.size(); ++j)
                           d[j] += g[offsets[i] + j];
                       }
                     });
}

// ---------------------------------------------------------------------------
// Probabilities

inline constexpr double kProbabilityFloor = 1e-12;

// Max-subtracted softmax over all elements.
inline std::vector<double> Softmax(std::span<const double> logits) {
  Require(!logits.empty(), ErrorCode::kInvalidShape, "softmax of empty input");
  double top = logits[0];
  for (double v : logits) top = std::max(top, v);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline Var Softmax(Var logits) {
  Tape& tape = detail::TapeOf(logits);
  const Tensor& lv = logits.value();
  Tensor out(lv.shape(), Softmax(lv.data()));
  const std::size_t li = logits.id();
  return tape.Record(std::move(out), {logits}, [li](Tape& tp, std::size_t self) {
    std::span<const double> g = tp.Grad(self);
    const Tensor& y = tp.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    std::span<double> d = tp.Grad(li);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += y[i] * (g[i] - dot);
  });
}

// -ln(max(p[label], 1e-12))
inline double CrossEntropy(std::span<const double> probs, std::size_t label) {
  Require(label < probs.size(), ErrorCode::kIndex,
          "label " + std::to_string(label) + " outside " +
              std::to_string(probs.size()) + " classes");
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

inline Var CrossEntropy(Var probs, std::size_t label) {
  Tape& tape = detail::TapeOf(probs);
  const Tensor& pv = probs.value();
  const double loss = CrossEntropy(pv.data(), label);
  const bool clamped = !(pv[label] > kProbabilityFloor);
  tape.NoteBranch(clamped ? 0xc1a3bULL : 0x0bULL);
  const std::size_t pi = probs.id();
  return tape.Record(Tensor::Scalar(loss), {probs},
                     [pi, label, clamped](Tape& tp, std::size_t self) {
                       if (clamped) return;
                       const double g = tp.Grad(self)[0];
                       tp.Grad(pi)[label] += -g / tp.value(pi)[label];
                     });
}

// ---------------------------------------------------------------------------
// Value-level helpers (no tape)

inline Tensor ConvValid(const Tensor& input, const Tensor& filter, double bias) {
  Tape tape;
  Var out = ConvValid(tape.Constant(input), tape.Constant(filter),
                      tape.Constant(Tensor::Scalar(bias)));
  return out.value();
}

}  // namespace acnn
