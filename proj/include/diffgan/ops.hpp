#pragma once

#include "diffgan/autograd.hpp"

#include <cmath>
#include <string>
#include <vector>

// Differentiable free functions over Graph variables. Layouts are channel-last
// (see Tensor::matrix()): sequences are [B, L, C], dense inputs are [..., F].

namespace diffgan {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <class S>
void require_same(const char* op, Var<S> a, Var<S> b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                      to_string(b.shape()));
}

template <class S, class F, class DF>
Var<S> unary(Var<S> x, F f, DF dfdx) {
  Graph<S>& g = *x.graph;
  const Tensor<S>& xv = x.value();
  Tensor<S> y(xv.shape());
  y.data() = xv.data().unaryExpr(f);
  return g.record(std::move(y), {x}, [x, dfdx](Graph<S>& g, const Tensor<S>& y, const Tensor<S>& gy) {
    const auto& xd = g.value(x).data();
    auto& gx = g.grad_data(x);
    for (Index i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx(xd[i], y[i]);
  });
}

}  // namespace detail

// --- elementwise -----------------------------------------------------------

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require_same("add", a, b);
  Tensor<S> y(a.shape(), a.value().data() + b.value().data());
  return a.graph->record(std::move(y), {a, b}, [a, b](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    if (g.requires_grad(a)) g.grad_data(a) += gy.data();
    if (g.requires_grad(b)) g.grad_data(b) += gy.data();
  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require_same("sub", a, b);
  Tensor<S> y(a.shape(), a.value().data() - b.value().data());
  return a.graph->record(std::move(y), {a, b}, [a, b](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    if (g.requires_grad(a)) g.grad_data(a) += gy.data();
    if (g.requires_grad(b)) g.grad_data(b) -= gy.data();
  });
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require_same("mul", a, b);
  Tensor<S> y(a.shape(), a.value().data().cwiseProduct(b.value().data()));
  return a.graph->record(std::move(y), {a, b}, [a, b](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    if (g.requires_grad(a)) g.grad_data(a) += gy.data().cwiseProduct(g.value(b).data());
    if (g.requires_grad(b)) g.grad_data(b) += gy.data().cwiseProduct(g.value(a).data());
  });
}

template <class S>
Var<S> scale(Var<S> x, S s) {
  Tensor<S> y(x.shape(), x.value().data() * s);
  return x.graph->record(std::move(y), {x}, [x, s](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    g.grad_data(x) += gy.data() * s;
  });
}

template <class S>
Var<S> add_scalar(Var<S> x, S s) {
  Tensor<S> y(x.shape(), x.value().data().array() + s);
  return x.graph->record(std::move(y), {x}, [x](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    g.grad_data(x) += gy.data();
  });
}

/// 1 - x
template <class S>
Var<S> one_minus(Var<S> x) {
  return add_scalar(scale(x, S(-1)), S(1));
}

template <class S>
Var<S> sigmoid(Var<S> x) {
  return detail::unary(
      x, [](S v) { return S(1) / (S(1) + std::exp(-v)); }, [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Var<S> tanh(Var<S> x) {
  return detail::unary(
      x, [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <class S>
Var<S> relu(Var<S> x) {
  return detail::unary(
      x, [](S v) { return v > S(0) ? v : S(0); }, [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <class S>
Var<S> silu(Var<S> x) {
  return detail::unary(
      x, [](S v) { return v / (S(1) + std::exp(-v)); },
      [](S v, S) {
        const S s = S(1) / (S(1) + std::exp(-v));
        return s * (S(1) + v * (S(1) - s));
      });
}

template <class S>
Var<S> log(Var<S> x) {
  return detail::unary(
      x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

/// Clamp to [lo, hi]; gradient passes only inside the interval.
template <class S>
Var<S> clamp(Var<S> x, S lo, S hi) {
  return detail::unary(
      x, [lo, hi](S v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](S v, S) { return (v >= lo && v <= hi) ? S(1) : S(0); });
}

enum class Activation { silu, relu };

template <class S>
Var<S> activate(Var<S> x, Activation kind) {
  return kind == Activation::silu ? silu(x) : relu(x);
}

// --- reductions --------------------------------------------------------------

template <class S>
Var<S> sum(Var<S> x) {
  Tensor<S> y(Shape{}, VectorX<S>::Constant(1, x.value().data().sum()));
  return x.graph->record(std::move(y), {x}, [x](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    g.grad_data(x).array() += gy[0];
  });
}

template <class S>
Var<S> mean(Var<S> x) {
  const Index n = x.value().size();
  detail::require(n > 0, "mean: empty tensor");
  return scale(sum(x), S(1) / static_cast<S>(n));
}

/// Mean of squared differences over all elements.
template <class S>
Var<S> mse(Var<S> a, Var<S> b) {
  detail::require_same("mse", a, b);
  const Index n = a.value().size();
  detail::require(n > 0, "mse: empty tensor");
  VectorX<S> diff = a.value().data() - b.value().data();
  Tensor<S> y(Shape{}, VectorX<S>::Constant(1, diff.squaredNorm() / static_cast<S>(n)));
  return a.graph->record(std::move(y), {a, b},
                         [a, b, n, diff = std::move(diff)](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
                           const S c = S(2) * gy[0] / static_cast<S>(n);
                           if (g.requires_grad(a)) g.grad_data(a) += c * diff;
                           if (g.requires_grad(b)) g.grad_data(b) -= c * diff;
                         });
}

// --- shape plumbing ----------------------------------------------------------

template <class S>
Var<S> reshape(Var<S> x, Shape shape) {
  Tensor<S> y = x.value().reshaped(std::move(shape));
  return x.graph->record(std::move(y), {x}, [x](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    g.grad_data(x) += gy.data();
  });
}

/// Concatenate along the feature (last) axis.
template <class S>
Var<S> concat_features(Var<S> a, Var<S> b) {
  const Tensor<S>& av = a.value();
  const Tensor<S>& bv = b.value();
  detail::require(av.rank() == bv.rank() && av.rows() == bv.rows(),
                  "concat: incompatible shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()));
  Shape shape = av.shape();
  shape.back() = av.features() + bv.features();
  Tensor<S> y(shape);
  auto ym = y.matrix();
  ym.topRows(av.features()) = av.matrix();
  ym.bottomRows(bv.features()) = bv.matrix();
  const Index fa = av.features();
  const Index fb = bv.features();
  return a.graph->record(std::move(y), {a, b}, [a, b, fa, fb](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    auto gm = gy.matrix();
    if (g.requires_grad(a)) g.grad_matrix(a) += gm.topRows(fa);
    if (g.requires_grad(b)) g.grad_matrix(b) += gm.bottomRows(fb);
  });
}

template <class S>
Var<S> slice_features(Var<S> x, Index offset, Index count) {
  const Tensor<S>& xv = x.value();
  detail::require(offset >= 0 && count > 0 && offset + count <= xv.features(),
                  "slice_features: range [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                      ") outside " + std::to_string(xv.features()) + " features");
  Shape shape = xv.shape();
  shape.back() = count;
  Tensor<S> y(shape);
  y.matrix() = xv.matrix().middleRows(offset, count);
  return x.graph->record(std::move(y), {x}, [x, offset, count](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    g.grad_matrix(x).middleRows(offset, count) += gy.matrix();
  });
}

/// Rows [begin, begin+count) of the leading (batch) axis.
template <class S>
Var<S> slice_batch(Var<S> x, Index begin, Index count) {
  const Tensor<S>& xv = x.value();
  detail::require(xv.rank() >= 1 && begin >= 0 && count >= 0 && begin + count <= xv.dim(0),
                  "slice_batch: range outside batch of shape " + to_string(xv.shape()));
  Shape shape = xv.shape();
  shape[0] = count;
  const Index stride = xv.dim(0) == 0 ? 0 : xv.size() / xv.dim(0);
  Tensor<S> y(shape, xv.data().segment(begin * stride, count * stride));
  return x.graph->record(std::move(y), {x},
                         [x, begin, count, stride](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
                           g.grad_data(x).segment(begin * stride, count * stride) += gy.data();
                         });
}

/// Concatenate along the leading (batch) axis.
template <class S>
Var<S> concat_batch(const std::vector<Var<S>>& parts) {
  detail::require(!parts.empty(), "concat_batch: no inputs");
  Shape shape = parts.front().shape();
  Index total = 0;
  Index size = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    detail::require(s.size() == shape.size() && std::equal(s.begin() + 1, s.end(), shape.begin() + 1),
                    "concat_batch: inner shapes differ " + to_string(s) + " vs " + to_string(shape));
    total += s[0];
    size += p.value().size();
  }
  shape[0] = total;
  Tensor<S> y(shape);
  Index off = 0;
  for (const auto& p : parts) {
    y.data().segment(off, p.value().size()) = p.value().data();
    off += p.value().size();
  }
  return parts.front().graph->record(std::move(y), parts, [parts](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    Index off = 0;
    for (const auto& p : parts) {
      const Index n = g.value(p).size();
      if (g.requires_grad(p)) g.grad_data(p) += gy.data().segment(off, n);
      off += n;
    }
  });
}

/// x[:, t, :] of a [B, L, F] sequence.
template <class S>
Var<S> time_step(Var<S> x, Index t) {
  const Tensor<S>& xv = x.value();
  detail::require(xv.rank() == 3 && t >= 0 && t < xv.dim(1), "time_step: bad index for " + to_string(xv.shape()));
  const Index B = xv.dim(0), L = xv.dim(1), F = xv.dim(2);
  Tensor<S> y(Shape{B, F});
  auto ym = y.matrix();
  auto xm = xv.matrix();
  for (Index b = 0; b < B; ++b) ym.col(b) = xm.col(b * L + t);
  return x.graph->record(std::move(y), {x}, [x, t, B, L](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    auto gx = g.grad_matrix(x);
    auto gm = gy.matrix();
    for (Index b = 0; b < B; ++b) gx.col(b * L + t) += gm.col(b);
  });
}

/// Stack L tensors of shape [B, F] into [B, L, F].
template <class S>
Var<S> stack_time(const std::vector<Var<S>>& steps) {
  detail::require(!steps.empty(), "stack_time: no inputs");
  const Shape s0 = steps.front().shape();
  detail::require(s0.size() == 2, "stack_time: expected [B, F] inputs, got " + to_string(s0));
  const Index B = s0[0], F = s0[1], L = static_cast<Index>(steps.size());
  Tensor<S> y(Shape{B, L, F});
  auto ym = y.matrix();
  for (Index t = 0; t < L; ++t) {
    detail::require(steps[t].shape() == s0, "stack_time: inconsistent step shape");
    auto sm = steps[t].value().matrix();
    for (Index b = 0; b < B; ++b) ym.col(b * L + t) = sm.col(b);
  }
  return steps.front().graph->record(std::move(y), steps, [steps, B, L](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    auto gm = gy.matrix();
    for (Index t = 0; t < L; ++t) {
      if (!g.requires_grad(steps[t])) continue;
      auto gs = g.grad_matrix(steps[t]);
      for (Index b = 0; b < B; ++b) gs.col(b) += gm.col(b * L + t);
    }
  });
}

// --- affine layers -------------------------------------------------------------

/// y = W x + b over the feature axis. W has shape [in, out], b has shape [out].
template <class S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b, const std::string& name = "linear") {
  const Tensor<S>& xv = x.value();
  const Tensor<S>& wv = w.value();
  detail::require(wv.rank() == 2 && wv.dim(0) == xv.features(),
                  name + ": weight " + to_string(wv.shape()) + " does not accept input " + to_string(xv.shape()));
  const Index in = wv.dim(0), out = wv.dim(1);
  detail::require(b.value().size() == out, name + ": bias size " + std::to_string(b.value().size()) + " != " +
                                               std::to_string(out));
  Eigen::Map<const MatrixX<S>> W(wv.raw(), out, in);
  Shape shape = xv.shape();
  shape.back() = out;
  Tensor<S> y(shape);
  y.matrix().noalias() = W * xv.matrix();
  y.matrix().colwise() += b.value().data();
  return x.graph->record(std::move(y), {x, w, b}, [x, w, b, in, out](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    auto gm = gy.matrix();
    if (g.requires_grad(x)) {
      Eigen::Map<const MatrixX<S>> W(g.value(w).raw(), out, in);
      g.grad_matrix(x).noalias() += W.transpose() * gm;
    }
    if (g.requires_grad(w)) {
      Eigen::Map<MatrixX<S>> gW(g.grad_data(w).data(), out, in);
      gW.noalias() += gm * g.value(x).matrix().transpose();
    }
    if (g.requires_grad(b)) g.grad_data(b) += gm.rowwise().sum();
  });
}

/// y = W x without bias. W has shape [in, out].
template <class S>
Var<S> matmul(Var<S> x, Var<S> w, const std::string& name = "matmul") {
  const Tensor<S>& xv = x.value();
  const Tensor<S>& wv = w.value();
  detail::require(wv.rank() == 2 && wv.dim(0) == xv.features(),
                  name + ": weight " + to_string(wv.shape()) + " does not accept input " + to_string(xv.shape()));
  const Index in = wv.dim(0), out = wv.dim(1);
  Eigen::Map<const MatrixX<S>> W(wv.raw(), out, in);
  Shape shape = xv.shape();
  shape.back() = out;
  Tensor<S> y(shape);
  y.matrix().noalias() = W * xv.matrix();
  return x.graph->record(std::move(y), {x, w}, [x, w, in, out](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    auto gm = gy.matrix();
    if (g.requires_grad(x)) {
      Eigen::Map<const MatrixX<S>> W(g.value(w).raw(), out, in);
      g.grad_matrix(x).noalias() += W.transpose() * gm;
    }
    if (g.requires_grad(w)) {
      Eigen::Map<MatrixX<S>> gW(g.grad_data(w).data(), out, in);
      gW.noalias() += gm * g.value(x).matrix().transpose();
    }
  });
}

namespace detail {

template <class S>
void im2col(const Tensor<S>& x, Index k, Index stride, Index pad, Index l_out, MatrixX<S>& cols) {
  const Index B = x.dim(0), L = x.dim(1), C = x.dim(2);
  cols.setZero(k * C, B * l_out);
  auto xm = x.matrix();
  for (Index b = 0; b < B; ++b)
    for (Index to = 0; to < l_out; ++to)
      for (Index kk = 0; kk < k; ++kk) {
        const Index ti = to * stride + kk - pad;
        if (ti >= 0 && ti < L) cols.block(kk * C, b * l_out + to, C, 1) = xm.col(b * L + ti);
      }
}

}  // namespace detail

/// 1D convolution over [B, L, Cin] with weight [k, Cin, Cout] and bias [Cout].
template <class S>
Var<S> conv1d(Var<S> x, Var<S> w, Var<S> b, Index stride, Index pad, const std::string& name = "conv1d") {
  const Tensor<S>& xv = x.value();
  const Tensor<S>& wv = w.value();
  detail::require(xv.rank() == 3, name + ": expected [B, L, C] input, got " + to_string(xv.shape()));
  detail::require(wv.rank() == 3 && wv.dim(1) == xv.dim(2),
                  name + ": weight " + to_string(wv.shape()) + " expects " +
                      std::to_string(wv.rank() == 3 ? wv.dim(1) : -1) + " input channels, input has " +
                      std::to_string(xv.dim(2)));
  detail::require(stride >= 1 && pad >= 0, name + ": invalid stride/padding");
  const Index B = xv.dim(0), L = xv.dim(1), C = xv.dim(2);
  const Index k = wv.dim(0), out = wv.dim(2);
  detail::require(b.value().size() == out, name + ": bias size mismatch");
  detail::require(L + 2 * pad >= k, name + ": sequence length " + std::to_string(L) + " shorter than kernel " +
                                        std::to_string(k));
  const Index l_out = (L + 2 * pad - k) / stride + 1;

  MatrixX<S> cols;
  detail::im2col(xv, k, stride, pad, l_out, cols);
  Eigen::Map<const MatrixX<S>> W(wv.raw(), out, k * C);
  Tensor<S> y(Shape{B, l_out, out});
  y.matrix().noalias() = W * cols;
  y.matrix().colwise() += b.value().data();

  return x.graph->record(
      std::move(y), {x, w, b}, [x, w, b, k, stride, pad, l_out, B, L, C, out](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
        auto gm = gy.matrix();
        const bool need_w = g.requires_grad(w);
        if (need_w) {
          MatrixX<S> cols;
          detail::im2col(g.value(x), k, stride, pad, l_out, cols);
          Eigen::Map<MatrixX<S>> gW(g.grad_data(w).data(), out, k * C);
          gW.noalias() += gm * cols.transpose();
        }
        if (g.requires_grad(b)) g.grad_data(b) += gm.rowwise().sum();
        if (g.requires_grad(x)) {
          Eigen::Map<const MatrixX<S>> W(g.value(w).raw(), out, k * C);
          MatrixX<S> dcols = W.transpose() * gm;
          auto gx = g.grad_matrix(x);
          for (Index bb = 0; bb < B; ++bb)
            for (Index to = 0; to < l_out; ++to)
              for (Index kk = 0; kk < k; ++kk) {
                const Index ti = to * stride + kk - pad;
                if (ti >= 0 && ti < L) gx.col(bb * L + ti) += dcols.block(kk * C, bb * l_out + to, C, 1);
              }
        }
      });
}

/// Nearest-neighbour upsampling of [B, L, C] along time.
template <class S>
Var<S> upsample_nearest(Var<S> x, Index factor) {
  const Tensor<S>& xv = x.value();
  detail::require(xv.rank() == 3 && factor >= 1, "upsample: expected [B, L, C] input, got " + to_string(xv.shape()));
  const Index B = xv.dim(0), L = xv.dim(1), C = xv.dim(2);
  Tensor<S> y(Shape{B, L * factor, C});
  auto ym = y.matrix();
  auto xm = xv.matrix();
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < L * factor; ++t) ym.col(b * L * factor + t) = xm.col(b * L + t / factor);
  return x.graph->record(std::move(y), {x}, [x, B, L, factor](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    auto gx = g.grad_matrix(x);
    auto gm = gy.matrix();
    for (Index b = 0; b < B; ++b)
      for (Index t = 0; t < L * factor; ++t) gx.col(b * L + t / factor) += gm.col(b * L * factor + t);
  });
}

/// x[b, t, :] + e[b, :] for a [B, L, C] sequence and [B, C] per-sample vector.
template <class S>
Var<S> add_over_time(Var<S> x, Var<S> e) {
  const Tensor<S>& xv = x.value();
  const Tensor<S>& ev = e.value();
  detail::require(xv.rank() == 3 && ev.rank() == 2 && ev.dim(0) == xv.dim(0) && ev.dim(1) == xv.dim(2),
                  "add_over_time: cannot broadcast " + to_string(ev.shape()) + " over " + to_string(xv.shape()));
  const Index B = xv.dim(0), L = xv.dim(1);
  Tensor<S> y = xv;
  auto ym = y.matrix();
  auto em = ev.matrix();
  for (Index b = 0; b < B; ++b) ym.middleCols(b * L, L).colwise() += em.col(b);
  return x.graph->record(std::move(y), {x, e}, [x, e, B, L](Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
    if (g.requires_grad(x)) g.grad_data(x) += gy.data();
    if (g.requires_grad(e)) {
      auto ge = g.grad_matrix(e);
      auto gm = gy.matrix();
      for (Index b = 0; b < B; ++b) ge.col(b) += gm.middleCols(b * L, L).rowwise().sum();
    }
  });
}

/// Group normalization of [B, L, C] with per-channel affine gamma/beta of shape [C].
template <class S>
Var<S> group_norm(Var<S> x, Var<S> gamma, Var<S> beta, Index groups, S eps = S(1e-5)) {
  const Tensor<S>& xv = x.value();
  detail::require(xv.rank() == 3, "group_norm: expected [B, L, C] input, got " + to_string(xv.shape()));
  const Index B = xv.dim(0), L = xv.dim(1), C = xv.dim(2);
  detail::require(groups >= 1 && C % groups == 0,
                  "group_norm: " + std::to_string(C) + " channels not divisible into " + std::to_string(groups) + " groups");
  detail::require(gamma.value().size() == C && beta.value().size() == C, "group_norm: affine size mismatch");
  const Index cg = C / groups;
  const S count = static_cast<S>(cg * L);

  Tensor<S> xhat(xv.shape());
  VectorX<S> inv_std(B * groups);
  auto xm = xv.matrix();
  auto hm = xhat.matrix();
  for (Index b = 0; b < B; ++b)
    for (Index gi = 0; gi < groups; ++gi) {
      auto blk = xm.block(gi * cg, b * L, cg, L);
      const S mu = blk.sum() / count;
      const S var = (blk.array() - mu).square().sum() / count;
      const S is = S(1) / std::sqrt(var + eps);
      inv_std[b * groups + gi] = is;
      hm.block(gi * cg, b * L, cg, L) = (blk.array() - mu) * is;
    }
  Tensor<S> y(xv.shape());
  y.matrix() = (hm.array().colwise() * gamma.value().data().array()).colwise() + beta.value().data().array();

  return x.graph->record(
      std::move(y), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), B, L, groups, cg, count](
          Graph<S>& g, const Tensor<S>&, const Tensor<S>& gy) {
        auto gm = gy.matrix();
        auto hm = xhat.matrix();
        if (g.requires_grad(beta)) g.grad_data(beta) += gm.rowwise().sum();
        if (g.requires_grad(gamma)) g.grad_data(gamma) += gm.cwiseProduct(hm).rowwise().sum();
        if (!g.requires_grad(x)) return;
        MatrixX<S> dh = gm.array().colwise() * g.value(gamma).data().array();
        auto gx = g.grad_matrix(x);
        for (Index b = 0; b < B; ++b)
          for (Index gi = 0; gi < groups; ++gi) {
            auto d = dh.block(gi * cg, b * L, cg, L);
            auto h = hm.block(gi * cg, b * L, cg, L);
            const S md = d.sum() / count;
            const S mdh = d.cwiseProduct(h).sum() / count;
            gx.block(gi * cg, b * L, cg, L).array() +=
                inv_std[b * groups + gi] * (d.array() - md - h.array() * mdh);
          }
      });
}

// --- constants -----------------------------------------------------------------

/// Sinusoidal embedding of integer steps, shape [B, dim] (dim even).
template <class S>
Tensor<S> timestep_embedding(const std::vector<int>& steps, Index dim) {
  detail::require(dim >= 2 && dim % 2 == 0, "timestep_embedding: dimension must be even and >= 2");
  const Index half = dim / 2;
  Tensor<S> e(Shape{static_cast<Index>(steps.size()), dim});
  auto em = e.matrix();
  for (Index b = 0; b < static_cast<Index>(steps.size()); ++b)
    for (Index k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      const double arg = static_cast<double>(steps[b]) * freq;
      em(k, b) = static_cast<S>(std::sin(arg));
      em(half + k, b) = static_cast<S>(std::cos(arg));
    }
  return e;
}

}  // namespace diffgan
