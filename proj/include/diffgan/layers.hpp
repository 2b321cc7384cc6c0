#pragma once

#include "diffgan/ops.hpp"
#include "diffgan/params.hpp"

#include <string>
#include <vector>

namespace diffgan {

// Parameter naming: "<layer>.w", "<layer>.b" for affine layers, "<layer>.gamma",
// "<layer>.beta" for normalization, "<layer>.wx", "<layer>.wh", "<layer>.b" for
// LSTM. Biases start at zero.

template <class S>
void init_dense(ParameterSet<S>& ps, const std::string& name, Index in, Index out, RngStream& rng) {
  ps.add(name + ".w", fan_in_uniform<S>(rng, {in, out}, in));
  ps.add(name + ".b", Tensor<S>::zeros({out}));
}

template <class S>
void init_conv(ParameterSet<S>& ps, const std::string& name, Index kernel, Index in, Index out, RngStream& rng) {
  ps.add(name + ".w", fan_in_uniform<S>(rng, {kernel, in, out}, kernel * in));
  ps.add(name + ".b", Tensor<S>::zeros({out}));
}

template <class S>
void init_norm(ParameterSet<S>& ps, const std::string& name, Index channels) {
  ps.add(name + ".gamma", Tensor<S>::constant({channels}, S(1)));
  ps.add(name + ".beta", Tensor<S>::zeros({channels}));
}

template <class S>
void init_lstm(ParameterSet<S>& ps, const std::string& name, Index in, Index hidden, RngStream& rng) {
  ps.add(name + ".wx", fan_in_uniform<S>(rng, {in, 4 * hidden}, in));
  ps.add(name + ".wh", fan_in_uniform<S>(rng, {hidden, 4 * hidden}, hidden));
  ps.add(name + ".b", Tensor<S>::zeros({4 * hidden}));
}

template <class S>
Var<S> dense(const BoundParams<S>& p, const std::string& name, Var<S> x) {
  return linear(x, p[name + ".w"], p[name + ".b"], name);
}

/// Same-length convolution ("same" padding) for odd kernels, or strided downsampling.
template <class S>
Var<S> conv(const BoundParams<S>& p, const std::string& name, Var<S> x, Index stride = 1) {
  const Index k = p[name + ".w"].value().dim(0);
  return conv1d(x, p[name + ".w"], p[name + ".b"], stride, (k - 1) / 2, name);
}

template <class S>
Var<S> norm(const BoundParams<S>& p, const std::string& name, Var<S> x, Index groups) {
  return group_norm(x, p[name + ".gamma"], p[name + ".beta"], groups);
}

/// Single-layer LSTM over [B, L, Din], returning hidden states [B, L, H].
/// Gate order in the 4H axis: input, forget, cell, output.
template <class S>
Var<S> lstm(const BoundParams<S>& p, const std::string& name, Var<S> x) {
  const Tensor<S>& xv = x.value();
  const Var<S> wx = p[name + ".wx"];
  const Var<S> wh = p[name + ".wh"];
  detail::require(xv.rank() == 3, name + ": expected [B, L, D] input, got " + to_string(xv.shape()));
  detail::require(wx.value().dim(0) == xv.dim(2),
                  name + ": input weight expects " + std::to_string(wx.value().dim(0)) + " features, input has " +
                      std::to_string(xv.dim(2)));
  const Index B = xv.dim(0), L = xv.dim(1), H = wh.value().dim(0);
  Graph<S>& g = *x.graph;

  const Var<S> projected = linear(x, wx, p[name + ".b"], name);  // [B, L, 4H]
  Var<S> h = g.constant(Tensor<S>::zeros({B, H}));
  Var<S> c = g.constant(Tensor<S>::zeros({B, H}));
  std::vector<Var<S>> outputs;
  outputs.reserve(static_cast<std::size_t>(L));
  for (Index t = 0; t < L; ++t) {
    const Var<S> gates = add(time_step(projected, t), matmul(h, wh, name));
    const Var<S> i = sigmoid(slice_features(gates, 0, H));
    const Var<S> f = sigmoid(slice_features(gates, H, H));
    const Var<S> cand = tanh(slice_features(gates, 2 * H, H));
    const Var<S> o = sigmoid(slice_features(gates, 3 * H, H));
    c = add(mul(f, c), mul(i, cand));
    h = mul(o, tanh(c));
    outputs.push_back(h);
  }
  return stack_time(outputs);
}

// --- generic single-layer interface ---------------------------------------------

enum class LayerKind {
  conv1d,          ///< kernel `kernel`, stride `stride`, same padding
  upsample_conv,   ///< nearest x2 upsampling followed by a same-padded conv
  dense,           ///< fully connected over the last axis
  lstm,            ///< single LSTM layer, `out` hidden units
  group_norm,      ///< `groups` groups over `in` channels
  sigmoid,
  silu,
  relu,
};

struct LayerConfig {
  LayerKind kind = LayerKind::dense;
  std::string name = "layer";
  Index in = 1;
  Index out = 1;
  Index kernel = 3;
  Index stride = 1;
  Index groups = 1;
};

template <class S>
ParameterSet<S> init_layer(const LayerConfig& cfg, RngStream& rng) {
  ParameterSet<S> ps;
  switch (cfg.kind) {
    case LayerKind::conv1d:
    case LayerKind::upsample_conv: init_conv(ps, cfg.name, cfg.kernel, cfg.in, cfg.out, rng); break;
    case LayerKind::dense: init_dense(ps, cfg.name, cfg.in, cfg.out, rng); break;
    case LayerKind::lstm: init_lstm(ps, cfg.name, cfg.in, cfg.out, rng); break;
    case LayerKind::group_norm: init_norm(ps, cfg.name, cfg.in); break;
    default: break;
  }
  return ps;
}

/// Applies one configured layer on a graph.
template <class S>
Var<S> apply_layer(const LayerConfig& cfg, const BoundParams<S>& p, Var<S> x) {
  const Tensor<S>& xv = x.value();
  const auto expect_features = [&](Index want) {
    detail::require(xv.rank() >= 1 && xv.features() == want,
                    cfg.name + ": expected " + std::to_string(want) + " input features, got shape " +
                        to_string(xv.shape()));
  };
  switch (cfg.kind) {
    case LayerKind::conv1d: expect_features(cfg.in); return conv(p, cfg.name, x, cfg.stride);
    case LayerKind::upsample_conv: expect_features(cfg.in); return conv(p, cfg.name, upsample_nearest(x, Index{2}));
    case LayerKind::dense: expect_features(cfg.in); return dense(p, cfg.name, x);
    case LayerKind::lstm: expect_features(cfg.in); return lstm(p, cfg.name, x);
    case LayerKind::group_norm: expect_features(cfg.in); return norm(p, cfg.name, x, cfg.groups);
    case LayerKind::sigmoid: return sigmoid(x);
    case LayerKind::silu: return silu(x);
    case LayerKind::relu: return relu(x);
  }
  throw ShapeError(cfg.name + ": unknown layer kind");
}

/// Forward evaluation of a single layer outside any training graph.
template <class S>
Tensor<S> layer_forward(const LayerConfig& cfg, const ParameterSet<S>& params, const Tensor<S>& input) {
  Graph<S> g;
  BoundParams<S> p(g, params, false);
  return apply_layer(cfg, p, g.constant(input)).value();
}

}  // namespace diffgan
