#pragma once

#include "diffgan/params.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace diffgan {

/// Raised when training produces non-finite values.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moments and step counter for decoupled-weight-decay Adam.
template <class S>
struct AdamWState {
  AdamWOptions options;
  std::map<std::string, Tensor<S>> m;
  std::map<std::string, Tensor<S>> v;
  std::int64_t t = 0;

  AdamWState() = default;
  explicit AdamWState(AdamWOptions opts) : options(opts) {}
};

/// One AdamW update:
///   p <- p - lr * wd * p
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// Entries without a gradient (frozen) are left untouched.
template <class S>
void adamw_step(ParameterSet<S>& params, const GradientMap<S>& grads, AdamWState<S>& state) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw TrainingError("adamw: non-finite gradient for parameter '" + name + "'");
    if (g.shape() != params.at(name).shape()) {
      throw ShapeError("adamw: gradient shape " + to_string(g.shape()) + " does not match parameter '" + name + "'");
    }
  }
  ++state.t;
  const AdamWOptions& o = state.options;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    Tensor<S>& p = params.at(name);
    auto& m = state.m.try_emplace(name, Tensor<S>::zeros(p.shape())).first->second.data();
    auto& v = state.v.try_emplace(name, Tensor<S>::zeros(p.shape())).first->second.data();
    auto& w = p.data();
    const auto gd = g.data().template cast<double>();
    for (Index i = 0; i < w.size(); ++i) {
      const double gi = gd[i];
      const double mi = o.beta1 * static_cast<double>(m[i]) + (1.0 - o.beta1) * gi;
      const double vi = o.beta2 * static_cast<double>(v[i]) + (1.0 - o.beta2) * gi * gi;
      m[i] = static_cast<S>(mi);
      v[i] = static_cast<S>(vi);
      double wi = static_cast<double>(w[i]);
      wi -= o.lr * o.weight_decay * wi;
      wi -= o.lr * (mi / bc1) / (std::sqrt(vi / bc2) + o.eps);
      w[i] = static_cast<S>(wi);
    }
  }
}

}  // namespace diffgan
