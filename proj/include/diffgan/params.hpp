#pragma once

#include "diffgan/autograd.hpp"
#include "diffgan/rng.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace diffgan {

/// Named parameter tensors. std::map keeps iteration sorted by name.
template <class S>
class ParameterSet {
 public:
  struct Entry {
    Tensor<S> tensor;
    bool requires_grad = true;
  };

  void add(const std::string& name, Tensor<S> tensor, bool requires_grad = true) {
    if (!entries_.emplace(name, Entry{std::move(tensor), requires_grad}).second) {
      throw std::invalid_argument("parameter set: duplicate name '" + name + "'");
    }
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor<S>& at(const std::string& name) const { return entry(name).tensor; }
  Tensor<S>& at(const std::string& name) { return entry(name).tensor; }

  bool requires_grad(const std::string& name) const { return entry(name).requires_grad; }
  void set_requires_grad(bool flag) {
    for (auto& [_, e] : entries_) e.requires_grad = flag;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  Index parameter_count() const {
    Index n = 0;
    for (const auto& [_, e] : entries_) n += e.tensor.size();
    return n;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  template <class T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out;
    for (const auto& [name, e] : entries_) out.add(name, e.tensor.template cast<T>(), e.requires_grad);
    return out;
  }

  /// Copy of this set whose names carry `prefix`.
  ParameterSet prefixed(const std::string& prefix) const {
    ParameterSet out;
    for (const auto& [name, e] : entries_) out.add(prefix + name, e.tensor, e.requires_grad);
    return out;
  }

  /// Entries whose names start with `prefix`, with the prefix stripped.
  ParameterSet extract(const std::string& prefix) const {
    ParameterSet out;
    for (const auto& [name, e] : entries_)
      if (name.rfind(prefix, 0) == 0) out.add(name.substr(prefix.size()), e.tensor, e.requires_grad);
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (auto ia = a.entries_.begin(), ib = b.entries_.begin(); ia != a.entries_.end(); ++ia, ++ib) {
      if (ia->first != ib->first || !(ia->second.tensor == ib->second.tensor)) return false;
    }
    return true;
  }

 private:
  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("parameter set: no parameter '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("parameter set: no parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

template <class S>
using GradientMap = std::map<std::string, Tensor<S>>;

/// Parameters recorded as leaves of one graph, looked up by name.
template <class S>
class BoundParams {
 public:
  BoundParams() = default;

  /// `trainable = false` records every entry as a constant (frozen network).
  BoundParams(Graph<S>& graph, const ParameterSet<S>& params, bool trainable = true) {
    for (const auto& [name, e] : params) vars_.emplace(name, graph.leaf(e.tensor, trainable && e.requires_grad));
  }

  Var<S> operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ShapeError("network: missing parameter '" + name + "'");
    return it->second;
  }

  const std::map<std::string, Var<S>>& vars() const noexcept { return vars_; }

 private:
  std::map<std::string, Var<S>> vars_;
};

/// Gradients of the graph's last backward() for every requires_grad entry.
template <class S>
GradientMap<S> collect_gradients(const Graph<S>& graph, const BoundParams<S>& bound, const ParameterSet<S>& params) {
  GradientMap<S> grads;
  for (const auto& [name, e] : params) {
    if (!e.requires_grad) continue;
    grads.emplace(name, graph.grad(bound[name]));
  }
  return grads;
}

template <class S>
double global_norm(const GradientMap<S>& grads) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) sq += g.data().template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

/// Rescale so the global L2 norm is at most max_norm. Returns the norm before clipping.
template <class S>
double clip_global_norm(GradientMap<S>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const S factor = static_cast<S>(max_norm / norm);
    for (auto& [_, g] : grads) g.data() *= factor;
  }
  return norm;
}

// --- initialization ------------------------------------------------------------

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <class S>
Tensor<S> fan_in_uniform(RngStream& rng, Shape shape, Index fan_in) {
  Tensor<S> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace diffgan
