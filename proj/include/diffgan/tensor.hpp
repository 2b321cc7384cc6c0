#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffgan {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <class S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Raised when tensor shapes or layer configurations do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense n-dimensional array, row-major, channel-last.
///
/// The last dimension is the feature (channel) axis. `matrix()` exposes the
/// storage as a column-major Eigen map of shape features x rows, so a batch of
/// windows [B, L, C] becomes a C x (B*L) matrix whose columns are timepoints.
/// Every layer works on that view.
template <class S>
class Tensor {
 public:
  using Scalar = S;
  using Map = Eigen::Map<MatrixX<S>>;
  using ConstMap = Eigen::Map<const MatrixX<S>>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = VectorX<S>::Zero(numel(shape_));
  }

  Tensor(Shape shape, VectorX<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != numel(shape_)) {
      throw ShapeError("tensor: shape " + to_string(shape_) + " needs " +
                       std::to_string(numel(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  Tensor(Shape shape, std::initializer_list<S> values)
      : Tensor(std::move(shape), VectorX<S>::Map(values.begin(), static_cast<Index>(values.size()))) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, S value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor from_vector(Shape shape, const std::vector<S>& values) {
    return Tensor(std::move(shape), VectorX<S>::Map(values.data(), static_cast<Index>(values.size())));
  }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i < 0 ? rank() + i : i)); }
  Index size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.size() == 0; }

  /// Size of the trailing (feature) axis; 1 for a rank-0 tensor.
  Index features() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  Index rows() const noexcept { return features() == 0 ? 0 : size() / features(); }

  VectorX<S>& data() noexcept { return data_; }
  const VectorX<S>& data() const noexcept { return data_; }
  S* raw() noexcept { return data_.data(); }
  const S* raw() const noexcept { return data_.data(); }

  S& operator[](Index i) { return data_[i]; }
  const S& operator[](Index i) const { return data_[i]; }

  S& at(std::initializer_list<Index> idx) { return data_[offset(idx)]; }
  const S& at(std::initializer_list<Index> idx) const { return data_[offset(idx)]; }

  Map matrix() { return Map(data_.data(), features(), rows()); }
  ConstMap matrix() const { return ConstMap(data_.data(), features(), rows()); }

  S item() const {
    if (size() != 1) throw ShapeError("tensor: item() on shape " + to_string(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size()) {
      throw ShapeError("tensor: cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <class T>
  Tensor<T> cast() const {
    return Tensor<T>(shape_, data_.template cast<T>());
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void check_shape(const Shape& shape) {
    for (Index d : shape) {
      if (d < 0) throw ShapeError("tensor: negative dimension in " + to_string(shape));
    }
  }

  Index offset(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank()) {
      throw ShapeError("tensor: index rank mismatch for shape " + to_string(shape_));
    }
    Index off = 0;
    std::size_t k = 0;
    for (Index i : idx) {
      if (i < 0 || i >= shape_[k]) throw std::out_of_range("tensor: index out of range");
      off = off * shape_[k] + i;
      ++k;
    }
    return off;
  }

  Shape shape_;
  VectorX<S> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace diffgan
