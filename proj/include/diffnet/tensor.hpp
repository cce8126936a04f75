// Copyright (c) 2026 the itsa-lab authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major N-d array, the value carrier for every module.

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace diffnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

/// Dense multi-dimensional array with row-major flat storage.
/// Invariant: data().size() == product(shape()).
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T{0}) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      std::ostringstream os;
      os << "tensor data length " << data_.size() << " does not match shape " << shape_str(shape_);
      throw std::invalid_argument(os.str());
    }
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same storage, new shape; element count must match.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
      std::ostringstream os;
      os << "reshape " << shape_str(shape_) << " -> " << shape_str(shape) << ": element count mismatch";
      throw std::invalid_argument(os.str());
    }
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    std::ostringstream os;
    os << what << ": shape mismatch " << shape_str(a.shape()) << " vs " << shape_str(b.shape());
    throw std::invalid_argument(os.str());
  }
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) {
    throw std::runtime_error(std::string(what) + ": non-finite value encountered");
  }
}

// dst += a * src
template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src, T a) {
  check_same_shape(dst, src, "axpy");
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += a * s[i];
}

template <typename T>
void scale(Tensor<T>& t, T a) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= a;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <typename T>
double squared_norm(const Tensor<T>& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += static_cast<double>(t[i]) * static_cast<double>(t[i]);
  return acc;
}

template <typename T>
double l2_norm(const Tensor<T>& t) {
  return std::sqrt(squared_norm(t));
}

/// Deterministic order-independent reduction: pairwise tree sum.
inline double pairwise_sum(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  std::vector<double> level(v);
  while (level.size() > 1) {
    std::vector<double> next((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next[i / 2] = level[i] + level[i + 1];
    if (level.size() % 2 == 1) next.back() = level.back();
    level = std::move(next);
  }
  return level[0];
}

}  // namespace diffnet
