#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sinesr/errors.hpp"

namespace sinesr {

// NCHW extent of a dense tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense batch of planar images (N x C x H x W), row-major within a plane.
// Every network, loss and metric in the toolkit works on this type; a single
// image is a tensor with n == 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw ShapeError("negative tensor extent " + shape.str());
    }
  }
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T* sample(int n) { return data_.data() + n * shape_.sample(); }
  const T* sample(int n) const { return data_.data() + n * shape_.sample(); }
  T* plane(int n, int c) {
    return data_.data() + n * shape_.sample() + c * shape_.plane();
  }
  const T* plane(int n, int c) const {
    return data_.data() + n * shape_.sample() + c * shape_.plane();
  }

  T& operator()(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
                     shape_.w + x];
  }
  const T& operator()(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
                     shape_.w + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  // Copy of samples [first, first + count).
  Tensor slice(int first, int count) const {
    if (first < 0 || count < 0 || first + count > shape_.n) {
      throw ShapeError("slice out of range");
    }
    Tensor out(Shape{count, shape_.c, shape_.h, shape_.w});
    std::copy(sample(first), sample(first) + count * shape_.sample(), out.data());
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

// A single image: n == 1, planar RGB (or gray). The intensity domain is a
// convention of the producer: [0, 1] in the degradation-learning stage,
// [0, 255] everywhere else.
using Image = Tensor<float>;

void require_same_shape(const Shape& a, const Shape& b, const char* what);

// Stacks single-sample tensors of identical shape into one batch.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items);

template <typename T>
Tensor<T>& operator+=(Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T>& operator-=(Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T>& operator*=(Tensor<T>& a, T s);
template <typename T>
Tensor<T> operator+(Tensor<T> a, const Tensor<T>& b) {
  a += b;
  return a;
}
template <typename T>
Tensor<T> operator-(Tensor<T> a, const Tensor<T>& b) {
  a -= b;
  return a;
}
template <typename T>
Tensor<T> operator*(Tensor<T> a, T s) {
  a *= s;
  return a;
}

template <typename T>
double sum(const Tensor<T>& t);
template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace sinesr
