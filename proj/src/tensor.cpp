#include "sinesr/tensor.hpp"

#include <cmath>

namespace sinesr {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + "]";
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() +
                     " vs " + b.str());
  }
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  if (items.empty()) throw ShapeError("stack: no items");
  Shape s = items.front().shape();
  int total = 0;
  for (const auto& t : items) {
    if (t.c() != s.c || t.h() != s.h || t.w() != s.w) {
      throw ShapeError("stack: mismatched item " + t.shape().str());
    }
    total += t.n();
  }
  Tensor<T> out(Shape{total, s.c, s.h, s.w});
  T* dst = out.data();
  for (const auto& t : items) dst = std::copy(t.data(), t.data() + t.size(), dst);
  return out;
}

template <typename T>
Tensor<T>& operator+=(Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

template <typename T>
Tensor<T>& operator-=(Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

template <typename T>
Tensor<T>& operator*=(Tensor<T>& a, T s) {
  for (auto& v : a.values()) v *= s;
  return a;
}

template <typename T>
double sum(const Tensor<T>& t) {
  double acc = 0.0;
  for (T v : t.values()) acc += v;
  return acc;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

#define SINESR_INSTANTIATE(T)                                        \
  template Tensor<T> stack(std::span<const Tensor<T>>);              \
  template Tensor<T>& operator+=(Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T>& operator-=(Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T>& operator*=(Tensor<T>&, T);                     \
  template double sum(const Tensor<T>&);                             \
  template double dot(const Tensor<T>&, const Tensor<T>&);           \
  template double max_abs_diff(const Tensor<T>&, const Tensor<T>&);

SINESR_INSTANTIATE(float)
SINESR_INSTANTIATE(double)
#undef SINESR_INSTANTIATE

}  // namespace sinesr
