#pragma once
// Dense row-major tensors with small fixed-rank shapes (rank <= 5).

#include <algorithm>
#include <array>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace draw {

struct Shape {
  std::array<int, 5> d{1, 1, 1, 1, 1};
  int rank = 0;

  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    if (dims.size() > 5) throw std::invalid_argument("Shape: rank > 5");
    rank = static_cast<int>(dims.size());
    int i = 0;
    for (int v : dims) d[i++] = v;
  }

  int operator[](int i) const { return d[static_cast<size_t>(i)]; }
  int& operator[](int i) { return d[static_cast<size_t>(i)]; }

  long numel() const {
    long n = 1;
    for (int i = 0; i < rank; ++i) n *= d[static_cast<size_t>(i)];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (d[static_cast<size_t>(i)] != o.d[static_cast<size_t>(i)]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "[";
    for (int i = 0; i < rank; ++i) os << (i ? "," : "") << d[static_cast<size_t>(i)];
    os << "]";
    return os.str();
  }
};

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), v(static_cast<size_t>(s.numel()), T(0)) {}
  Tensor(Shape s, std::vector<T> data) : shape(s), v(std::move(data)) {
    if (static_cast<long>(v.size()) != s.numel())
      throw std::invalid_argument("Tensor: data size does not match shape " + s.str());
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, T x) {
    Tensor t(s);
    std::fill(t.v.begin(), t.v.end(), x);
    return t;
  }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  long size() const { return static_cast<long>(v.size()); }
  bool empty() const { return v.empty(); }

  T& operator[](long i) { return v[static_cast<size_t>(i)]; }
  const T& operator[](long i) const { return v[static_cast<size_t>(i)]; }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  bool same_values(const Tensor& o) const { return shape == o.shape && v == o.v; }

  T max_abs_diff(const Tensor& o) const {
    if (shape != o.shape) throw std::invalid_argument("max_abs_diff: shape mismatch");
    T m = 0;
    for (size_t i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v[i] - o.v[i]));
    return m;
  }
};

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& a) {
  Tensor<U> out(a.shape);
  for (long i = 0; i < a.size(); ++i) out[i] = static_cast<U>(a[i]);
  return out;
}

}  // namespace draw
