#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace geomae {

using Index = std::int64_t;
using Shape = std::vector<Index>;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void invalid(const std::string& msg) {
  throw std::invalid_argument(msg);
}

#define GEOMAE_CHECK(cond, msg)        \
  do {                                 \
    if (!(cond)) ::geomae::invalid(msg); \
  } while (0)

inline Index numel_of(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major double tensor with value semantics.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<std::size_t>(numel_of(shape)), 0.0) {}
  Tensor(Shape s, double fill) : shape(std::move(s)), v(static_cast<std::size_t>(numel_of(shape)), fill) {}
  Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
    GEOMAE_CHECK(static_cast<Index>(v.size()) == numel_of(shape), "tensor data does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double x) { return Tensor(std::move(s), x); }
  static Tensor scalar(double x) { return Tensor(Shape{1}, std::vector<double>{x}); }

  Index numel() const { return static_cast<Index>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  Index dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double& operator[](Index i) { return v[static_cast<std::size_t>(i)]; }
  double operator[](Index i) const { return v[static_cast<std::size_t>(i)]; }

  double& at(Index i, Index j) { return v[static_cast<std::size_t>(i * shape[1] + j)]; }
  double at(Index i, Index j) const { return v[static_cast<std::size_t>(i * shape[1] + j)]; }
  double& at(Index i, Index j, Index k) {
    return v[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  double at(Index i, Index j, Index k) const {
    return v[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  double& at(Index i, Index j, Index k, Index l) {
    return v[static_cast<std::size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
  }
  double at(Index i, Index j, Index k, Index l) const {
    return v[static_cast<std::size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
  }
  double& at(Index i, Index j, Index k, Index l, Index m) {
    return v[static_cast<std::size_t>((((i * shape[1] + j) * shape[2] + k) * shape[3] + l) * shape[4] + m)];
  }
  double at(Index i, Index j, Index k, Index l, Index m) const {
    return v[static_cast<std::size_t>((((i * shape[1] + j) * shape[2] + k) * shape[3] + l) * shape[4] + m)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool all_finite(const Tensor& t) {
  for (double x : t.v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace geomae
