#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqdet {

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Dense row-major tensor of doubles, rank 0..3.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<int64_t>(v.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: value count does not match shape " + shape_str());
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.v.assign(static_cast<size_t>(numel_of(t.shape)), 0.0);
    return t;
  }

  static Tensor full(std::vector<int> s, double value) {
    Tensor t = zeros(std::move(s));
    for (double& x : t.v) x = value;
    return t;
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  static Tensor eye(int n) {
    Tensor t = zeros({n, n});
    for (int i = 0; i < n; ++i) t.v[static_cast<size_t>(i) * n + i] = 1.0;
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double& at(int i) { return v[static_cast<size_t>(i)]; }
  double at(int i) const { return v[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }
  double& at(int b, int i, int j) {
    return v[(static_cast<size_t>(b) * shape[1] + i) * shape[2] + j];
  }
  double at(int b, int i, int j) const {
    return v[(static_cast<size_t>(b) * shape[1] + i) * shape[2] + j];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) os << 'x';
      os << shape[i];
    }
    os << ']';
    return os.str();
  }
};

inline std::string shapes_str(const Tensor& a, const Tensor& b) {
  return a.shape_str() + " vs " + b.shape_str();
}

}  // namespace eqdet
