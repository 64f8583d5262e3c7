#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "lobwm/common.hpp"

namespace lobwm {

// Row-major double tensor. Rank 1 and 2 cover every model here.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::initializer_list<std::size_t> s, std::vector<double> data)
      : shape(s), v(std::move(data)) {
    if (numel(shape) != v.size()) throw ValidationError("tensor: shape/value size mismatch");
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  static Tensor zeros(std::initializer_list<std::size_t> s) {
    Tensor t;
    t.shape = s;
    t.v.assign(numel(t.shape), 0.0);
    return t;
  }
  static Tensor zeros(const std::vector<std::size_t>& s) {
    Tensor t;
    t.shape = s;
    t.v.assign(numel(t.shape), 0.0);
    return t;
  }
  static Tensor vec(std::vector<double> data) {
    Tensor t;
    t.shape = {data.size()};
    t.v = std::move(data);
    return t;
  }

  std::size_t size() const { return v.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 0); }
  std::size_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

  double& at(std::size_t r, std::size_t c) { return v[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * shape[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "{";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "}";
  }
};

}  // namespace lobwm
