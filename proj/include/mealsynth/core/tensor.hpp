#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mealsynth/core/errors.hpp"
#include "mealsynth/core/rng.hpp"

namespace mealsynth {

// Dense row-major tensor of doubles. All model math runs in float64 so the
// finite-difference gradient checks and the training path share one type.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw ShapeError("tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  // 2-D accessors (row-major)
  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    rng.fill_normal(t.data, 0.0, stddev);
    return t;
  }

  static Tensor uniform(std::vector<int64_t> s, Rng& rng, double lo, double hi) {
    Tensor t(std::move(s));
    rng.fill_uniform(t.data, lo, hi);
    return t;
  }

  Tensor reshaped(std::vector<int64_t> s) const {
    if (numel_of(s) != numel()) throw ShapeError("reshape changes element count");
    return Tensor(std::move(s), data);
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace mealsynth
