#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "ptlab/rng.hpp"

namespace ptlab {

// Dense row-major tensor. Rank is 1 or 2 in practice; batch dimensions are
// handled by running one graph per sequence.
template <typename T>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s, T fill = T(0));

  int64_t numel() const;
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  T at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;

  static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }
  static TensorT full(std::vector<int64_t> s, T v) { return TensorT(std::move(s), v); }
  static TensorT from(std::vector<int64_t> s, std::vector<T> values);
  static TensorT randn(std::vector<int64_t> s, Rng& rng, T stddev);
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

std::string shape_to_string(const std::vector<int64_t>& s);

}  // namespace ptlab
