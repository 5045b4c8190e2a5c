#include "ptlab/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ptlab/common.hpp"

namespace ptlab {

std::string shape_to_string(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

std::string to_hex(uint64_t x) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[x & 0xf];
    x >>= 4;
  }
  return out;
}

template <typename T>
TensorT<T>::TensorT(std::vector<int64_t> s, T fill) : shape(std::move(s)) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  data.assign(static_cast<size_t>(n), fill);
}

template <typename T>
int64_t TensorT<T>::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

template <typename T>
bool TensorT<T>::all_finite() const {
  for (T v : data) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template <typename T>
std::string TensorT<T>::shape_str() const {
  return shape_to_string(shape);
}

template <typename T>
TensorT<T> TensorT<T>::from(std::vector<int64_t> s, std::vector<T> values) {
  TensorT t;
  t.shape = std::move(s);
  int64_t n = 1;
  for (int64_t d : t.shape) n *= d;
  if (n != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("tensor: data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_to_string(t.shape));
  t.data = std::move(values);
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::randn(std::vector<int64_t> s, Rng& rng, T stddev) {
  TensorT t(std::move(s));
  for (T& v : t.data) v = static_cast<T>(rng.next_gauss(0.0, static_cast<double>(stddev)));
  return t;
}

template struct TensorT<float>;
template struct TensorT<double>;

}  // namespace ptlab
