#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace stylab {

/// Dense row-major N-dimensional array. The universal value type for images,
/// feature maps, parameters and gradients. Float is the working precision;
/// double instantiations exist for finite-difference gradient verification.
template <class S>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s)
      : shape(std::move(s)), data(static_cast<size_t>(count(shape)), S(0)) {}
  TensorT(std::vector<int64_t> s, std::vector<S> values)
      : shape(std::move(s)), data(std::move(values)) {
    if (count(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: shape/value count mismatch");
  }

  static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }
  static TensorT full(std::vector<int64_t> s, S v) {
    TensorT t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }
  static TensorT scalar(S v) { return TensorT({1}, {v}); }

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative extent");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  size_t rank() const { return shape.size(); }
  int64_t dim(size_t i) const { return shape.at(i); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // Row-major offset of a multi-index.
  int64_t offset(const std::vector<int64_t>& idx) const {
    int64_t off = 0;
    for (size_t i = 0; i < shape.size(); ++i) off = off * shape[i] + idx[i];
    return off;
  }
  S& at(const std::vector<int64_t>& idx) { return data[static_cast<size_t>(offset(idx))]; }
  const S& at(const std::vector<int64_t>& idx) const {
    return data[static_cast<size_t>(offset(idx))];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <class S2>
  TensorT<S2> cast() const {
    TensorT<S2> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<S2>(data[i]);
    return out;
  }

  bool all_finite() const {
    for (const S& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

template <class S>
void require_finite(const TensorT<S>& t, const char* where) {
  if (!t.all_finite())
    fail(std::string(where) + ": non-finite value produced (shape " + shape_str(t.shape) + ")");
}

}  // namespace stylab
