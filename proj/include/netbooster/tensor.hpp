#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace netbooster {

/// All recoverable failures surface as this type with a message naming the
/// offending dimension, node, or key.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline void check_shape_valid(const Shape& s, const char* what) {
  if (s.empty() || s.size() > 4)
    throw Error(std::string(what) + ": shape order must be 1..4, got " + shape_str(s));
  for (auto e : s)
    if (e < 1) throw Error(std::string(what) + ": extent < 1 in shape " + shape_str(s));
}

/// Dense row-major tensor of order 1..4. Activations are NxCxHxW, conv
/// kernels KhxKwxCinxCout, dense weights InxOut.
template <class S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;

  explicit Tensor(Shape s) : shape(std::move(s)) {
    check_shape_valid(shape, "Tensor");
    data.assign(static_cast<std::size_t>(shape_numel(shape)), S(0));
  }

  Tensor(Shape s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
    check_shape_valid(shape, "Tensor");
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw Error("Tensor: shape " + shape_str(shape) + " does not match data length " +
                  std::to_string(data.size()));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, S v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor ones(Shape s) { return full(std::move(s), S(1)); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int order() const { return static_cast<int>(shape.size()); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator()(std::int64_t a) { return data[static_cast<std::size_t>(a)]; }
  S operator()(std::int64_t a) const { return data[static_cast<std::size_t>(a)]; }

  S& operator()(std::int64_t a, std::int64_t b) {
    return data[static_cast<std::size_t>(a * shape[1] + b)];
  }
  S operator()(std::int64_t a, std::int64_t b) const {
    return data[static_cast<std::size_t>(a * shape[1] + b)];
  }

  S& operator()(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    return data[static_cast<std::size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
  S operator()(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
    return data[static_cast<std::size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <class S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b))
    throw Error("tensor add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor<S> out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

template <class S>
Tensor<S> operator*(S k, const Tensor<S>& a) {
  Tensor<S> out = a;
  for (auto& v : out.data) v *= k;
  return out;
}

template <class To, class From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out;
  out.shape = t.shape;
  out.data.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

template <class S>
Tensor<S> random_uniform(Shape s, S lo, S hi, std::mt19937_64& rng) {
  Tensor<S> t(std::move(s));
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t.data) v = static_cast<S>(dist(rng));
  return t;
}

template <class S>
Tensor<S> random_normal(Shape s, S mean, S stddev, std::mt19937_64& rng) {
  Tensor<S> t(std::move(s));
  std::normal_distribution<double> dist(static_cast<double>(mean), static_cast<double>(stddev));
  for (auto& v : t.data) v = static_cast<S>(dist(rng));
  return t;
}

/// Relative error convention used by every tolerance check in the project:
/// max|a-b| / (max|b| + eps), eps = 1e-30.
template <class S>
double max_rel_error(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b))
    throw Error("max_rel_error: shape mismatch " + shape_str(a.shape) + " vs " +
                shape_str(b.shape));
  double max_diff = 0.0, max_ref = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(static_cast<double>(a.data[i]) -
                                           static_cast<double>(b.data[i])));
    max_ref = std::max(max_ref, std::abs(static_cast<double>(b.data[i])));
  }
  return max_diff / (max_ref + 1e-30);
}

template <class S>
bool bitwise_equal(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(S)) == 0;
}

}  // namespace netbooster
