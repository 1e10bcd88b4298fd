#pragma once

// Dense row-major tensor on top of Eigen, templated on scalar. Production
// code uses float storage; gradient-check oracles instantiate double through
// the same code paths. Reductions accumulate in double regardless of storage.

#include <Eigen/Dense>

#include <initializer_list>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cb/common.hpp"

namespace cb {

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

inline long long numel_of(const std::vector<int>& shape) {
  long long n = 1;
  for (int d : shape) n *= d;
  return n;
}

template <typename S>
struct TensorT {
  std::vector<int> shape;
  VecX<S> data;  // row-major flattening of `shape`

  TensorT() = default;
  explicit TensorT(std::vector<int> sh) : shape(std::move(sh)) {
    data = VecX<S>::Zero(numel_of(shape));
  }
  TensorT(std::vector<int> sh, VecX<S> d) : shape(std::move(sh)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  long long size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  S& operator[](long long i) { return data[i]; }
  S operator[](long long i) const { return data[i]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;
using Tensord = TensorT<double>;

template <typename S>
TensorT<S> zeros(std::vector<int> shape) {
  return TensorT<S>(std::move(shape));
}

template <typename S>
TensorT<S> full(std::vector<int> shape, S value) {
  TensorT<S> t(std::move(shape));
  t.data.setConstant(value);
  return t;
}

template <typename S>
TensorT<S> from_values(std::vector<int> shape, std::initializer_list<S> vals) {
  TensorT<S> t(std::move(shape));
  if (static_cast<long long>(vals.size()) != t.size())
    throw ShapeError("from_values: count mismatch for " + shape_str(t.shape));
  long long i = 0;
  for (S v : vals) t.data[i++] = v;
  return t;
}

template <typename S>
TensorT<S> uniform_tensor(std::vector<int> shape, S lo, S hi, Rng& rng) {
  TensorT<S> t(std::move(shape));
  for (long long i = 0; i < t.size(); ++i)
    t.data[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
}

template <typename S>
bool all_finite(const TensorT<S>& t) {
  return t.data.allFinite();
}

template <typename S>
void require_finite(const TensorT<S>& t, const std::string& where) {
  if (!all_finite(t)) throw NumericError("non-finite values in " + where);
}

// Two-axis view of a flat tensor. rows*cols must cover the buffer.
template <typename S>
Eigen::Map<MatX<S>> as_matrix(TensorT<S>& t, int rows, int cols) {
  if (static_cast<long long>(rows) * cols != t.size())
    throw ShapeError("as_matrix: " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " does not cover " + shape_str(t.shape));
  return Eigen::Map<MatX<S>>(t.data.data(), rows, cols);
}

template <typename S>
Eigen::Map<const MatX<S>> as_matrix(const TensorT<S>& t, int rows, int cols) {
  if (static_cast<long long>(rows) * cols != t.size())
    throw ShapeError("as_matrix: " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " does not cover " + shape_str(t.shape));
  return Eigen::Map<const MatX<S>>(t.data.data(), rows, cols);
}

// Named parameter collection plus the optimizer step counter.
template <typename S>
struct ParamSetT {
  std::map<std::string, TensorT<S>> tensors;  // ordered: deterministic iteration
  long step = 0;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }

  TensorT<S>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }
  const TensorT<S>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("unknown parameter: " + name);
    return it->second;
  }

  void insert(const std::string& name, TensorT<S> t) {
    if (has(name)) throw Error("duplicate parameter name: " + name);
    tensors.emplace(name, std::move(t));
  }

  long long total_size() const {
    long long n = 0;
    for (const auto& [k, v] : tensors) n += v.size();
    return n;
  }
};

using ParamSet = ParamSetT<float>;

// Byte hash over names and raw storage, in name order. Used by the
// freeze/isolation contracts.
template <typename S>
std::uint64_t param_hash(const ParamSetT<S>& ps) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : ps.tensors) {
    h = fnv1a64(name, h);
    h = fnv1a64(t.data.data(), sizeof(S) * static_cast<std::size_t>(t.size()), h);
  }
  return h;
}

}  // namespace cb
