#pragma once

// Scalar losses with analytic gradients. Values accumulate in double.

#include <cmath>

#include "cb/tensor.hpp"

namespace cb {

template <typename S>
struct LossGradT {
  double value = 0.0;
  TensorT<S> grad;  // w.r.t. the first argument
};

using LossGrad = LossGradT<float>;

// Mean over all elements of the squared difference.
template <typename S>
LossGradT<S> mse(const TensorT<S>& pred, const TensorT<S>& target) {
  require_same_shape(pred, target, "mse");
  LossGradT<S> out;
  out.grad = TensorT<S>(pred.shape);
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (long long i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    acc += d * d;
    out.grad.data[i] = static_cast<S>(2.0 * d / n);
  }
  out.value = acc / n;
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Numerically stable binary cross entropy on a single logit:
//   max(l,0) - l*y + log(1 + exp(-|l|)).
// Gradient w.r.t. the logit is sigmoid(l) - y.
template <typename S>
LossGradT<S> bce_with_logits(const TensorT<S>& logit, int label) {
  if (label != 0 && label != 1)
    throw Error("bce_with_logits: label must be 0 or 1, got " + std::to_string(label));
  if (logit.size() != 1)
    throw ShapeError("bce_with_logits expects a scalar logit, got " +
                     shape_str(logit.shape));
  const double l = static_cast<double>(logit.data[0]);
  LossGradT<S> out;
  out.value = std::max(l, 0.0) - l * label + std::log1p(std::exp(-std::abs(l)));
  out.grad = TensorT<S>(logit.shape);
  out.grad.data[0] = static_cast<S>(sigmoid(l) - label);
  return out;
}

inline double bce_logit_value(double logit, int label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace cb
