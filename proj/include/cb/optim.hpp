#pragma once

// Adam with bias correction. Moment state lives beside the parameters it
// serves; the update is a pure function of (params, moments, grads), so
// replaying identical calls from copied state reproduces identical results.

#include <cmath>

#include "cb/tensor.hpp"

namespace cb {

struct AdamHp {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamT {
  ParamSetT<S> m, v;

  void ensure_state(const ParamSetT<S>& params) {
    for (const auto& [name, t] : params.tensors) {
      if (!m.has(name)) m.insert(name, TensorT<S>(t.shape));
      if (!v.has(name)) v.insert(name, TensorT<S>(t.shape));
    }
  }
};

using Adam = AdamT<float>;

// Updates every parameter named in `grads`; other parameters are untouched.
// Increments the ParamSet step counter (shared across all tensors).
template <typename S>
void adam_step(AdamT<S>& opt, ParamSetT<S>& params, const ParamSetT<S>& grads,
               const AdamHp& hp) {
  opt.ensure_state(params);
  params.step += 1;
  const double t = static_cast<double>(params.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  for (const auto& [name, g] : grads.tensors) {
    TensorT<S>& p = params.at(name);
    require_same_shape(p, g, "adam_step");
    require_finite(g, "adam_step gradient for " + name);
    TensorT<S>& m = opt.m.at(name);
    TensorT<S>& v = opt.v.at(name);
    for (long long i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      const double mi = hp.beta1 * m.data[i] + (1.0 - hp.beta1) * gi;
      const double vi = hp.beta2 * v.data[i] + (1.0 - hp.beta2) * gi * gi;
      m.data[i] = static_cast<S>(mi);
      v.data[i] = static_cast<S>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.data[i] = static_cast<S>(p.data[i] - hp.lr * mhat / (std::sqrt(vhat) + hp.eps));
    }
  }
}

}  // namespace cb
