#pragma once

// Central finite-difference validation of backward passes. The probe writes
// the perturbed parameter into storage and measures the step it actually got
// back, so the estimate is exact for linear nets even at low storage
// precision.

#include <cmath>
#include <utility>

#include "cb/loss.hpp"
#include "cb/net.hpp"

namespace cb {

enum class LossKind { Mse, Bce };

template <typename S>
struct CheckLossT {
  LossKind kind = LossKind::Mse;
  TensorT<S> target;  // Mse
  int label = 1;      // Bce
};

template <typename S>
double eval_scalar_loss(const NetT<S>& net, const TensorT<S>& x,
                        const CheckLossT<S>& loss) {
  TensorT<S> pred = forward(net, x);
  if (loss.kind == LossKind::Mse) return mse(pred, loss.target).value;
  return bce_with_logits(pred, loss.label).value;
}

// Max relative error between analytic parameter gradients and central finite
// differences. Probes every parameter, or a deterministic subsample of
// `max_probes` (>= 200 recommended) when the net is larger and a sampler rng
// is supplied.
// denom_floor absorbs finite-difference noise on near-zero gradients (floor
// around 1e-6 suits double storage, 1e-3 float).
template <typename S>
double check_gradients(const NetT<S>& net, const TensorT<S>& x,
                       const CheckLossT<S>& loss, double h, long max_probes = 0,
                       Rng* sampler = nullptr, double denom_floor = 1e-6) {
  TraceT<S> trace;
  TensorT<S> pred = forward(net, x, &trace);
  LossGradT<S> lg = loss.kind == LossKind::Mse ? mse(pred, loss.target)
                                               : bce_with_logits(pred, loss.label);
  BackpropT<S> bp = backward(net, trace, lg.grad);

  // (tensor name, flat index) probe list
  std::vector<std::pair<std::string, long long>> probes;
  const long long total = net.params.total_size();
  if (max_probes > 0 && sampler != nullptr && total > max_probes) {
    std::vector<std::pair<std::string, long long>> all;
    all.reserve(total);
    for (const auto& [name, t] : net.params.tensors)
      for (long long i = 0; i < t.size(); ++i) all.emplace_back(name, i);
    for (long k = 0; k < max_probes; ++k) {
      const std::size_t j = k + sampler->index(all.size() - k);
      std::swap(all[k], all[j]);
      probes.push_back(all[k]);
    }
  } else {
    for (const auto& [name, t] : net.params.tensors)
      for (long long i = 0; i < t.size(); ++i) probes.emplace_back(name, i);
  }

  NetT<S> work = net;
  double max_rel = 0.0;
  for (const auto& [name, idx] : probes) {
    TensorT<S>& t = work.params.at(name);
    const S orig = t.data[idx];
    t.data[idx] = static_cast<S>(orig + h);
    const S stored_plus = t.data[idx];
    const double lp = eval_scalar_loss(work, x, loss);
    t.data[idx] = static_cast<S>(orig - h);
    const S stored_minus = t.data[idx];
    const double lm = eval_scalar_loss(work, x, loss);
    t.data[idx] = orig;
    if (!std::isfinite(lp) || !std::isfinite(lm))
      throw NumericError("check_gradients: non-finite loss while probing " + name);
    const double h_eff = static_cast<double>(stored_plus) - static_cast<double>(stored_minus);
    if (h_eff == 0.0) throw NumericError("check_gradients: step underflow probing " + name);
    const double fd = (lp - lm) / h_eff;
    const double an = static_cast<double>(bp.grads.at(name).data[idx]);
    const double denom = std::max({std::abs(fd), std::abs(an), denom_floor});
    if (fd == 0.0 && an == 0.0) continue;  // flat direction, error defined as 0
    max_rel = std::max(max_rel, std::abs(fd - an) / denom);
  }
  return max_rel;
}

// Smallest |pre-activation| feeding any relu layer; lets property tests keep
// inputs away from the kink.
template <typename S>
double min_relu_preactivation(const NetT<S>& net, const TensorT<S>& x) {
  TraceT<S> trace;
  forward(net, x, &trace);
  double m = 1e300;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (net.layers[li].kind != LayerKind::Relu) continue;
    const auto& pre = trace.acts[li];
    for (long long i = 0; i < pre.size(); ++i)
      m = std::min(m, std::abs(static_cast<double>(pre.data[i])));
  }
  return m;
}

}  // namespace cb
