#pragma once

// Batch gradient reduction. Accumulates in double in a fixed (name-sorted,
// batch-index) order so results do not depend on how work was scheduled.

#include <map>
#include <utility>

#include "cb/tensor.hpp"

namespace cb {

template <typename S>
class GradAccumT {
 public:
  void add(const ParamSetT<S>& grads, double weight = 1.0) {
    for (const auto& [name, g] : grads.tensors) {
      auto it = acc_.find(name);
      if (it == acc_.end()) {
        it = acc_.emplace(name, Entry{g.shape, VecX<double>::Zero(g.size())}).first;
      } else if (it->second.shape != g.shape) {
        throw ShapeError("grad accumulator: shape mismatch for " + name);
      }
      it->second.sum += weight * g.data.template cast<double>();
    }
  }

  // Sum / divisor, cast back to storage precision.
  ParamSetT<S> mean(double divisor) const {
    ParamSetT<S> out;
    for (const auto& [name, e] : acc_) {
      TensorT<S> t(e.shape);
      t.data = (e.sum / divisor).template cast<S>();
      out.insert(name, std::move(t));
    }
    return out;
  }

  bool empty() const { return acc_.empty(); }

 private:
  struct Entry {
    std::vector<int> shape;
    VecX<double> sum;
  };
  std::map<std::string, Entry> acc_;
};

using GradAccum = GradAccumT<float>;

// out = sum_i weights[i] * parts[i]; missing names are treated as zero.
template <typename S>
ParamSetT<S> combine_grads(const std::vector<std::pair<double, const ParamSetT<S>*>>& parts) {
  GradAccumT<S> acc;
  for (const auto& [w, ps] : parts)
    if (ps != nullptr && w != 0.0) acc.add(*ps, w);
  return acc.mean(1.0);
}

}  // namespace cb
