#pragma once

// Minimal feed-forward network: dense / conv / relu / flatten / spatial
// softmax layers over TensorT, with hand-written backward passes. Convs go
// through im2col + Eigen GEMM. Forward and backward are pure functions of
// (params, input); all layers are deterministic.

#include <cmath>
#include <string>
#include <vector>

#include "cb/tensor.hpp"

namespace cb {

enum class LayerKind { Dense, Conv, Relu, Flatten, SpatialSoftmax };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::SpatialSoftmax: return "spatial_softmax";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind;
  std::string name;  // parameter key prefix (dense/conv only)
  std::vector<int> in_shape;
  std::vector<int> out_shape;
  int ksize = 0;
  int stride = 1;
};

template <typename S>
struct NetT {
  std::vector<LayerSpec> layers;
  ParamSetT<S> params;
  bool deterministic = true;
  std::vector<int> in_shape;
  std::vector<int> out_shape;
};

using Net = NetT<float>;

// Chains layer shapes from a fixed input shape and initializes parameters
// with Uniform(+-sqrt(6/(fan_in+fan_out))) weights and zero biases.
template <typename S>
class NetBuilderT {
 public:
  NetBuilderT(std::vector<int> input_shape, Rng& rng)
      : shape_(std::move(input_shape)), in_shape_(shape_), rng_(rng) {}

  NetBuilderT& dense(int out_dim) {
    if (shape_.size() != 1)
      throw ShapeError("dense layer needs rank-1 input, got " + shape_str(shape_));
    const int in_dim = shape_[0];
    LayerSpec l{LayerKind::Dense, next_name("dense"), shape_, {out_dim}};
    const S bound = static_cast<S>(std::sqrt(6.0 / (in_dim + out_dim)));
    params_.insert(l.name + ".w",
                   uniform_tensor<S>({out_dim, in_dim}, -bound, bound, rng_));
    params_.insert(l.name + ".b", zeros<S>({out_dim}));
    push(std::move(l));
    return *this;
  }

  NetBuilderT& conv(int out_c, int ksize, int stride) {
    if (shape_.size() != 3)
      throw ShapeError("conv layer needs CxHxW input, got " + shape_str(shape_));
    const int in_c = shape_[0], h = shape_[1], w = shape_[2];
    if (h < ksize || w < ksize)
      throw ShapeError("conv kernel " + std::to_string(ksize) + " exceeds input " +
                       shape_str(shape_));
    const int oh = (h - ksize) / stride + 1;
    const int ow = (w - ksize) / stride + 1;
    LayerSpec l{LayerKind::Conv, next_name("conv"), shape_, {out_c, oh, ow}, ksize,
                stride};
    const double fan_in = static_cast<double>(in_c) * ksize * ksize;
    const double fan_out = static_cast<double>(out_c) * ksize * ksize;
    const S bound = static_cast<S>(std::sqrt(6.0 / (fan_in + fan_out)));
    params_.insert(l.name + ".w",
                   uniform_tensor<S>({out_c, in_c, ksize, ksize}, -bound, bound, rng_));
    params_.insert(l.name + ".b", zeros<S>({out_c}));
    push(std::move(l));
    return *this;
  }

  NetBuilderT& relu() {
    push({LayerKind::Relu, next_name("relu"), shape_, shape_});
    return *this;
  }

  NetBuilderT& flatten() {
    push({LayerKind::Flatten, next_name("flatten"), shape_,
          {static_cast<int>(numel_of(shape_))}});
    return *this;
  }

  NetBuilderT& spatial_softmax() {
    if (shape_.size() != 3)
      throw ShapeError("spatial_softmax needs CxHxW input, got " + shape_str(shape_));
    push({LayerKind::SpatialSoftmax, next_name("ssmax"), shape_, {shape_[0], 2}});
    return *this;
  }

  NetT<S> build() {
    NetT<S> net;
    net.layers = std::move(layers_);
    net.params = std::move(params_);
    net.in_shape = in_shape_;
    net.out_shape = shape_;
    return net;
  }

 private:
  std::string next_name(const char* base) {
    return std::string(base) + std::to_string(layers_.size());
  }
  void push(LayerSpec l) {
    shape_ = l.out_shape;
    layers_.push_back(std::move(l));
  }

  std::vector<LayerSpec> layers_;
  ParamSetT<S> params_;
  std::vector<int> shape_;
  std::vector<int> in_shape_;
  Rng& rng_;
};

using NetBuilder = NetBuilderT<float>;

// ---- spatial softmax as a free function (also used by the layer) ----

// Per channel: softmax over HxW, then expected pixel coordinate normalized to
// [-1,1]^2. Output is {C,2} as (x, y) pairs. Subtracting the max keeps the
// result exactly invariant to constant shifts.
template <typename S>
TensorT<S> spatial_softmax(const TensorT<S>& featmap) {
  if (featmap.rank() != 3)
    throw ShapeError("spatial_softmax expects CxHxW, got " + shape_str(featmap.shape));
  const int c = featmap.shape[0], h = featmap.shape[1], w = featmap.shape[2];
  TensorT<S> out({c, 2});
  const long long hw = static_cast<long long>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    const S* a = featmap.data.data() + static_cast<long long>(ch) * hw;
    S m = a[0];
    for (long long i = 1; i < hw; ++i) m = std::max(m, a[i]);
    double z = 0.0, ex = 0.0, ey = 0.0;
    for (int i = 0; i < h; ++i) {
      const double cy = (h > 1) ? 2.0 * i / (h - 1) - 1.0 : 0.0;
      for (int j = 0; j < w; ++j) {
        const double cx = (w > 1) ? 2.0 * j / (w - 1) - 1.0 : 0.0;
        const double p = std::exp(static_cast<double>(a[i * w + j] - m));
        z += p;
        ex += p * cx;
        ey += p * cy;
      }
    }
    out.data[2 * ch] = static_cast<S>(ex / z);
    out.data[2 * ch + 1] = static_cast<S>(ey / z);
  }
  return out;
}

namespace detail {

template <typename S>
void dense_forward(const LayerSpec& l, const ParamSetT<S>& ps, const TensorT<S>& x,
                   TensorT<S>& y) {
  const auto& w = ps.at(l.name + ".w");
  const auto& b = ps.at(l.name + ".b");
  const int out_dim = l.out_shape[0], in_dim = l.in_shape[0];
  y = TensorT<S>(l.out_shape);
  y.data.noalias() = as_matrix(w, out_dim, in_dim) * x.data;
  y.data += b.data;
}

template <typename S>
void conv_im2col(const LayerSpec& l, const TensorT<S>& x, MatX<S>& patches) {
  const int in_c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
  const int oh = l.out_shape[1], ow = l.out_shape[2];
  const int k = l.ksize, s = l.stride;
  patches.resize(static_cast<long long>(oh) * ow, static_cast<long long>(in_c) * k * k);
  for (int r = 0; r < oh * ow; ++r) {
    const int oy = r / ow, ox = r % ow;
    S* dst = patches.data() + static_cast<long long>(r) * patches.cols();
    for (int c = 0; c < in_c; ++c) {
      const S* src = x.data.data() + (static_cast<long long>(c) * h + oy * s) * w + ox * s;
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) dst[c * k * k + i * k + j] = src[i * w + j];
      }
    }
  }
}

template <typename S>
void conv_forward(const LayerSpec& l, const ParamSetT<S>& ps, const TensorT<S>& x,
                  TensorT<S>& y) {
  const auto& w = ps.at(l.name + ".w");
  const auto& b = ps.at(l.name + ".b");
  const int out_c = l.out_shape[0];
  const long long ohw = static_cast<long long>(l.out_shape[1]) * l.out_shape[2];
  const long long ckk = static_cast<long long>(l.in_shape[0]) * l.ksize * l.ksize;
  MatX<S> patches;
  conv_im2col(l, x, patches);
  y = TensorT<S>(l.out_shape);
  auto ym = as_matrix(y, out_c, static_cast<int>(ohw));
  ym.noalias() = as_matrix(w, out_c, static_cast<int>(ckk)) * patches.transpose();
  ym.colwise() += b.data;
}

}  // namespace detail

template <typename S>
struct TraceT {
  // acts[0] is the input, acts[i+1] the output of layer i.
  std::vector<TensorT<S>> acts;
};

using Trace = TraceT<float>;

template <typename S>
TensorT<S> forward(const NetT<S>& net, const TensorT<S>& x, TraceT<S>* trace = nullptr) {
  if (!net.layers.empty() && x.shape != net.in_shape)
    throw ShapeError("forward: input shape " + shape_str(x.shape) +
                     " does not match net input " + shape_str(net.in_shape));
  if (trace) {
    trace->acts.clear();
    trace->acts.reserve(net.layers.size() + 1);
    trace->acts.push_back(x);
  }
  TensorT<S> cur = x;
  for (const LayerSpec& l : net.layers) {
    TensorT<S> nxt;
    switch (l.kind) {
      case LayerKind::Dense:
        detail::dense_forward(l, net.params, cur, nxt);
        break;
      case LayerKind::Conv:
        detail::conv_forward(l, net.params, cur, nxt);
        break;
      case LayerKind::Relu:
        nxt = cur;
        nxt.data = nxt.data.cwiseMax(S(0));
        break;
      case LayerKind::Flatten:
        nxt = TensorT<S>(l.out_shape, cur.data);
        break;
      case LayerKind::SpatialSoftmax:
        nxt = spatial_softmax(cur);
        break;
    }
    if (!all_finite(nxt)) throw NumericError("non-finite forward output in layer " + l.name);
    cur = std::move(nxt);
    if (trace) trace->acts.push_back(cur);
  }
  return cur;
}

template <typename S>
struct BackpropT {
  ParamSetT<S> grads;     // same names/shapes as the net's layer parameters
  TensorT<S> input_grad;  // dL/dx
};

using Backprop = BackpropT<float>;

// Reverse pass over a recorded trace. `upstream` is dL/d(output).
template <typename S>
BackpropT<S> backward(const NetT<S>& net, const TraceT<S>& trace,
                      const TensorT<S>& upstream) {
  if (trace.acts.size() != net.layers.size() + 1)
    throw Error("backward: trace does not match net");
  if (upstream.shape != trace.acts.back().shape)
    throw ShapeError("backward: upstream shape " + shape_str(upstream.shape) +
                     " does not match output " + shape_str(trace.acts.back().shape));
  BackpropT<S> bp;
  TensorT<S> g = upstream;
  for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
    const LayerSpec& l = net.layers[li];
    const TensorT<S>& x = trace.acts[li];
    TensorT<S> gx;
    switch (l.kind) {
      case LayerKind::Dense: {
        const auto& w = net.params.at(l.name + ".w");
        const int out_dim = l.out_shape[0], in_dim = l.in_shape[0];
        TensorT<S> gw({out_dim, in_dim});
        as_matrix(gw, out_dim, in_dim).noalias() = g.data * x.data.transpose();
        bp.grads.insert(l.name + ".w", std::move(gw));
        bp.grads.insert(l.name + ".b", TensorT<S>({out_dim}, g.data));
        gx = TensorT<S>(l.in_shape);
        gx.data.noalias() = as_matrix(w, out_dim, in_dim).transpose() * g.data;
        break;
      }
      case LayerKind::Conv: {
        const auto& w = net.params.at(l.name + ".w");
        const int out_c = l.out_shape[0];
        const int ohw = l.out_shape[1] * l.out_shape[2];
        const int ckk = l.in_shape[0] * l.ksize * l.ksize;
        MatX<S> patches;
        detail::conv_im2col(l, x, patches);
        auto gm = as_matrix(g, out_c, ohw);
        TensorT<S> gw(w.shape);
        as_matrix(gw, out_c, ckk).noalias() = gm * patches;
        TensorT<S> gb({out_c});
        gb.data = gm.rowwise().sum();
        bp.grads.insert(l.name + ".w", std::move(gw));
        bp.grads.insert(l.name + ".b", std::move(gb));
        // col2im scatter of dPatches = G^T * W
        MatX<S> gpatches(ohw, ckk);
        gpatches.noalias() = gm.transpose() * as_matrix(w, out_c, ckk);
        gx = TensorT<S>(l.in_shape);
        const int in_c = l.in_shape[0], h = l.in_shape[1], wdt = l.in_shape[2];
        const int k = l.ksize, s = l.stride, ow = l.out_shape[2];
        for (int r = 0; r < ohw; ++r) {
          const int oy = r / ow, ox = r % ow;
          const S* src = gpatches.data() + static_cast<long long>(r) * ckk;
          for (int c = 0; c < in_c; ++c) {
            S* dst = gx.data.data() + (static_cast<long long>(c) * h + oy * s) * wdt + ox * s;
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j) dst[i * wdt + j] += src[c * k * k + i * k + j];
          }
        }
        break;
      }
      case LayerKind::Relu: {
        gx = g;
        const TensorT<S>& y = trace.acts[li + 1];
        for (long long i = 0; i < gx.size(); ++i)
          if (y.data[i] <= S(0)) gx.data[i] = S(0);
        break;
      }
      case LayerKind::Flatten:
        gx = TensorT<S>(l.in_shape, g.data);
        break;
      case LayerKind::SpatialSoftmax: {
        const int c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        const long long hw = static_cast<long long>(h) * w;
        gx = TensorT<S>(l.in_shape);
        const TensorT<S>& out = trace.acts[li + 1];
        for (int ch = 0; ch < c; ++ch) {
          const S* a = x.data.data() + ch * hw;
          S m = a[0];
          for (long long i = 1; i < hw; ++i) m = std::max(m, a[i]);
          double z = 0.0;
          for (long long i = 0; i < hw; ++i) z += std::exp(static_cast<double>(a[i] - m));
          const double ex = out.data[2 * ch], ey = out.data[2 * ch + 1];
          const double gxc = g.data[2 * ch], gyc = g.data[2 * ch + 1];
          for (int i = 0; i < h; ++i) {
            const double cy = (h > 1) ? 2.0 * i / (h - 1) - 1.0 : 0.0;
            for (int j = 0; j < w; ++j) {
              const double cx = (w > 1) ? 2.0 * j / (w - 1) - 1.0 : 0.0;
              const double p = std::exp(static_cast<double>(a[i * w + j] - m)) / z;
              gx.data[ch * hw + i * w + j] =
                  static_cast<S>(p * (gxc * (cx - ex) + gyc * (cy - ey)));
            }
          }
        }
        break;
      }
    }
    if (!all_finite(gx))
      throw NumericError("non-finite gradient in layer " + l.name);
    g = std::move(gx);
  }
  bp.input_grad = std::move(g);
  return bp;
}

// Convenience form that recomputes the forward trace.
template <typename S>
BackpropT<S> backward(const NetT<S>& net, const TensorT<S>& x,
                      const TensorT<S>& upstream) {
  TraceT<S> trace;
  forward(net, x, &trace);
  return backward(net, trace, upstream);
}

template <typename S>
std::uint64_t param_hash(const NetT<S>& net) {
  return param_hash(net.params);
}

}  // namespace cb
