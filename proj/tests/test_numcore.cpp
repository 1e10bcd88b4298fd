#include <doctest.h>

#include <cmath>

#include "cb/checkpoint.hpp"
#include "cb/gradcheck.hpp"
#include "cb/loss.hpp"
#include "cb/net.hpp"
#include "cb/optim.hpp"

using namespace cb;

TEST_CASE("forward: identity net returns input") {
  Rng rng(1);
  NetT<float> net = NetBuilderT<float>({3}, rng).build();
  Tensor x = from_values<float>({3}, {1, 2, 3});
  Tensor y = forward(net, x);
  CHECK(y.data == x.data);
}

TEST_CASE("forward: identity dense weights") {
  Rng rng(1);
  Net net = NetBuilder({2}, rng).dense(2).build();
  Tensor& w = net.params.at("dense0.w");
  w.data << 1, 0, 0, 1;
  Tensor x = from_values<float>({2}, {0.5f, -0.5f});
  Tensor y = forward(net, x);
  CHECK(y.data[0] == doctest::Approx(0.5));
  CHECK(y.data[1] == doctest::Approx(-0.5));
}

TEST_CASE("forward: all-ones 3x3 conv on all-ones 3x3 image sums to 9") {
  Rng rng(1);
  Net net = NetBuilder({1, 3, 3}, rng).conv(1, 3, 1).build();
  net.params.at("conv0.w").data.setOnes();
  net.params.at("conv0.b").data.setZero();
  Tensor x = full<float>({1, 3, 3}, 1.0f);
  Tensor y = forward(net, x);
  REQUIRE(y.shape == std::vector<int>{1, 1, 1});
  CHECK(y.data[0] == doctest::Approx(9.0));
}

TEST_CASE("forward: shape mismatch reports both shapes") {
  Rng rng(1);
  Net net = NetBuilder({4}, rng).dense(2).build();
  Tensor x({3});
  try {
    forward(net, x);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
}

TEST_CASE("backward: dense gradient is the outer product") {
  Rng rng(2);
  Net net = NetBuilder({3}, rng).dense(2).build();
  Tensor x = from_values<float>({3}, {1.5f, -2.0f, 0.25f});
  Tensor up = full<float>({2}, 1.0f);
  Backprop bp = backward(net, x, up);
  const Tensor& gw = bp.grads.at("dense0.w");
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) CHECK(gw.data[r * 3 + c] == doctest::Approx(x.data[c]));
  CHECK(bp.grads.at("dense0.b").data.isOnes());
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  Rng rng(3);
  Net net = NetBuilder({1, 8, 8}, rng).conv(2, 3, 2).relu().flatten().dense(4).build();
  Tensor x = uniform_tensor<float>({1, 8, 8}, -1.0f, 1.0f, rng);
  Backprop bp = backward(net, x, zeros<float>({4}));
  for (const auto& [name, g] : bp.grads.tensors) CHECK(g.data.isZero());
  CHECK(bp.input_grad.data.isZero());
}

TEST_CASE("mse: examples and gradient at minimum") {
  Tensor a = from_values<float>({2}, {1, 1});
  Tensor b = from_values<float>({2}, {0, 0});
  CHECK(mse(a, b).value == doctest::Approx(1.0));
  CHECK(mse(a, a).value == doctest::Approx(0.0));
  CHECK(mse(a, a).grad.data.isZero());
  CHECK_THROWS_AS(mse(a, Tensor({3})), ShapeError);
}

TEST_CASE("bce_with_logits: closed forms") {
  Tensor logit = from_values<float>({1}, {0.0f});
  auto lg = bce_with_logits(logit, 1);
  CHECK(lg.value == doctest::Approx(std::log(2.0)));
  CHECK(lg.grad.data[0] == doctest::Approx(0.5 - 1.0));

  logit.data[0] = 30.0f;  // saturated correct prediction must not overflow
  CHECK(bce_with_logits(logit, 1).value == doctest::Approx(0.0).epsilon(1e-9));

  logit.data[0] = -1.25f;
  auto lg2 = bce_with_logits(logit, 0);
  CHECK(lg2.grad.data[0] == doctest::Approx(sigmoid(-1.25)));
  CHECK(lg2.value >= 0.0);
  CHECK_THROWS_AS(bce_with_logits(logit, 2), Error);
}

TEST_CASE("spatial_softmax: symmetry and corner cases") {
  Tensor uniform_map = full<float>({1, 5, 5}, 0.3f);
  Tensor c = spatial_softmax(uniform_map);
  CHECK(c.data[0] == doctest::Approx(0.0));
  CHECK(c.data[1] == doctest::Approx(0.0));

  Tensor hot({1, 5, 5});
  hot.data[2 * 5 + 2] = 50.0f;  // center pixel
  c = spatial_softmax(hot);
  CHECK(c.data[0] == doctest::Approx(0.0));
  CHECK(c.data[1] == doctest::Approx(0.0));

  Tensor corner({1, 5, 5});
  corner.data[0] = 60.0f;  // top-left
  c = spatial_softmax(corner);
  CHECK(c.data[0] == doctest::Approx(-1.0));
  CHECK(c.data[1] == doctest::Approx(-1.0));
}

TEST_CASE("spatial_softmax: range and exact shift invariance") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    // activations on a 1/64 grid so adding 1.0 is exact in float
    Tensor m({3, 6, 4});
    for (long long i = 0; i < m.size(); ++i)
      m.data[i] = rng.uniform_int(-128, 128) / 64.0f;
    Tensor c = spatial_softmax(m);
    for (long long i = 0; i < c.size(); ++i) {
      CHECK(c.data[i] >= -1.0f);
      CHECK(c.data[i] <= 1.0f);
    }
    Tensor shifted = m;
    shifted.data.array() += 1.0f;
    Tensor c2 = spatial_softmax(shifted);
    CHECK(c.data == c2.data);  // max subtraction makes the shift drop out exactly
  }
}

TEST_CASE("adam: zero gradients leave parameters untouched") {
  Rng rng(5);
  ParamSet params;
  params.insert("w", uniform_tensor<float>({4}, -1.0f, 1.0f, rng));
  ParamSet grads;
  grads.insert("w", zeros<float>({4}));
  Adam opt;
  const ParamSet before = params;
  adam_step(opt, params, grads, AdamHp{0.1, 0.9, 0.999, 1e-8});
  CHECK(params.at("w").data == before.at("w").data);
  CHECK(params.step == 1);
  CHECK(opt.m.at("w").data.isZero());
  CHECK(opt.v.at("w").data.isZero());
}

TEST_CASE("adam: single hand-checked step") {
  ParamSet params;
  params.insert("w", from_values<float>({1}, {1.0f}));
  ParamSet grads;
  grads.insert("w", from_values<float>({1}, {1.0f}));
  Adam opt;
  adam_step(opt, params, grads, AdamHp{0.1, 0.9, 0.999, 1e-8});
  // bias-corrected mhat/sqrt(vhat) = 1 at step 1, so the step is ~lr
  CHECK(params.at("w").data[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: identical replays from copied state") {
  Rng rng(6);
  ParamSet params;
  params.insert("w", uniform_tensor<float>({8}, -1.0f, 1.0f, rng));
  ParamSet grads;
  grads.insert("w", uniform_tensor<float>({8}, -1.0f, 1.0f, rng));
  Adam opt;
  adam_step(opt, params, grads, AdamHp{0.01, 0.9, 0.999, 1e-8});

  ParamSet params2 = params;
  Adam opt2 = opt;
  ParamSet a = params, b = params2;
  Adam oa = opt, ob = opt2;
  adam_step(oa, a, grads, AdamHp{0.01, 0.9, 0.999, 1e-8});
  adam_step(ob, b, grads, AdamHp{0.01, 0.9, 0.999, 1e-8});
  CHECK(a.at("w").data == b.at("w").data);
}

TEST_CASE("check_gradients: linear net with MSE is exact in double") {
  Rng rng(11);
  NetT<double> net = NetBuilderT<double>({6}, rng).dense(4).build();
  TensorT<double> x = uniform_tensor<double>({6}, -1.0, 1.0, rng);
  CheckLossT<double> loss;
  loss.target = uniform_tensor<double>({4}, -1.0, 1.0, rng);
  CHECK(check_gradients(net, x, loss, 1e-5) <= 1e-6);
}

TEST_CASE("check_gradients: zero loss surface reports zero error") {
  Rng rng(12);
  // bias-only net with zero weights: output is constant zero
  NetT<double> net = NetBuilderT<double>({2}, rng).dense(2).build();
  net.params.at("dense0.w").data.setZero();
  TensorT<double> x = uniform_tensor<double>({2}, -1.0, 1.0, rng);
  CheckLossT<double> loss;
  loss.target = zeros<double>({2});
  // MSE wrt a zero-output net at target zero: gradients vanish identically
  CHECK(check_gradients(net, x, loss, 1e-5) == doctest::Approx(0.0));
}

namespace {

// Draws a net covering the requested layer mix, an input kept away from relu
// kinks, and runs the finite-difference check in double.
double random_draw_check(int kind, Rng& rng) {
  CheckLossT<double> loss;
  NetT<double> net;
  std::vector<int> in_shape;
  switch (kind % 4) {
    case 0:
      in_shape = {5};
      net = NetBuilderT<double>(in_shape, rng).dense(8).relu().dense(3).build();
      loss.target = uniform_tensor<double>({3}, -1.0, 1.0, rng);
      break;
    case 1:
      in_shape = {2, 7, 7};
      net = NetBuilderT<double>(in_shape, rng)
                .conv(3, 3, 2).relu().flatten().dense(4).build();
      loss.target = uniform_tensor<double>({4}, -1.0, 1.0, rng);
      break;
    case 2:
      in_shape = {2, 6, 6};
      net = NetBuilderT<double>(in_shape, rng)
                .conv(4, 3, 1).spatial_softmax().flatten().dense(2).build();
      loss.target = uniform_tensor<double>({2}, -1.0, 1.0, rng);
      break;
    default:
      in_shape = {3, 5, 5};
      net = NetBuilderT<double>(in_shape, rng)
                .conv(2, 2, 1).relu().flatten().dense(1).build();
      loss.kind = LossKind::Bce;
      loss.label = kind % 2;
      break;
  }
  for (int attempt = 0; attempt < 100; ++attempt) {
    TensorT<double> x = uniform_tensor<double>(in_shape, -1.0, 1.0, rng);
    if (min_relu_preactivation(net, x) < 1e-3) continue;  // stay off the kink
    return check_gradients(net, x, loss, 1e-5);
  }
  throw Error("could not find an input away from relu kinks");
}

}  // namespace

TEST_CASE("check_gradients: every layer and loss over 100 random draws") {
  Rng rng(20250809);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw)
    worst = std::max(worst, random_draw_check(draw, rng));
  CHECK(worst <= 1e-4);
}

TEST_CASE("check_gradients: float storage stays within the loose bound") {
  Rng rng(99);
  NetT<float> net = NetBuilderT<float>({2, 6, 6}, rng)
                        .conv(3, 3, 2).relu().flatten().dense(3).build();
  CheckLossT<float> loss;
  loss.target = uniform_tensor<float>({3}, -1.0f, 1.0f, rng);
  Tensor x = uniform_tensor<float>({2, 6, 6}, -1.0f, 1.0f, rng);
  CHECK(check_gradients(net, x, loss, 1e-2) <= 5e-2);
}

TEST_CASE("forward/backward determinism: bit-identical repeats") {
  Rng rng(31);
  Net net = NetBuilder({2, 10, 10}, rng)
                .conv(4, 3, 2).relu().conv(4, 3, 1).relu().flatten().dense(5).build();
  Tensor x = uniform_tensor<float>({2, 10, 10}, -1.0f, 1.0f, rng);
  Tensor up = uniform_tensor<float>({5}, -1.0f, 1.0f, rng);
  Tensor y1 = forward(net, x), y2 = forward(net, x);
  CHECK(y1.data == y2.data);
  Backprop b1 = backward(net, x, up), b2 = backward(net, x, up);
  for (const auto& [name, g] : b1.grads.tensors) CHECK(g.data == b2.grads.at(name).data);
}

TEST_CASE("non-finite propagation is rejected with the layer named") {
  Rng rng(32);
  Net net = NetBuilder({2}, rng).dense(2).build();
  net.params.at("dense0.w").data[0] = std::numeric_limits<float>::infinity();
  Tensor x = full<float>({2}, 1.0f);
  try {
    forward(net, x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("dense0") != std::string::npos);
  }
}

TEST_CASE("checkpoint: roundtrip and rejection") {
  Rng rng(41);
  ParamSet ps;
  ps.insert("a.w", uniform_tensor<float>({3, 4}, -1.0f, 1.0f, rng));
  ps.insert("b", uniform_tensor<float>({7}, -1.0f, 1.0f, rng));
  const std::string bytes = encode_checkpoint(ps);
  ParamSet back = decode_checkpoint(bytes, "mem");
  CHECK(back.at("a.w").shape == std::vector<int>{3, 4});
  CHECK(back.at("a.w").data == ps.at("a.w").data);
  CHECK(back.at("b").data == ps.at("b").data);

  std::string corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(corrupt, "mem"), IoError);

  std::string truncated = bytes.substr(0, bytes.size() - 3);
  try {
    decode_checkpoint(truncated, "mem");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }

  std::string bad_version = bytes;
  bad_version[4] = 9;  // version field
  CHECK_THROWS_AS(decode_checkpoint(bad_version, "mem"), IoError);
}
