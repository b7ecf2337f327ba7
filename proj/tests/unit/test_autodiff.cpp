#include <cmath>

#include "doctest.h"
#include "etomo/autodiff/adam.hpp"
#include "etomo/autodiff/ops.hpp"
#include "grad_check.hpp"
#include "oracles.hpp"

using namespace etomo;
using namespace etomo::ad;
using etomo::testing::grad_check;
using etomo::testing::random_tensor;

namespace {

TensorPtr<double> constant(Shape s, double v, bool grad = false) {
  auto t = make_tensor<double>(std::move(s), grad);
  std::fill(t->value.begin(), t->value.end(), v);
  return t;
}

// <A x, y> versus <x, A^T y> where A^T y comes from the recorded backward rule.
double adjoint_defect(const std::function<TensorPtr<double>(Tape<double>&, const TensorPtr<double>&)>& op,
                      Shape in_shape, std::uint64_t seed) {
  auto x = random_tensor(in_shape, seed);
  Tape<double> tape;
  auto out = op(tape, x);
  auto y = random_tensor(out->shape, seed + 1, -1, 1, false);
  tape.backward(out, y->value);
  const double lhs = etomo::testing::dot(out->value, y->value);
  const double rhs = etomo::testing::dot(x->value, x->grad);
  return std::abs(lhs - rhs) /
         (etomo::testing::norm(out->value) * etomo::testing::norm(y->value));
}

}  // namespace

TEST_CASE("conv2d: zero input yields the bias in every pixel") {
  Tape<double> tape;
  auto x = constant({2, 4, 5}, 0.0);
  auto k = random_tensor({3, 2, 3, 3}, 1);
  auto b = make_tensor<double>({3}, {0.5, -1.0, 2.0});
  auto y = conv2d(tape, x, k, b);
  CHECK(y->shape == Shape{3, 4, 5});
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 20; ++i) CHECK(y->value[c * 20 + i] == b->value[c]);
  }
}

TEST_CASE("conv2d: centre-tap kernel is the identity") {
  Tape<double> tape;
  auto x = constant({1, 5, 5}, 0.0);
  x->value[12] = 1.0;
  auto k = constant({1, 1, 3, 3}, 0.0);
  k->value[4] = 1.0;
  auto b = constant({1}, 0.0);
  auto y = conv2d(tape, x, k, b);
  CHECK(y->value == x->value);

  auto r = random_tensor({1, 6, 7}, 4, -1, 1, false);
  CHECK(conv2d(tape, r, k, b)->value == r->value);
}

TEST_CASE("conv2d: shape errors name the offending dimension") {
  Tape<double> tape;
  auto x = constant({2, 4, 4}, 1.0);
  auto b = constant({3}, 0.0);
  try {
    conv2d(tape, x, constant({3, 4, 3, 3}, 1.0), b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("input-channel") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(tape, x, constant({3, 2, 3, 3}, 1.0), constant({2}, 0.0)), ShapeError);
  CHECK_THROWS_AS(conv2d(tape, x, constant({3, 2, 2, 2}, 1.0), b), ShapeError);
  CHECK_THROWS_AS(conv2d(tape, constant({4, 4}, 1.0), constant({3, 2, 3, 3}, 1.0), b), ShapeError);
}

TEST_CASE("conv2d: gradients match central differences") {
  auto x = random_tensor({1, 5, 5}, 10);
  auto k = random_tensor({1, 1, 3, 3}, 11);
  auto b = random_tensor({1}, 12);
  auto loss = [&](Tape<double>& t) { return sum(t, conv2d(t, x, k, b)); };
  CHECK(grad_check(loss, k, 20, 1) < 1e-4);

  auto x2 = random_tensor({2, 6, 4}, 13);
  auto k2 = random_tensor({3, 2, 3, 3}, 14);
  auto b2 = random_tensor({3}, 15);
  auto w = random_tensor({3, 6, 4}, 16, -1, 1, false);
  // Non-uniform output weighting exercises every kernel tap.
  auto loss2 = [&](Tape<double>& t) { return mse_loss(t, conv2d(t, x2, k2, b2), w); };
  CHECK(grad_check(loss2, k2, 20, 2) < 1e-4);
  CHECK(grad_check(loss2, x2, 20, 3) < 1e-4);
  CHECK(grad_check(loss2, b2, 3, 4) < 1e-4);

  auto k1 = random_tensor({2, 2, 1, 1}, 17);
  auto b1 = random_tensor({2}, 18);
  auto w1 = random_tensor({2, 6, 4}, 19, -1, 1, false);
  auto loss3 = [&](Tape<double>& t) { return mse_loss(t, conv2d(t, x2, k1, b1), w1); };
  CHECK(grad_check(loss3, k1, 4, 5) < 1e-4);
  CHECK(grad_check(loss3, x2, 20, 6) < 1e-4);
}

TEST_CASE("relu: values and subgradient") {
  Tape<double> tape;
  auto x = make_tensor<double>({3}, {-1.0, 2.0, 0.0}, true);
  auto y = relu(tape, x);
  CHECK(y->value == std::vector<double>{0.0, 2.0, 0.0});
  tape.backward(sum(tape, y));
  CHECK(x->grad == std::vector<double>{0.0, 1.0, 0.0});

  auto z = make_tensor<double>({2}, {-0.5, 0.5}, true);
  auto loss = [&](Tape<double>& t) { return sum(t, relu(t, z)); };
  z->grad.clear();
  Tape<double> t2;
  t2.backward(loss(t2));
  CHECK(z->grad == std::vector<double>{0.0, 1.0});
  CHECK(grad_check(loss, z, 2, 7) < 1e-8);
}

TEST_CASE("maxpool2: values, tie-break and errors") {
  Tape<double> tape;
  auto c = constant({2, 4, 6}, 3.5);
  auto p = maxpool2(tape, c);
  CHECK(p->shape == Shape{2, 2, 3});
  for (double v : p->value) CHECK(v == 3.5);

  auto blk = make_tensor<double>({1, 2, 2}, {1, 2, 3, 4}, true);
  auto out = maxpool2(tape, blk);
  CHECK(out->item() == 4.0);

  auto tie = make_tensor<double>({1, 2, 2}, {5, 5, 5, 5}, true);
  Tape<double> t2;
  t2.backward(sum(t2, maxpool2(t2, tie)));
  CHECK(tie->grad == std::vector<double>{1, 0, 0, 0});

  CHECK_THROWS_AS(maxpool2(tape, constant({1, 3, 4}, 1.0)), ShapeError);
  CHECK_THROWS_AS(maxpool2(tape, constant({1, 4, 5}, 1.0)), ShapeError);

  auto x = random_tensor({1, 8, 8}, 20);
  auto w = random_tensor({1, 4, 4}, 21, -1, 1, false);
  auto loss = [&](Tape<double>& t) { return mse_loss(t, maxpool2(t, x), w); };
  CHECK(grad_check(loss, x, 20, 8) < 1e-4);
}

TEST_CASE("upsample2: replication, round trip, gradient") {
  Tape<double> tape;
  auto one = make_tensor<double>({1, 1, 1}, std::vector<double>{1.0});
  CHECK(upsample2(tape, one)->value == std::vector<double>{1, 1, 1, 1});

  auto c = constant({3, 4, 6}, -2.25);
  CHECK(upsample2(tape, maxpool2(tape, c))->value == c->value);

  auto x = random_tensor({1, 4, 4}, 22);
  auto w = random_tensor({1, 8, 8}, 23, -1, 1, false);
  auto loss = [&](Tape<double>& t) { return mse_loss(t, upsample2(t, x), w); };
  CHECK(grad_check(loss, x, 16, 9) < 1e-4);
}

TEST_CASE("concat_channels: stacking and gradient split") {
  Tape<double> tape;
  auto a = random_tensor({2, 4, 4}, 24);
  auto b = random_tensor({3, 4, 4}, 25);
  auto c = concat_channels(tape, a, b);
  CHECK(c->shape == Shape{5, 4, 4});
  CHECK(std::equal(a->value.begin(), a->value.end(), c->value.begin()));
  tape.backward(sum(tape, c));
  CHECK(a->grad == std::vector<double>(a->size(), 1.0));
  CHECK(b->grad == std::vector<double>(b->size(), 1.0));
  CHECK_THROWS_AS(concat_channels(tape, a, random_tensor({1, 4, 5}, 26)), ShapeError);
  CHECK_THROWS_AS(concat_channels(tape, a, random_tensor({1, 3, 4}, 26)), ShapeError);
}

TEST_CASE("l1_loss and mse_loss: closed forms and oracles") {
  Tape<double> tape;
  auto a = random_tensor({1, 7, 9}, 30);
  CHECK(l1_loss(tape, a, a)->item() == 0.0);
  CHECK(mse_loss(tape, a, a)->item() == 0.0);
  CHECK(l1_loss(tape, constant({1, 4, 4}, 0.0), constant({1, 4, 4}, 0.5))->item() == 0.5);
  CHECK(mse_loss(tape, constant({1, 4, 4}, 0.0), constant({1, 4, 4}, 2.0))->item() == 4.0);

  auto b = random_tensor({1, 7, 9}, 31);
  CHECK(std::abs(l1_loss(tape, a, b)->item() - oracle::l1_mean(a->value, b->value)) < 1e-12);
  CHECK(std::abs(mse_loss(tape, a, b)->item() - oracle::mse_mean(a->value, b->value)) < 1e-12);
  CHECK_THROWS_AS(l1_loss(tape, a, random_tensor({1, 9, 7}, 1)), ShapeError);
  CHECK_THROWS_AS(mse_loss(tape, a, random_tensor({1, 7, 8}, 1)), ShapeError);

  // d mse / d a = 2 (a - b) / N
  a->grad.clear();
  Tape<double> t2;
  t2.backward(mse_loss(t2, a, b));
  const double n = static_cast<double>(a->size());
  for (std::size_t i = 0; i < a->size(); ++i) {
    CHECK(a->grad[i] == doctest::Approx(2.0 * (a->value[i] - b->value[i]) / n).epsilon(1e-12));
  }
  auto mse = [&](Tape<double>& t) { return mse_loss(t, a, b); };
  auto l1 = [&](Tape<double>& t) { return l1_loss(t, a, b); };
  CHECK(grad_check(mse, a, 20, 10) < 1e-4);
  CHECK(grad_check(mse, b, 20, 11) < 1e-4);
  CHECK(grad_check(l1, a, 20, 12) < 1e-4);
}

TEST_CASE("ssim: identity, symmetry, closed form, gradient") {
  Tape<double> tape;
  auto x = random_tensor({1, 16, 16}, 40, 0, 1);
  CHECK(ssim(tape, x, x, 1.0)->item() == 1.0);

  auto y = random_tensor({1, 16, 16}, 41, 0, 1);
  CHECK(ssim(tape, x, y, 1.0)->item() == ssim(tape, y, x, 1.0)->item());

  const double expected = 1e-4 / (0.25 + 1e-4);
  const double got = ssim(tape, constant({1, 12, 14}, 0.0), constant({1, 12, 14}, 0.5), 1.0)->item();
  CHECK(std::abs(got - expected) < 1e-10);
  CHECK(expected == doctest::Approx(3.998e-4).epsilon(1e-3));

  CHECK_THROWS_AS(ssim(tape, constant({1, 10, 16}, 0.0), constant({1, 10, 16}, 0.0), 1.0),
                  ShapeError);

  auto loss = [&](Tape<double>& t) { return ssim(t, x, y, 1.0); };
  CHECK(grad_check(loss, x, 20, 13) < 1e-3);
  CHECK(grad_check(loss, y, 20, 14) < 1e-3);

  const double v = ssim(tape, x, y, 1.0)->item();
  CHECK(v >= -1.0);
  CHECK(v <= 1.0);
}

TEST_CASE("tv_penalty: closed forms, oracle, invariances, gradient") {
  Tape<double> tape;
  CHECK(tv_penalty(tape, constant({1, 6, 5}, 0.7))->item() == 0.0);
  auto step = make_tensor<double>({1, 2, 2}, {0, 1, 0, 1});
  // Each of the two unit jumps contributes sqrt(1 + eps^2) - eps.
  CHECK(std::abs(tv_penalty(tape, step)->item() - 2.0) < 1e-7);

  auto x = random_tensor({1, 9, 13}, 50);
  const double tv = tv_penalty(tape, x)->item();
  CHECK(std::abs(tv - oracle::tv_bruteforce(x->value, 9, 13, kTvEpsilon)) < 1e-10);

  auto shifted = make_tensor<double>(x->shape, x->value);
  for (auto& v : shifted->value) v += 3.0;
  CHECK(tv_penalty(tape, shifted)->item() == doctest::Approx(tv).epsilon(1e-12));

  auto loss = [&](Tape<double>& t) { return tv_penalty(t, x); };
  CHECK(grad_check(loss, x, 20, 15) < 1e-4);
}

TEST_CASE("crop and affine: values and gradients") {
  Tape<double> tape;
  auto x = random_tensor({2, 6, 5}, 60);
  auto c = crop(tape, x, 1, 2, 3, 2);
  CHECK(c->shape == Shape{2, 3, 2});
  CHECK(c->value[0] == x->value[1 * 5 + 2]);
  CHECK_THROWS_AS(crop(tape, x, 4, 0, 3, 2), ShapeError);
  auto w = random_tensor({2, 3, 2}, 61, -1, 1, false);
  auto loss = [&](Tape<double>& t) { return mse_loss(t, affine(t, crop(t, x, 1, 2, 3, 2), 1.5, 0.25), w); };
  CHECK(grad_check(loss, x, 20, 16) < 1e-4);
}

TEST_CASE("linear ops are adjoint to their backward rules") {
  auto kernel = random_tensor({4, 3, 3, 3}, 70, -1, 1, false);
  auto zero_bias = constant({4}, 0.0);
  auto head = random_tensor({2, 3, 1, 1}, 71, -1, 1, false);
  auto zero_head_bias = constant({2}, 0.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(adjoint_defect([&](Tape<double>& t, const TensorPtr<double>& x) { return conv2d(t, x, kernel, zero_bias); },
                         {3, 6, 8}, seed) < 1e-10);
    CHECK(adjoint_defect([&](Tape<double>& t, const TensorPtr<double>& x) { return conv2d(t, x, head, zero_head_bias); },
                         {3, 6, 8}, seed) < 1e-10);
    CHECK(adjoint_defect([](Tape<double>& t, const TensorPtr<double>& x) { return upsample2(t, x); },
                         {3, 5, 4}, seed) < 1e-10);
    CHECK(adjoint_defect([&](Tape<double>& t, const TensorPtr<double>& x) { return concat_channels(t, x, x); },
                         {3, 6, 8}, seed) < 1e-10);
    CHECK(adjoint_defect([](Tape<double>& t, const TensorPtr<double>& x) { return crop(t, x, 1, 1, 4, 5); },
                         {3, 6, 8}, seed) < 1e-10);
  }
}

TEST_CASE("backward: seeds, tape bookkeeping, determinism") {
  auto theta = random_tensor({3, 4}, 80);
  Tape<double> tape;
  tape.backward(sum(tape, theta));
  CHECK(theta->grad == std::vector<double>(12, 1.0));
  CHECK(tape.empty());

  Tape<double> t2;
  auto v = affine(t2, theta, 2.0);
  CHECK_THROWS_AS(t2.backward(v), ShapeError);

  // Every recorded entry runs once, newest first.
  Tape<double> t3;
  std::vector<int> order;
  for (int i = 0; i < 4; ++i) t3.record([&order, i] { order.push_back(i); });
  auto s = make_tensor<double>({1}, std::vector<double>{1.0}, true);
  t3.backward(s);
  CHECK(order == std::vector<int>{3, 2, 1, 0});
  CHECK(t3.empty());

  // Two-layer network: loss = mse(conv(relu(conv(z, k1)), k2), y).
  auto z = random_tensor({2, 8, 8}, 81, 0, 1, false);
  auto k1 = random_tensor({3, 2, 3, 3}, 82);
  auto b1 = random_tensor({3}, 83);
  auto k2 = random_tensor({1, 3, 3, 3}, 84);
  auto b2 = constant({1}, 0.0, true);
  auto y = random_tensor({1, 8, 8}, 85, 0, 1, false);
  auto net = [&](Tape<double>& t) {
    return mse_loss(t, conv2d(t, relu(t, conv2d(t, z, k1, b1)), k2, b2), y);
  };
  CHECK(grad_check(net, k1, 20, 17) < 1e-3);
  CHECK(grad_check(net, k2, 20, 18) < 1e-3);

  std::vector<std::vector<double>> grads;
  for (int rep = 0; rep < 2; ++rep) {
    k1->grad.clear();
    Tape<double> t;
    t.backward(net(t));
    grads.push_back(k1->grad);
  }
  CHECK(grads[0] == grads[1]);

  // Tensors that do not require gradients never receive one.
  CHECK(z->grad.empty());
  CHECK(y->grad.empty());
}

TEST_CASE("adam_step: zero gradient, first step, scalar trace") {
  ParamSet<double> params;
  auto p = params.add("w", {5});
  p->value = {1, 2, 3, 4, 5};
  p->ensure_grad();
  auto state = AdamState<double>::zeros_like(params);
  adam_step(params, state, 1e-3);
  CHECK(p->value == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(state.step == 1);

  auto state2 = AdamState<double>::zeros_like(params);
  std::fill(p->grad.begin(), p->grad.end(), -0.37);
  adam_step(params, state2, 1e-2);
  for (int i = 0; i < 5; ++i) CHECK(p->value[i] - (i + 1) == doctest::Approx(1e-2).epsilon(1e-6));

  // f(theta) = (theta - 3)^2, gradient 2 (theta - 3)
  ParamSet<double> scalar;
  auto th = scalar.add("theta", {1});
  th->value = {0.5};
  auto st = AdamState<double>::zeros_like(scalar);
  const auto trace = oracle::adam_scalar_trace(0.5, [](double t) { return 2.0 * (t - 3.0); }, 10, 0.1);
  for (int i = 0; i < 10; ++i) {
    th->grad = {2.0 * (th->value[0] - 3.0)};
    adam_step(scalar, st, 0.1);
    CHECK(std::abs(th->value[0] - trace[i]) < 1e-10);
  }
  CHECK(st.step == 10);

  ParamSet<double> other;
  other.add("w", {4});
  auto bad = AdamState<double>::zeros_like(other);
  CHECK_THROWS_AS(adam_step(params, bad, 1e-3), ShapeError);
}

TEST_CASE("float instantiation evaluates the same graph") {
  Tape<float> tape;
  auto x = make_tensor<float>({1, 16, 16}, true);
  for (std::size_t i = 0; i < x->size(); ++i) x->value[i] = static_cast<float>((i * 37 % 11) / 10.0);
  auto k = make_tensor<float>({2, 1, 3, 3}, std::vector<float>(18, 0.1f), true);
  auto b = make_tensor<float>({2}, {0.0f, 0.1f}, true);
  auto h = relu(tape, conv2d(tape, x, k, b));
  auto loss = add(tape, l1_loss(tape, crop(tape, h, 0, 0, 16, 16), concat_channels(tape, x, x)),
                  tv_penalty(tape, crop(tape, upsample2(tape, maxpool2(tape, x)), 0, 0, 16, 16)));
  tape.backward(loss);
  CHECK(std::isfinite(loss->item()));
  CHECK(k->grad.size() == 18);
}
