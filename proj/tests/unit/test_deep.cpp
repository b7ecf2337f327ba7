#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "etomo/core/random.hpp"
#include "etomo/deep/checkpoint.hpp"
#include "etomo/deep/dip.hpp"
#include "etomo/deep/restorer.hpp"
#include "etomo/recon/classical.hpp"
#include "grad_check.hpp"
#include "oracles.hpp"

using namespace etomo;
using namespace etomo::deep;
namespace fs = std::filesystem;

namespace {

proj::Image2D blobs(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  proj::Image2D x(h, w);
  for (int k = 0; k < 3; ++k) {
    const double cy = rng.uniform(0.25, 0.75) * h, cx = rng.uniform(0.25, 0.75) * w;
    const double r = rng.uniform(2.0, 0.2 * std::min(h, w));
    const double v = rng.uniform(0.5, 1.0);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        if (std::hypot(i - cy, j - cx) <= r) x.at(i, j) = v;
      }
    }
  }
  return x;
}

UNetSpec tiny_spec() {
  UNetSpec s;
  s.channels = {4, 8};
  return s;
}

}  // namespace

TEST_CASE("build_unet: parameter count, determinism, names") {
  for (const auto& [channels, in] :
       std::vector<std::pair<std::vector<int>, int>>{{{16, 32, 64, 128}, 1},
                                                     {{2, 2, 2, 2}, 16},
                                                     {{8, 16}, 3},
                                                     {{5}, 1}}) {
    UNetSpec s;
    s.channels = channels;
    s.in_channels = in;
    const auto net = build_unet<float>(s, 1);
    CHECK(net.params.count() == oracle::unet_param_count(channels, in));
  }
  const auto a = build_unet<float>({}, 7);
  const auto b = build_unet<float>({}, 7);
  const auto c = build_unet<float>({}, 8);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    same = same && a.params[i].tensor->value == b.params[i].tensor->value;
    differs = differs || a.params[i].tensor->value != c.params[i].tensor->value;
  }
  CHECK(same);
  CHECK(differs);
  CHECK(a.params[0].name == "enc0.conv1.w");
  CHECK(a.params[a.params.size() - 1].name == "head.conv2.b");
  // He-uniform bound and zero biases.
  const auto& w = a.params.find("enc1.conv1.w")->value;
  const float bound = static_cast<float>(std::sqrt(6.0 / (16 * 9)));
  for (float v : w) CHECK(std::abs(v) <= bound);
  for (float v : a.params.find("enc1.conv1.b")->value) CHECK(v == 0.0f);
  UNetSpec bad;
  bad.channels = {};
  CHECK_THROWS_AS(build_unet<float>(bad, 0), std::invalid_argument);
}

TEST_CASE("U-Net forward: shape contract and finiteness") {
  const auto net = build_unet<float>({}, 3);
  ad::Tape<float> tape;
  const auto zero = ad::make_tensor<float>({1, 32, 48});
  const auto out = net.forward(tape, zero);
  CHECK(out->shape == ad::Shape{1, 32, 48});
  for (float v : out->value) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(net.forward(tape, ad::make_tensor<float>({1, 40, 32})), ad::ShapeError);
  CHECK_THROWS_AS(net.forward(tape, ad::make_tensor<float>({2, 32, 32})), ad::ShapeError);
}

TEST_CASE("mixed_loss: closed forms") {
  ad::Tape<double> t;
  const auto zero = ad::make_tensor<double>({1, 16, 16});
  const auto half = ad::make_tensor<double>({1, 16, 16}, std::vector<double>(256, 0.5));
  const auto r = etomo::testing::random_tensor({1, 16, 16}, 4, 0.0, 1.0, false);
  for (double a : {0.0, 0.3, 0.5, 1.0}) CHECK(mixed_loss(t, r, r, a, 1.0)->item() == 0.0);
  CHECK(mixed_loss(t, zero, half, 0.0, 1.0)->item() == doctest::Approx(0.5).epsilon(1e-12));
  const double expected = 1.0 - 1e-4 / (0.25 + 1e-4);
  CHECK(std::abs(mixed_loss(t, zero, half, 1.0, 1.0)->item() - expected) < 1e-6);
  const double l1 = 0.5, s = 1e-4 / (0.25 + 1e-4);
  CHECK(mixed_loss(t, zero, half, 0.5, 1.0)->item() ==
        doctest::Approx(0.5 * (1 - s) + 0.5 * l1).epsilon(1e-10));
  CHECK_THROWS_AS(mixed_loss(t, zero, half, 1.5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mixed_loss(t, zero, half, -0.1, 1.0), std::invalid_argument);
}

TEST_CASE("mixed_loss: gradient matches central differences") {
  const auto ref = etomo::testing::random_tensor({1, 14, 13}, 5, 0.0, 1.0, false);
  const auto out = etomo::testing::random_tensor({1, 14, 13}, 6, 0.0, 1.0);
  const double err = etomo::testing::grad_check(
      [&](ad::Tape<double>& t) { return mixed_loss(t, ref, out, 0.5, 1.0); }, out, 30, 2);
  CHECK(err < 1e-3);
}

TEST_CASE("reflect padding") {
  proj::Image2D x(3, 5);
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = static_cast<double>(i);
  const Padding p = padding_for(3, 5, 8);
  CHECK(p.height == 8);
  CHECK(p.width == 8);
  CHECK(p.top == 2);
  CHECK(p.left == 1);
  const auto t = pad_reflect<double>(x, p);
  auto at = [&](int i, int j) { return t->value[static_cast<std::size_t>(i) * 8 + j]; };
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 5; ++j) CHECK(at(i + 2, j + 1) == x.at(i, j));
  }
  CHECK(at(1, 1) == x.at(1, 0));  // row -1 mirrors row 1
  CHECK(at(0, 1) == x.at(2, 0));  // row -2 mirrors row 2
  CHECK(at(2, 0) == x.at(0, 1));  // column -1 mirrors column 1
  CHECK(at(5, 1) == x.at(1, 0));  // row 3 mirrors row 1
  CHECK(at(7, 1) == x.at(1, 0));  // row 5 mirrors row -1 -> row 1
  CHECK(padding_for(32, 16, 16).top == 0);
}

TEST_CASE("DIP-TV objective: end-to-end gradient matches central differences") {
  UNetSpec s;
  s.channels = {2, 2, 2, 2};
  s.in_channels = 3;
  auto net = build_unet<double>(s, 11);
  // Non-zero biases so no layer sits exactly at a ReLU kink.
  Rng rng(12);
  for (const auto& e : net.params.entries()) {
    if (e.name.back() == 'b') {
      for (double& v : e.tensor->value) v = rng.uniform(0.05, 0.2);
    }
  }
  const auto g = proj::make_geometry(-45, 45, 45, 16, 16);
  const auto y = proj::forward_project(blobs(16, 16, 3), g);
  DipConfig cfg;
  cfg.z_channels = 3;
  cfg.seed = 5;
  const auto z = make_dip_input<double>(cfg, 16, 16);
  const Padding pad = padding_for(16, 16, s.multiple());
  const double lambda = 0.05;
  auto objective = [&] {
    ad::Tape<double> t;
    return dip_objective(t, net, z, pad, y, g, lambda)->item();
  };

  net.params.zero_grad();
  {
    ad::Tape<double> t;
    t.backward(dip_objective(t, net, z, pad, y, g, lambda));
  }
  double worst = 0.0;
  Rng pick(13);
  for (int k = 0; k < 20; ++k) {
    const auto& e = net.params[static_cast<std::size_t>(pick.integer(0, net.params.size() - 1))];
    const auto i = static_cast<std::size_t>(pick.integer(0, e.tensor->size() - 1));
    const double analytic = e.tensor->ensure_grad()[i];
    const double saved = e.tensor->value[i];
    const double h = 1e-6;
    e.tensor->value[i] = saved + h;
    const double fp = objective();
    e.tensor->value[i] = saved - h;
    const double fm = objective();
    e.tensor->value[i] = saved;
    const double numeric = (fp - fm) / (2 * h);
    const double err = std::abs(analytic - numeric) /
                       std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("dip_reconstruct: zero iterations, determinism, best-loss contract") {
  const auto g = proj::make_geometry(-60, 20, 60, 16, 16);
  const auto y = proj::forward_project(blobs(16, 16, 4), g);
  UNetSpec s;
  s.channels = {4, 4, 4, 4};
  DipConfig cfg;
  cfg.z_channels = 4;
  cfg.seed = 9;
  cfg.iterations = 0;
  const auto r0 = dip_reconstruct(y, g, cfg, s);
  CHECK(r0.loss_trace.empty());
  CHECK(r0.best_iteration == -1);
  CHECK(r0.image.data == dip_reconstruct(y, g, cfg, s).image.data);
  {
    // Same output as running the freshly built network by hand.
    UNetSpec sz = s;
    sz.in_channels = 4;
    const auto net = build_unet<float>(sz, derive_seed(9, "dip-net"));
    ad::Tape<float> t;
    const auto out = net.forward(t, make_dip_input<float>(cfg, 16, 16));
    for (std::size_t i = 0; i < r0.image.size(); ++i) {
      CHECK(r0.image.data[i] == static_cast<double>(out->value[i]));
    }
  }

  cfg.iterations = 60;
  cfg.lambda_tv = 0.01;
  cfg.lr = 1e-2;
  int calls = 0;
  const auto r = dip_reconstruct(y, g, cfg, s, [&](int, double) { ++calls; });
  CHECK(calls == 60);
  REQUIRE(r.loss_trace.size() == 60);
  const auto it_min = std::min_element(r.loss_trace.begin(), r.loss_trace.end());
  CHECK(r.best_loss == *it_min);
  CHECK(r.best_iteration == it_min - r.loss_trace.begin());
  CHECK(*it_min < r.loss_trace.front());
  const auto again = dip_reconstruct(y, g, cfg, s);
  CHECK(again.image.data == r.image.data);
  CHECK(again.loss_trace == r.loss_trace);

  cfg.lambda_tv = -1;
  CHECK_THROWS_AS(dip_reconstruct(y, g, cfg, s), std::invalid_argument);
  cfg.lambda_tv = 0;
  const auto other = proj::make_geometry(-60, 30, 60, 16, 16);
  CHECK_THROWS_AS(dip_reconstruct(y, other, cfg, s), proj::GeometryError);
}

TEST_CASE("train_restorer: descent, determinism, selection, errors") {
  const proj::Image2D ref = blobs(32, 32, 1);
  proj::Image2D deg = ref;
  for (double& v : deg.data) v *= 0.7;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 3;
  const std::vector<TrainingPair> one{{deg, ref, "s"}};
  const auto init = build_unet<float>(tiny_spec(), derive_seed(3, "unet"));
  const double before = evaluate_loss(init, one, cfg.alpha);
  const auto trained = train_restorer(one, {}, cfg, tiny_spec());
  CHECK(evaluate_loss(trained.model, one, cfg.alpha) < before);

  std::vector<TrainingPair> pairs;
  for (std::uint64_t k = 0; k < 6; ++k) {
    const auto r = blobs(32, 32, 10 + k);
    proj::Image2D d = r;
    for (double& v : d.data) v = 0.8 * v + 0.05;
    pairs.push_back({d, r, "s"});
  }
  cfg.epochs = 4;
  cfg.batch = 2;
  cfg.lr = 3e-3;
  cfg.validation_fraction = 0.34;
  int epochs_seen = 0;
  const auto a = train_restorer(pairs, cfg, tiny_spec(), [&](const EpochLog&) { ++epochs_seen; });
  const auto b = train_restorer(pairs, cfg, tiny_spec());
  CHECK(epochs_seen == 4);
  REQUIRE(a.log.size() == 4);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_loss == b.log[i].val_loss);
  }
  for (std::size_t i = 0; i < a.model.params.size(); ++i) {
    CHECK(a.model.params[i].tensor->value == b.model.params[i].tensor->value);
  }
  double best = a.log[0].val_loss;
  for (const auto& e : a.log) best = std::min(best, e.val_loss);
  CHECK(a.best_val_loss == best);
  CHECK(a.log[a.best_epoch].val_loss == best);

  CHECK_THROWS_AS(train_restorer({}, {}, cfg, tiny_spec()), std::invalid_argument);
  cfg.alpha = 2.0;
  CHECK_THROWS_AS(train_restorer(pairs, cfg, tiny_spec()), std::invalid_argument);
  cfg.alpha = 0.5;
  auto broken = pairs;
  broken[0].x_ref.data[5] = NAN;
  CHECK_THROWS_AS(train_restorer(broken, {}, cfg, tiny_spec()), recon::DivergenceError);
}

TEST_CASE("restore: dimensions, determinism, zero input") {
  const auto net = build_unet<float>({}, 21);
  const auto x = blobs(37, 29, 2);
  const auto a = restore(net, x);
  CHECK(a.height == 37);
  CHECK(a.width == 29);
  CHECK(a.data == restore(net, x).data);
  for (double v : restore(net, proj::Image2D(20, 20)).data) CHECK(std::isfinite(v));
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = fs::temp_directory_path() / "etomo_test_checkpoint";
  fs::remove_all(dir);
  UNetSpec s;
  s.channels = {4, 8, 16};
  const auto net = build_unet<float>(s, 31);
  write_checkpoint(dir / "m.etck", net, {{"seed", 31}, {"best_epoch", 2}});
  const auto ck = read_checkpoint(dir / "m.etck");
  CHECK(ck.model.spec == s);
  CHECK(ck.meta["best_epoch"] == 2);
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    CHECK(ck.model.params[i].tensor->value == net.params[i].tensor->value);
  }
  const auto x = blobs(24, 24, 7);
  CHECK(restore(ck.model, x).data == restore(net, x).data);

  auto bytes = encode_checkpoint(net, {});
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), io::FormatError);
  CHECK_THROWS_AS(decode_checkpoint("ETOMOAF1 nonsense"), io::FormatError);
  bytes[20] = '#';
  CHECK_THROWS_AS(decode_checkpoint(bytes), io::FormatError);
  CHECK(unet_spec_from_json(unet_spec_to_json(s)) == s);
  fs::remove_all(dir);
}
