#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/flowcore.hpp"
#include "a2bfr/losses.hpp"
#include "a2bfr/synthgen.hpp"
#include "a2bfr/trainer.hpp"
#include "a2bfr/velocity_model.hpp"
#include "helpers.hpp"

using namespace a2bfr;
using namespace a2bfr::testing;

TEST_CASE("conv2d and dense match finite differences") {
  Rng rng(3);
  Conv2d conv;
  conv.init("c", 2, 3, 3, rng);
  Chw in(2, 6, 6);
  for (auto& v : in.v) v = rng.uniform(-1.0, 1.0);
  Chw gout(3, 6, 6);
  for (auto& v : gout.v) v = rng.uniform(-1.0, 1.0);

  // loss = sum(out * gout); d/dw matches conv.backward's accumulation.
  auto loss = [&]() {
    Chw out = conv.forward(in);
    Scalar acc = 0.0;
    for (size_t i = 0; i < out.v.size(); ++i) acc += out.v[i] * gout.v[i];
    return acc;
  };
  conv.w.zero_grad();
  conv.b.zero_grad();
  Chw gin = conv.backward(in, gout, true);

  auto stats = fd_check({&conv.w, &conv.b}, loss, 30, 7, 1e-5);
  REQUIRE(stats.max_rel_err < 1e-6);

  // And d/d(input).
  Rng pick(5);
  for (int i = 0; i < 20; ++i) {
    size_t j = pick.uniform_index(in.v.size());
    Scalar orig = in.v[j];
    Scalar h = 1e-5;
    in.v[j] = orig + h;
    Scalar lp = loss();
    in.v[j] = orig - h;
    Scalar lm = loss();
    in.v[j] = orig;
    Scalar fd = (lp - lm) / (2 * h);
    REQUIRE(std::abs(fd - gin.v[j]) < 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("encoder pixel gradients match finite differences on a 4x4 crop") {
  AttrEncoder enc(micro_encoder_config(), 11);
  Image img = random_image(16, 16, 3, 21);

  // Random fixed projection of the confidences to a scalar.
  Rng rng(31);
  std::vector<Scalar> proj(6);
  for (auto& v : proj) v = rng.uniform(-1.0, 1.0);

  auto loss = [&]() {
    auto conf = enc.encode_attrs(img);
    Scalar acc = 0.0;
    for (int i = 0; i < 6; ++i) acc += proj[i] * conf[i];
    return acc;
  };

  AttrEncoder::Tape tape;
  enc.forward(img, tape);
  Image grad = enc.backward(tape, proj, {}, {}, false);

  Scalar max_rel = 0.0;
  for (int y = 6; y < 10; ++y)
    for (int x = 6; x < 10; ++x)
      for (int c = 0; c < 3; ++c) {
        Scalar orig = img.at(y, x, c);
        Scalar h = 1e-5;
        img.at(y, x, c) = orig + h;
        Scalar lp = loss();
        img.at(y, x, c) = orig - h;
        Scalar lm = loss();
        img.at(y, x, c) = orig;
        Scalar fd = (lp - lm) / (2 * h);
        Scalar denom = std::max({std::abs(fd), std::abs(grad.at(y, x, c)), 1e-8});
        max_rel = std::max(max_rel, std::abs(fd - grad.at(y, x, c)) / denom);
      }
  REQUIRE(max_rel <= 1e-3);
}

TEST_CASE("identity head stays unit norm and its gradient is tangent") {
  AttrEncoder enc(micro_encoder_config(), 13);
  Image img = random_image(16, 16, 3, 23);
  auto id = enc.encode_identity(img);
  Scalar norm = 0.0;
  for (Scalar v : id) norm += v * v;
  REQUIRE(std::sqrt(norm) == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("velocity model parameter gradients match finite differences") {
  VelocityConfig mc = micro_velocity_config();
  VelocityModel model(mc, 17);
  // Non-zero head so every layer sees gradient.
  Rng rng(19);
  for (auto* p : model.params())
    for (auto& v : p->value) v += 0.05 * rng.gaussian();

  Image z0 = random_image(8, 8, 1, 41, 0.1, 0.9);
  Image eps = random_image(8, 8, 1, 43, -1.0, 1.0);
  Image lq = random_image(8, 8, 1, 47);
  Scalar t = 0.6;
  std::vector<Scalar> attrs{1.0, 0.0};
  Image zt = interpolate(z0, eps, t);

  auto loss = [&]() {
    Image v = model.forward(zt, lq, t, attrs);
    return flow_loss(v, z0, eps);
  };

  for (auto* p : model.params()) p->zero_grad();
  VelocityModel::Tape tape;
  Image v = model.forward(zt, lq, t, attrs, tape);
  model.backward(tape, flow_loss_grad(v, z0, eps));

  auto stats = fd_check(model.params(), loss, 40, 53, 1e-5);
  REQUIRE(stats.max_rel_err < 1e-5);
}

TEST_CASE("micro model is small enough for the end-to-end gradient suite") {
  VelocityModel model(micro_velocity_config(), 1);
  REQUIRE(model.param_count() <= 500);
}

TEST_CASE("end-to-end total-loss gradients match finite differences") {
  // d(L_total)/d(theta) through flow loss + Z0_hat -> clamp -> encoder ->
  // BCE/hinge, on the micro model (kinks excluded by the fixed seed choice).
  VelocityConfig mc = micro_velocity_config();
  mc.size = 16;
  mc.in_channels = 3;
  mc.attr_count = 6;
  VelocityModel model(mc, 29);
  Rng rng(31);
  for (auto* p : model.params())
    for (auto& v : p->value) v += 0.05 * rng.gaussian();

  EncoderConfig ec = micro_encoder_config();
  ec.input_size = 16;
  AttrEncoder enc(ec, 37);
  enc.trained = true;

  FaceRenderer renderer;
  PairRecord big = sample_pair(renderer, 0xF00D, 2);
  PairRecord pair = big;
  pair.src_image = area_downsample(big.src_image, 4);
  pair.tar_image = area_downsample(big.tar_image, 4);

  TrainConfig cfg;
  cfg.mode = TrainMode::sdt;
  cfg.weights.lambda_attr = 0.2;
  cfg.weights.dual_alpha = 0.2;
  cfg.weights.margin = 0.5;
  cfg.uncond_dropout = 0.0;
  cfg.degrade_ranges.down_scale = 2;
  cfg.degrade_ranges.noise_lo = 0.0;
  cfg.degrade_ranges.noise_hi = 0.02;
  cfg.model = mc;

  uint64_t step_seed = 101;
  auto loss = [&]() {
    VelocityModel probe = model;  // gradients accumulate into a copy
    Rng step_rng(step_seed);
    StepRecord rec = train_step_sdt(probe, enc, pair, cfg, step_rng);
    return rec.l_total;
  };

  for (auto* p : model.params()) p->zero_grad();
  {
    Rng step_rng(step_seed);
    train_step_sdt(model, enc, pair, cfg, step_rng);
  }

  auto stats = fd_check(model.params(), loss, 20, 59, 1e-4);
  REQUIRE(stats.checked == 20);
  REQUIRE(stats.max_rel_err <= 1e-3);
}
