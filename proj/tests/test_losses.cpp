#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/losses.hpp"
#include "a2bfr/rng.hpp"

using namespace a2bfr;

namespace {

Image random_image(int s, int c, uint64_t seed, Scalar lo = 0.0, Scalar hi = 1.0) {
  Rng rng(seed);
  Image img(s, s, c);
  for (auto& v : img.v) v = rng.uniform(lo, hi);
  return img;
}

// Independent scalar-loop oracle for the flow loss.
Scalar flow_loss_oracle(const Image& v, const Image& z0, const Image& eps) {
  Scalar acc = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < v.v.size(); ++i) {
    Scalar target = eps.v[i] - z0.v[i];
    acc += (v.v[i] - target) * (v.v[i] - target);
    ++n;
  }
  return acc / n;
}

Scalar bce_oracle(const std::vector<Scalar>& p, const std::vector<Scalar>& t_raw) {
  Scalar acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    Scalar t = std::min(1.0 - 1e-4, std::max(1e-4, t_raw[i]));
    acc -= t * std::log(p[i]) + (1.0 - t) * std::log(1.0 - p[i]);
  }
  return acc / p.size();
}

}  // namespace

TEST_CASE("flow loss: perfect prediction, constants, and the loop oracle") {
  Image z0 = random_image(8, 3, 1);
  Image eps = random_image(8, 3, 2);
  Image perfect(8, 8, 3);
  for (size_t i = 0; i < perfect.v.size(); ++i) perfect.v[i] = eps.v[i] - z0.v[i];
  REQUIRE(flow_loss(perfect, z0, eps) == 0.0);

  Image zero(8, 8, 3, 0.0);
  Image z0c(8, 8, 3, 0.0), epsc(8, 8, 3, 0.5);
  REQUIRE(flow_loss(zero, z0c, epsc) == Catch::Approx(0.25).margin(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    Image v = random_image(8, 3, 100 + trial, -2.0, 2.0);
    Image a = random_image(8, 3, 200 + trial);
    Image b = random_image(8, 3, 300 + trial);
    REQUIRE(std::abs(flow_loss(v, a, b) - flow_loss_oracle(v, a, b)) < 1e-6);
  }
}

TEST_CASE("bce: self-target stationarity and ln2 at one-half") {
  std::vector<Scalar> half(6, 0.5);
  REQUIRE(bce_mean(half, half) == Catch::Approx(std::log(2.0)).margin(1e-12));
  // Gradient at p == target is zero.
  auto g = bce_grad(half, half);
  for (Scalar gi : g) REQUIRE(std::abs(gi) < 1e-12);

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Scalar> p(6), t(6);
    for (auto& v : p) v = rng.uniform(0.05, 0.95);
    for (auto& v : t) v = rng.uniform();
    REQUIRE(std::abs(bce_mean(p, t) - bce_oracle(p, t)) < 1e-6);
  }
}

TEST_CASE("aal loss composition") {
  LossWeights w;
  w.lambda_attr = 0.0;
  REQUIRE(aal_loss(1.37, 0.5, w) == 1.37);
  w.lambda_attr = 0.2;
  REQUIRE(aal_loss(1.0, 0.5, w) == Catch::Approx(1.1).margin(1e-12));
  w.lambda_attr = 0.8;
  REQUIRE(aal_loss(0.77, 0.0, w) == 0.77);
  REQUIRE_THROWS_AS(aal_loss(std::nan(""), 0.0, w), Error);
}

TEST_CASE("dual loss values and subgradients") {
  REQUIRE(dual_loss(0.9, 0.1, 0.5) == 0.0);
  REQUIRE(dual_loss(0.4, 0.4, 0.5) == 0.5);
  REQUIRE(dual_loss(0.6, 0.5, 0.5) == Catch::Approx(0.4).margin(1e-12));
  REQUIRE_THROWS_AS(dual_loss(0.5, 0.5, 0.0), Error);
  REQUIRE_THROWS_AS(dual_loss(1.5, 0.5, 0.5), Error);

  // Finite differences away from the kinks.
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Scalar a = rng.uniform(0.05, 0.95);
    Scalar b = rng.uniform(0.05, 0.95);
    Scalar m = 0.5;
    if (std::abs(std::abs(b - a) - m) < 1e-3 || std::abs(b - a) < 1e-3) continue;
    Scalar gs, gt;
    dual_loss_grad(a, b, m, gs, gt);
    Scalar h = 1e-6;
    Scalar fd_t = (dual_loss(a, b + h, m) - dual_loss(a, b - h, m)) / (2 * h);
    Scalar fd_s = (dual_loss(a + h, b, m) - dual_loss(a - h, b, m)) / (2 * h);
    REQUIRE(std::abs(fd_t - gt) < 1e-6);
    REQUIRE(std::abs(fd_s - gs) < 1e-6);
  }

  // Hinge active and gap exactly zero: subgradient pinned to 0.
  Scalar gs, gt;
  dual_loss_grad(0.3, 0.3, 0.5, gs, gt);
  REQUIRE(gs == 0.0);
  REQUIRE(gt == 0.0);
}

TEST_CASE("total loss composition") {
  LossWeights w;
  w.dual_alpha = 0.0;
  REQUIRE(total_loss(1.0, 0.8, 0.4, w) == Catch::Approx(1.8).margin(1e-12));
  w.dual_alpha = 0.2;
  REQUIRE(total_loss(1.0, 0.8, 0.4, w) == Catch::Approx(1.88).margin(1e-12));
  w.dual_alpha = 0.9;
  REQUIRE(total_loss(1.0, 0.8, 0.0, w) == Catch::Approx(1.8).margin(1e-12));
}

TEST_CASE("attr loss with a constant encoder and the loop oracle") {
  EncoderConfig ec;
  ec.input_size = 16;
  ec.base_channels = 4;
  ec.attr_count = 6;
  ec.id_dims = 8;
  AttrEncoder enc(ec, 1);
  enc.zero_attr_head();  // all confidences 0.5

  Image img = random_image(16, 3, 9);
  auto conf = enc.encode_attrs(img);
  for (Scalar c : conf) REQUIRE(c == 0.5);

  // Self-target: loss equals the entropy of 0.5 = ln 2.
  REQUIRE(attr_loss(enc, img, img) == Catch::Approx(std::log(2.0)).margin(1e-9));

  // extract_edited_score on the constant encoder.
  for (int kk = 0; kk < 6; ++kk) REQUIRE(extract_edited_score(enc, img, kk) == 0.5);
  REQUIRE_THROWS_AS(extract_edited_score(enc, img, 6), Error);
}
