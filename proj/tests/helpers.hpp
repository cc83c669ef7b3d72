#pragma once

#include <cmath>
#include <vector>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/image.hpp"
#include "a2bfr/rng.hpp"
#include "a2bfr/trainer.hpp"
#include "a2bfr/velocity_model.hpp"

namespace a2bfr::testing {

inline Image random_image(int h, int w, int c, uint64_t seed, Scalar lo = 0.0, Scalar hi = 1.0) {
  Rng rng(seed);
  Image img(h, w, c);
  for (auto& v : img.v) v = rng.uniform(lo, hi);
  return img;
}

inline VelocityConfig micro_velocity_config() {
  VelocityConfig cfg;
  cfg.size = 8;
  cfg.in_channels = 1;
  cfg.attr_count = 2;
  cfg.base_channels = 2;
  cfg.cond_dims = 4;
  cfg.time_feats = 4;
  cfg.levels = 2;
  cfg.double_conv = false;
  return cfg;
}

inline EncoderConfig micro_encoder_config() {
  EncoderConfig cfg;
  cfg.input_size = 16;
  cfg.in_channels = 3;
  cfg.base_channels = 4;
  cfg.attr_count = 6;
  cfg.id_dims = 8;
  return cfg;
}

// Closed-form oracle velocity field: returns value_a when the attrs equal
// attrs_a, else value_b. Drives the real sampler/editor code paths in tests.
struct PiecewiseConstModel {
  VelocityConfig cfg;
  std::vector<Scalar> attrs_a;
  Image value_a;
  Image value_b;

  const VelocityConfig& config() const { return cfg; }
  Image forward(const Image&, const Image&, Scalar, const std::vector<Scalar>& attrs) const {
    return attrs == attrs_a ? value_a : value_b;
  }
};

struct FdStats {
  Scalar max_rel_err = 0.0;
  int checked = 0;
};

// Central finite differences of loss_fn against analytic gradients already
// accumulated in the parameters. Coordinates with both gradients below the
// floor are counted as matching.
template <typename LossFn>
FdStats fd_check(std::vector<ParamTensor*> params, LossFn&& loss_fn, int n_coords, uint64_t seed,
                 Scalar h = 1e-4) {
  std::vector<std::pair<ParamTensor*, size_t>> coords;
  for (auto* p : params)
    for (size_t j = 0; j < p->value.size(); ++j) coords.push_back({p, j});

  Rng rng(seed);
  FdStats stats;
  for (int i = 0; i < n_coords; ++i) {
    auto [p, j] = coords[rng.uniform_index(coords.size())];
    Scalar analytic = p->grad[j];
    Scalar orig = p->value[j];
    p->value[j] = orig + h;
    Scalar lp = loss_fn();
    p->value[j] = orig - h;
    Scalar lm = loss_fn();
    p->value[j] = orig;
    Scalar fd = (lp - lm) / (2.0 * h);
    Scalar denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
    Scalar rel = std::abs(fd - analytic) / denom;
    if (std::abs(fd) < 1e-9 && std::abs(analytic) < 1e-9) rel = 0.0;
    stats.max_rel_err = std::max(stats.max_rel_err, rel);
    stats.checked++;
  }
  return stats;
}

}  // namespace a2bfr::testing
