#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/image.hpp"
#include "a2bfr/rng.hpp"
#include "a2bfr/velocity_model.hpp"

namespace a2bfr {

// Z_t = (1-t) Z_0 + t eps.
inline Image interpolate(const Image& z0, const Image& eps, Scalar t) {
  require_same_shape(z0, eps, "interpolate");
  require(t >= 0.0 && t <= 1.0, "interpolate: t outside [0,1]");
  Image out(z0.h, z0.w, z0.c);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = (1.0 - t) * z0.v[i] + t * eps.v[i];
  return out;
}

// Z0_hat = Z_t - t * v. No clamping here; pixels are clamped at decode time.
inline Image denoise_estimate(const Image& zt, Scalar t, const Image& v) {
  require_same_shape(zt, v, "denoise_estimate");
  require(t >= 0.0 && t <= 1.0, "denoise_estimate: t outside [0,1]");
  Image out(zt.h, zt.w, zt.c);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = zt.v[i] - t * v.v[i];
  return out;
}

// v = v_uncond + scale * (v_cond - v_uncond); scale 1 returns v_cond bitwise.
inline Image cfg_velocity(const Image& v_cond, const Image& v_uncond, Scalar scale) {
  require_same_shape(v_cond, v_uncond, "cfg_velocity");
  require(scale >= 0.0, "cfg_velocity: scale must be >= 0");
  if (scale == 1.0) return v_cond;
  if (scale == 0.0) return v_uncond;
  Image out(v_cond.h, v_cond.w, v_cond.c);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = v_uncond.v[i] + scale * (v_cond.v[i] - v_uncond.v[i]);
  return out;
}

// LQ conditioning at model resolution plus an optional attribute prompt.
// Empty attrs means the template prompt (all 0.5); the LQ signal is always
// kept, including on the unconditional CFG branch.
struct Conditioning {
  Image lq_up;
  std::optional<std::vector<Scalar>> attrs;
};

inline std::vector<Scalar> template_attrs(int k) { return std::vector<Scalar>(k, 0.5); }

struct SamplerConfig {
  int steps = 20;
  Scalar cfg_scale = 1.0;
  // Test hook: evaluate the unconditional branch even when cfg_scale == 1.
  bool force_uncond_eval = false;
};

// Model concept: config() exposing size/in_channels/attr_count, and
// forward(z_t, lq_up, t, attrs) -> Image. Tests inject closed-form oracle
// models through the same code paths the production model uses.
template <typename Model>
Image velocity_with_cfg(const Model& model, const Image& zt, const Conditioning& cond,
                        Scalar t, const SamplerConfig& cfg) {
  const auto& attrs =
      cond.attrs ? *cond.attrs : template_attrs(model.config().attr_count);
  Image v_cond = model.forward(zt, cond.lq_up, t, attrs);
  if (cfg.cfg_scale == 1.0 && !cfg.force_uncond_eval) return v_cond;
  Image v_uncond = model.forward(zt, cond.lq_up, t, template_attrs(model.config().attr_count));
  return cfg_velocity(v_cond, v_uncond, cfg.cfg_scale);
}

// Euler integration of dZ/dt = v from t=1 (seeded gaussian noise) down to 0
// on a uniform grid; the result is clamped to [0,1].
template <typename Model>
Image euler_sample(const Model& model, const Conditioning& cond, const SamplerConfig& cfg,
                   uint64_t seed) {
  require(cfg.steps >= 1, "euler_sample: steps must be >= 1");
  require(cfg.cfg_scale >= 0.0, "euler_sample: cfg scale must be >= 0");

  Rng rng(seed);
  Image z = gaussian_image(model.config().size, model.config().size, model.config().in_channels, rng);
  Scalar dt = 1.0 / cfg.steps;
  for (int i = cfg.steps; i >= 1; --i) {
    Scalar t = static_cast<Scalar>(i) / cfg.steps;
    Image v = velocity_with_cfg(model, z, cond, t, cfg);
    for (size_t j = 0; j < z.v.size(); ++j) {
      z.v[j] -= dt * v.v[j];
      if (!std::isfinite(z.v[j]))
        fail_runtime("euler_sample: non-finite state at step index " + std::to_string(i));
    }
  }
  return clamp01(z);
}

}  // namespace a2bfr
