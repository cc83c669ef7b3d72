#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/image.hpp"
#include "a2bfr/nn.hpp"
#include "a2bfr/rng.hpp"

namespace a2bfr {

struct VelocityConfig {
  int size = 64;        // must be divisible by 2^(levels-1)
  int in_channels = 3;  // image channels (input is z_t concat lq_up -> 2x)
  int attr_count = 6;
  int base_channels = 16;
  int cond_dims = 32;
  int time_feats = 16;  // even
  int levels = 3;       // resolutions size, size/2, ..., size/2^(levels-1)
  bool double_conv = true;

  int channels_at(int level) const { return base_channels * (level + 1); }
};

// U-shaped convolutional velocity field V(z_t, t, cond). The degraded input
// is channel-concatenated with z_t; the timestep (sinusoidal features) and
// the attribute vector enter as learned per-channel biases at every level.
class VelocityModel {
 public:
  VelocityModel() = default;

  explicit VelocityModel(const VelocityConfig& cfg, uint64_t seed) : cfg_(cfg) {
    require(cfg.levels >= 1 && cfg.levels <= 4, "velocity model: levels in [1,4]");
    require(cfg.time_feats % 2 == 0, "velocity model: time_feats must be even");
    int down = 1 << (cfg.levels - 1);
    require(cfg.size % down == 0, "velocity model: size must be divisible by 2^(levels-1)");
    Rng rng(derive_seed(seed, kTagModelInit));

    time_dense_.init("vm.time", cfg.time_feats, cfg.cond_dims, rng);
    attr_dense_.init("vm.attr", cfg.attr_count, cfg.cond_dims, rng);

    int L = cfg.levels;
    down_a_.resize(L);
    down_b_.resize(L);
    inject_down_.resize(L);
    up_a_.resize(std::max(0, L - 1));
    up_b_.resize(std::max(0, L - 1));
    inject_up_.resize(std::max(0, L - 1));

    for (int d = 0; d < L; ++d) {
      int in_ch = d == 0 ? 2 * cfg.in_channels : cfg.channels_at(d - 1);
      int ch = cfg.channels_at(d);
      std::string base = "vm.down" + std::to_string(d);
      down_a_[d].init(base + "a", in_ch, ch, 3, rng);
      inject_down_[d].init(base + ".cond", cfg.cond_dims, ch, rng);
      if (cfg.double_conv) down_b_[d].init(base + "b", ch, ch, 3, rng);
    }
    for (int u = L - 2; u >= 0; --u) {
      int ch = cfg.channels_at(u);
      int in_ch = cfg.channels_at(u + 1) + ch;  // upsampled deeper + skip
      std::string base = "vm.up" + std::to_string(u);
      up_a_[u].init(base + "a", in_ch, ch, 3, rng);
      inject_up_[u].init(base + ".cond", cfg.cond_dims, ch, rng);
      if (cfg.double_conv) up_b_[u].init(base + "b", ch, ch, 3, rng);
    }
    head_.init("vm.head", cfg.channels_at(0), cfg.in_channels, 3, rng);
    head_.zero_params();  // start as the zero field
  }

  const VelocityConfig& config() const { return cfg_; }

  struct Tape {
    std::vector<Scalar> time_feats, attr_in;
    std::vector<Scalar> time_pre, attr_pre, cond;  // cond = silu(t) + silu(a)
    std::vector<std::vector<Scalar>> inject_pre_down, inject_pre_up;
    Chw input;
    std::vector<Chw> down_in, down_pre_a, down_act_a, down_pre_b, down_out, pooled;
    std::vector<Chw> up_in, up_pre_a, up_act_a, up_pre_b, up_out;
    Chw head_in;
  };

  // v = forward(z_t, lq_up, t, attrs). attrs must have attr_count entries.
  Image forward(const Image& zt, const Image& lq_up, Scalar t, const std::vector<Scalar>& attrs,
                Tape& tape) const {
    require(zt.h == cfg_.size && zt.w == cfg_.size && zt.c == cfg_.in_channels,
            "velocity model: z_t " + zt.shape_str() + " does not match model resolution");
    require_same_shape(zt, lq_up, "velocity model conditioning");
    require(static_cast<int>(attrs.size()) == cfg_.attr_count,
            "velocity model: attribute vector size mismatch");
    require(std::isfinite(t), "velocity model: non-finite t");

    tape.time_feats = time_features(t);
    tape.attr_in = attrs;
    tape.time_pre = time_dense_.forward(tape.time_feats);
    tape.attr_pre = attr_dense_.forward(tape.attr_in);
    auto ts = silu_vec_forward(tape.time_pre);
    auto as = silu_vec_forward(tape.attr_pre);
    tape.cond.resize(ts.size());
    for (size_t i = 0; i < ts.size(); ++i) tape.cond[i] = ts[i] + as[i];

    int L = cfg_.levels;
    tape.inject_pre_down.assign(L, {});
    tape.inject_pre_up.assign(std::max(0, L - 1), {});
    tape.down_in.assign(L, {});
    tape.down_pre_a.assign(L, {});
    tape.down_act_a.assign(L, {});
    tape.down_pre_b.assign(L, {});
    tape.down_out.assign(L, {});
    tape.pooled.assign(L, {});
    tape.up_in.assign(std::max(0, L - 1), {});
    tape.up_pre_a.assign(std::max(0, L - 1), {});
    tape.up_act_a.assign(std::max(0, L - 1), {});
    tape.up_pre_b.assign(std::max(0, L - 1), {});
    tape.up_out.assign(std::max(0, L - 1), {});

    tape.input = concat_channels(chw_from_image(zt), chw_from_image(lq_up));

    const Chw* cur = &tape.input;
    for (int d = 0; d < L; ++d) {
      tape.down_in[d] = *cur;
      tape.down_pre_a[d] = down_a_[d].forward(tape.down_in[d]);
      tape.inject_pre_down[d] = inject_down_[d].forward(tape.cond);
      add_channel_bias(tape.down_pre_a[d], tape.inject_pre_down[d]);
      tape.down_act_a[d] = silu_forward(tape.down_pre_a[d]);
      if (cfg_.double_conv) {
        tape.down_pre_b[d] = down_b_[d].forward(tape.down_act_a[d]);
        tape.down_out[d] = silu_forward(tape.down_pre_b[d]);
      } else {
        tape.down_out[d] = tape.down_act_a[d];
      }
      if (d + 1 < L) {
        tape.pooled[d] = avgpool2_forward(tape.down_out[d]);
        cur = &tape.pooled[d];
      }
    }

    const Chw* deep = &tape.down_out[L - 1];
    for (int u = L - 2; u >= 0; --u) {
      Chw upsampled = upsample2_forward(*deep);
      tape.up_in[u] = concat_channels(upsampled, tape.down_out[u]);
      tape.up_pre_a[u] = up_a_[u].forward(tape.up_in[u]);
      tape.inject_pre_up[u] = inject_up_[u].forward(tape.cond);
      add_channel_bias(tape.up_pre_a[u], tape.inject_pre_up[u]);
      tape.up_act_a[u] = silu_forward(tape.up_pre_a[u]);
      if (cfg_.double_conv) {
        tape.up_pre_b[u] = up_b_[u].forward(tape.up_act_a[u]);
        tape.up_out[u] = silu_forward(tape.up_pre_b[u]);
      } else {
        tape.up_out[u] = tape.up_act_a[u];
      }
      deep = &tape.up_out[u];
    }

    tape.head_in = *deep;
    Chw out = head_.forward(tape.head_in);
    Image v = image_from_chw(out);
    for (Scalar x : v.v)
      require_runtime(std::isfinite(x), "velocity model produced a non-finite value");
    return v;
  }

  Image forward(const Image& zt, const Image& lq_up, Scalar t,
                const std::vector<Scalar>& attrs) const {
    Tape tape;
    return forward(zt, lq_up, t, attrs, tape);
  }

  // Accumulates parameter gradients for d(loss)/d(v) = g_v.
  void backward(Tape& tape, const Image& g_v) {
    int L = cfg_.levels;
    std::vector<Scalar> g_cond(cfg_.cond_dims, 0.0);
    std::vector<Chw> skip_grads(std::max(0, L - 1));

    Chw g = head_.backward(tape.head_in, chw_from_image(g_v), true);
    for (int u = 0; u <= L - 2; ++u) {
      if (cfg_.double_conv) {
        g = silu_backward(tape.up_pre_b[u], g);
        g = up_b_[u].backward(tape.up_act_a[u], g, true);
      }
      g = silu_backward(tape.up_pre_a[u], g);
      {
        auto gb = channel_bias_backward(g);
        auto gc = inject_up_[u].backward(tape.cond, gb, true);
        for (int i = 0; i < cfg_.cond_dims; ++i) g_cond[i] += gc[i];
      }
      g = up_a_[u].backward(tape.up_in[u], g, true);
      // Split into the upsampled-deeper part and the skip part.
      int deep_ch = cfg_.channels_at(u + 1);
      Chw g_deep(deep_ch, g.h, g.w);
      std::copy(g.v.begin(), g.v.begin() + g_deep.v.size(), g_deep.v.begin());
      Chw g_skip(cfg_.channels_at(u), g.h, g.w);
      std::copy(g.v.begin() + g_deep.v.size(), g.v.end(), g_skip.v.begin());
      skip_grads[u] = std::move(g_skip);
      g = upsample2_backward(g_deep);
    }

    // Down path, deepest first. g currently targets down_out[L-1].
    for (int d = L - 1; d >= 0; --d) {
      Chw g_out;
      if (d == L - 1) {
        g_out = std::move(g);
      } else {
        // Gradient through the pool into down_out[d], plus the skip gradient.
        g_out = avgpool2_backward(g, tape.down_out[d].h, tape.down_out[d].w);
        const Chw& skip = skip_grads[d];
        for (size_t i = 0; i < g_out.v.size(); ++i) g_out.v[i] += skip.v[i];
      }
      if (cfg_.double_conv) {
        g_out = silu_backward(tape.down_pre_b[d], g_out);
        g_out = down_b_[d].backward(tape.down_act_a[d], g_out, true);
      }
      g_out = silu_backward(tape.down_pre_a[d], g_out);
      {
        auto gb = channel_bias_backward(g_out);
        auto gc = inject_down_[d].backward(tape.cond, gb, true);
        for (int i = 0; i < cfg_.cond_dims; ++i) g_cond[i] += gc[i];
      }
      g = down_a_[d].backward(tape.down_in[d], g_out, true);
    }

    auto g_tp = silu_vec_backward(tape.time_pre, g_cond);
    time_dense_.backward(tape.time_feats, g_tp, true);
    auto g_ap = silu_vec_backward(tape.attr_pre, g_cond);
    attr_dense_.backward(tape.attr_in, g_ap, true);
  }

  std::vector<ParamTensor*> params() {
    std::vector<ParamTensor*> out;
    auto add = [&](Conv2d& c) {
      out.push_back(&c.w);
      out.push_back(&c.b);
    };
    auto addd = [&](Dense& d) {
      out.push_back(&d.w);
      out.push_back(&d.b);
    };
    addd(time_dense_);
    addd(attr_dense_);
    for (int d = 0; d < cfg_.levels; ++d) {
      add(down_a_[d]);
      addd(inject_down_[d]);
      if (cfg_.double_conv) add(down_b_[d]);
    }
    for (int u = 0; u < cfg_.levels - 1; ++u) {
      add(up_a_[u]);
      addd(inject_up_[u]);
      if (cfg_.double_conv) add(up_b_[u]);
    }
    add(head_);
    return out;
  }

  int64_t param_count() {
    int64_t n = 0;
    for (auto* p : params()) n += static_cast<int64_t>(p->value.size());
    return n;
  }

 private:
  std::vector<Scalar> time_features(Scalar t) const {
    int half = cfg_.time_feats / 2;
    std::vector<Scalar> f(cfg_.time_feats);
    for (int i = 0; i < half; ++i) {
      Scalar freq = std::pow(10.0, 3.0 * i / std::max(1, half - 1));
      f[2 * i] = std::sin(t * freq);
      f[2 * i + 1] = std::cos(t * freq);
    }
    return f;
  }

  VelocityConfig cfg_;
  Dense time_dense_, attr_dense_;
  std::vector<Conv2d> down_a_, down_b_;
  std::vector<Conv2d> up_a_, up_b_;
  std::vector<Dense> inject_down_, inject_up_;
  Conv2d head_;
};

}  // namespace a2bfr
