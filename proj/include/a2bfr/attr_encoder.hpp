#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/image.hpp"
#include "a2bfr/nn.hpp"
#include "a2bfr/rng.hpp"

namespace a2bfr {

struct EncoderConfig {
  int input_size = 64;   // must be divisible by 16
  int in_channels = 3;
  int base_channels = 16;
  int attr_count = 6;
  int id_dims = 32;
};

// Small convolutional attribute/identity encoder: four conv blocks with 2x
// average pooling, a global-average feature, a sigmoid attribute head, and a
// unit-norm identity head.
class AttrEncoder {
 public:
  AttrEncoder() = default;

  explicit AttrEncoder(const EncoderConfig& cfg, uint64_t seed) : cfg_(cfg) {
    require(cfg.input_size % 16 == 0 && cfg.input_size >= 16,
            "encoder input size must be a multiple of 16");
    Rng rng(derive_seed(seed, kTagEncoderInit));
    int c = cfg.base_channels;
    conv1_.init("enc.conv1", cfg.in_channels, c, 3, rng);
    conv2_.init("enc.conv2", c, 2 * c, 3, rng);
    conv3_.init("enc.conv3", 2 * c, 3 * c, 3, rng);
    conv4_.init("enc.conv4", 3 * c, 4 * c, 3, rng);
    attr_hidden_.init("enc.attr_hidden", 4 * c, 4 * c, rng);
    attr_head_.init("enc.attr_head", 4 * c, cfg.attr_count, rng);
    id_head_.init("enc.id_head", 4 * c, cfg.id_dims, rng);
  }

  const EncoderConfig& config() const { return cfg_; }
  int feature_dims() const { return 4 * cfg_.base_channels; }

  // Perceptual-distance calibration constant (set after training, saved with
  // the checkpoint).
  Scalar percep_scale = 1.0;
  bool trained = false;

  struct Output {
    std::vector<Scalar> conf;      // K, strictly inside (0,1)
    std::vector<Scalar> id_unit;   // unit norm
    std::vector<Scalar> feature;   // penultimate, 4*base
  };

  struct Tape {
    Chw in0;
    Chw pre1, act1, pool1;
    Chw pre2, act2, pool2;
    Chw pre3, act3, pool3;
    Chw pre4, act4, pool4;
    std::vector<Scalar> feature;
    std::vector<Scalar> attr_hidden_pre;
    std::vector<Scalar> attr_hidden_act;
    std::vector<Scalar> attr_logits;  // pre-clamp
    std::vector<Scalar> conf;
    std::vector<Scalar> id_raw;
    std::vector<Scalar> id_unit;
    Scalar id_norm = 0.0;
  };

  Output forward(const Image& img, Tape& t) const {
    require(img.h == cfg_.input_size && img.w == cfg_.input_size && img.c == cfg_.in_channels,
            "encoder: image " + img.shape_str() + " does not match model resolution " +
                std::to_string(cfg_.input_size));
    t.in0 = chw_from_image(img);
    t.pre1 = conv1_.forward(t.in0);
    t.act1 = silu_forward(t.pre1);
    t.pool1 = avgpool2_forward(t.act1);
    t.pre2 = conv2_.forward(t.pool1);
    t.act2 = silu_forward(t.pre2);
    t.pool2 = avgpool2_forward(t.act2);
    t.pre3 = conv3_.forward(t.pool2);
    t.act3 = silu_forward(t.pre3);
    t.pool3 = avgpool2_forward(t.act3);
    t.pre4 = conv4_.forward(t.pool3);
    t.act4 = silu_forward(t.pre4);
    t.pool4 = avgpool2_forward(t.act4);
    t.feature = global_avgpool_forward(t.pool4);

    t.attr_hidden_pre = attr_hidden_.forward(t.feature);
    t.attr_hidden_act = silu_vec_forward(t.attr_hidden_pre);
    t.attr_logits = attr_head_.forward(t.attr_hidden_act);
    t.conf.resize(t.attr_logits.size());
    for (size_t i = 0; i < t.conf.size(); ++i) {
      Scalar logit = t.attr_logits[i];
      // |logit| capped at 36 keeps sigmoid strictly inside (0,1) in double.
      if (logit > 36.0) logit = 36.0;
      if (logit < -36.0) logit = -36.0;
      t.conf[i] = sigmoid(logit);
    }

    t.id_raw = id_head_.forward(t.feature);
    Scalar norm_sq = 0.0;
    for (Scalar v : t.id_raw) norm_sq += v * v;
    t.id_norm = std::sqrt(norm_sq) + 1e-12;
    t.id_unit.resize(t.id_raw.size());
    for (size_t i = 0; i < t.id_raw.size(); ++i) t.id_unit[i] = t.id_raw[i] / t.id_norm;

    return Output{t.conf, t.id_unit, t.feature};
  }

  // Backpropagates head gradients to the input image. Parameter gradients are
  // accumulated only when train is set (the encoder is frozen inside
  // restoration training, but gradients still flow through it).
  Image backward(Tape& t, const std::vector<Scalar>& g_conf, const std::vector<Scalar>& g_id_unit,
                 const std::vector<Scalar>& g_feature, bool train) {
    std::vector<Scalar> g_feat(feature_dims(), 0.0);
    if (!g_feature.empty())
      for (int i = 0; i < feature_dims(); ++i) g_feat[i] = g_feature[i];

    if (!g_conf.empty()) {
      std::vector<Scalar> g_logits(t.conf.size());
      for (size_t i = 0; i < t.conf.size(); ++i) {
        Scalar g = std::abs(t.attr_logits[i]) < 36.0 ? g_conf[i] : 0.0;
        g_logits[i] = g * t.conf[i] * (1.0 - t.conf[i]);
      }
      auto g_hidden = attr_head_.backward(t.attr_hidden_act, g_logits, train);
      g_hidden = silu_vec_backward(t.attr_hidden_pre, g_hidden);
      auto g = attr_hidden_.backward(t.feature, g_hidden, train);
      for (int i = 0; i < feature_dims(); ++i) g_feat[i] += g[i];
    }

    if (!g_id_unit.empty()) {
      // y = r / |r|;  dr = (g - y (g . y)) / |r|
      Scalar dot = 0.0;
      for (size_t i = 0; i < t.id_unit.size(); ++i) dot += g_id_unit[i] * t.id_unit[i];
      std::vector<Scalar> g_raw(t.id_raw.size());
      for (size_t i = 0; i < t.id_raw.size(); ++i)
        g_raw[i] = (g_id_unit[i] - t.id_unit[i] * dot) / t.id_norm;
      auto g = id_head_.backward(t.feature, g_raw, train);
      for (int i = 0; i < feature_dims(); ++i) g_feat[i] += g[i];
    }

    Chw g4 = global_avgpool_backward(g_feat, t.pool4.c, t.pool4.h, t.pool4.w);
    g4 = avgpool2_backward(g4, t.act4.h, t.act4.w);
    g4 = silu_backward(t.pre4, g4);
    Chw g3 = conv4_.backward(t.pool3, g4, train);
    g3 = avgpool2_backward(g3, t.act3.h, t.act3.w);
    g3 = silu_backward(t.pre3, g3);
    Chw g2 = conv3_.backward(t.pool2, g3, train);
    g2 = avgpool2_backward(g2, t.act2.h, t.act2.w);
    g2 = silu_backward(t.pre2, g2);
    Chw g1 = conv2_.backward(t.pool1, g2, train);
    g1 = avgpool2_backward(g1, t.act1.h, t.act1.w);
    g1 = silu_backward(t.pre1, g1);
    Chw g0 = conv1_.backward(t.in0, g1, train);
    return image_from_chw(g0);
  }

  std::vector<Scalar> encode_attrs(const Image& img) const {
    Tape t;
    return forward(img, t).conf;
  }

  std::vector<Scalar> encode_identity(const Image& img) const {
    Tape t;
    return forward(img, t).id_unit;
  }

  std::vector<Scalar> feature(const Image& img) const {
    Tape t;
    return forward(img, t).feature;
  }

  std::vector<ParamTensor*> params() {
    return {&conv1_.w, &conv1_.b, &conv2_.w, &conv2_.b, &conv3_.w, &conv3_.b,
            &conv4_.w, &conv4_.b, &attr_hidden_.w, &attr_hidden_.b,
            &attr_head_.w, &attr_head_.b, &id_head_.w, &id_head_.b};
  }

  void zero_attr_head() { attr_head_.zero_params(); }

 private:
  EncoderConfig cfg_;
  Conv2d conv1_, conv2_, conv3_, conv4_;
  Dense attr_hidden_, attr_head_, id_head_;
};

inline Scalar cosine(const std::vector<Scalar>& a, const std::vector<Scalar>& b) {
  require(a.size() == b.size(), "cosine: dimension mismatch");
  if (a == b) return 1.0;  // self-similarity is exact
  Scalar dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  Scalar c = dot / (std::sqrt(na) * std::sqrt(nb));
  return c < -1.0 ? -1.0 : (c > 1.0 ? 1.0 : c);
}

// Penultimate-feature distance scaled so a reference corpus has median 0.2.
inline Scalar perceptual_distance(const AttrEncoder& enc, const Image& a, const Image& b) {
  auto fa = enc.feature(a);
  auto fb = enc.feature(b);
  Scalar acc = 0.0;
  for (size_t i = 0; i < fa.size(); ++i) {
    Scalar d = fa[i] - fb[i];
    acc += d * d;
  }
  return enc.percep_scale * std::sqrt(acc / static_cast<Scalar>(fa.size()));
}

}  // namespace a2bfr
