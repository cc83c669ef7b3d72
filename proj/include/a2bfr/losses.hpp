#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/common.hpp"
#include "a2bfr/image.hpp"

namespace a2bfr {

struct LossWeights {
  Scalar lambda_attr = 0.2;  // weight on the attribute loss inside AAL
  Scalar dual_alpha = 0.2;   // weight on the dual loss in the total objective
  Scalar margin = 0.5;       // confidence-gap margin of the dual loss

  void validate() const {
    require(std::isfinite(lambda_attr) && lambda_attr >= 0.0, "lambda must be >= 0");
    require(std::isfinite(dual_alpha) && dual_alpha >= 0.0, "alpha must be >= 0");
    require(std::isfinite(margin) && margin > 0.0 && margin <= 1.0, "margin must be in (0,1]");
  }
};

// Mean squared error between the predicted velocity and the rectified-flow
// target eps - z0.
inline Scalar flow_loss(const Image& v_pred, const Image& z0, const Image& eps) {
  require_same_shape(v_pred, z0, "flow_loss");
  require_same_shape(v_pred, eps, "flow_loss");
  Scalar acc = 0.0;
  for (size_t i = 0; i < v_pred.v.size(); ++i) {
    Scalar d = v_pred.v[i] - (eps.v[i] - z0.v[i]);
    acc += d * d;
  }
  return acc / static_cast<Scalar>(v_pred.v.size());
}

inline Image flow_loss_grad(const Image& v_pred, const Image& z0, const Image& eps) {
  Image g(v_pred.h, v_pred.w, v_pred.c);
  Scalar inv_n = 1.0 / static_cast<Scalar>(v_pred.v.size());
  for (size_t i = 0; i < v_pred.v.size(); ++i)
    g.v[i] = 2.0 * (v_pred.v[i] - (eps.v[i] - z0.v[i])) * inv_n;
  return g;
}

inline Scalar clamp_target(Scalar t) {
  const Scalar lo = 1e-4, hi = 1.0 - 1e-4;
  return t < lo ? lo : (t > hi ? hi : t);
}

// Mean binary cross-entropy of predictions against fixed targets.
inline Scalar bce_mean(const std::vector<Scalar>& p, const std::vector<Scalar>& targets) {
  require(p.size() == targets.size(), "bce: size mismatch");
  Scalar acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    Scalar t = clamp_target(targets[i]);
    acc += -(t * std::log(p[i]) + (1.0 - t) * std::log(1.0 - p[i]));
  }
  return acc / static_cast<Scalar>(p.size());
}

inline std::vector<Scalar> bce_grad(const std::vector<Scalar>& p,
                                    const std::vector<Scalar>& targets) {
  std::vector<Scalar> g(p.size());
  Scalar inv_k = 1.0 / static_cast<Scalar>(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    Scalar t = clamp_target(targets[i]);
    g[i] = (-t / p[i] + (1.0 - t) / (1.0 - p[i])) * inv_k;
  }
  return g;
}

// L_attr = BCE(E(pred), stopgrad E(gt)), targets clamped to [1e-4, 1-1e-4].
// pred_image is the clamped pixel decode of Z0_hat.
inline Scalar attr_loss(const AttrEncoder& enc, const Image& pred_image, const Image& gt_image) {
  auto targets = enc.encode_attrs(gt_image);
  auto conf = enc.encode_attrs(pred_image);
  return bce_mean(conf, targets);
}

// Value plus gradient with respect to pred_image pixels, for training.
// Targets (the GT branch) are constants.
inline Scalar attr_loss_with_grad(AttrEncoder& enc, const Image& pred_image, const Image& gt_image,
                                  Image& grad_pred) {
  auto targets = enc.encode_attrs(gt_image);
  AttrEncoder::Tape tape;
  auto out = enc.forward(pred_image, tape);
  Scalar loss = bce_mean(out.conf, targets);
  auto g_conf = bce_grad(out.conf, targets);
  grad_pred = enc.backward(tape, g_conf, {}, {}, /*train=*/false);
  return loss;
}

// L_AAL = L_diff + lambda * L_attr.
inline Scalar aal_loss(Scalar l_diff, Scalar l_attr, const LossWeights& w) {
  require(std::isfinite(l_diff) && std::isfinite(l_attr), "aal_loss: non-finite input");
  require(l_diff >= 0.0 && l_attr >= 0.0, "aal_loss: losses must be >= 0");
  return l_diff + w.lambda_attr * l_attr;
}

// L_dual = max(0, m - |a_tar - a_src|).
inline Scalar dual_loss(Scalar a_src, Scalar a_tar, Scalar m) {
  require(m > 0.0, "dual_loss: margin must be > 0");
  require(a_src >= 0.0 && a_src <= 1.0 && a_tar >= 0.0 && a_tar <= 1.0,
          "dual_loss: scores must be confidences in [0,1]");
  Scalar gap = std::abs(a_tar - a_src);
  return gap >= m ? 0.0 : m - gap;
}

// Subgradients: zero when the hinge is inactive or the gap is exactly zero.
inline void dual_loss_grad(Scalar a_src, Scalar a_tar, Scalar m, Scalar& g_src, Scalar& g_tar) {
  Scalar diff = a_tar - a_src;
  if (std::abs(diff) >= m || diff == 0.0) {
    g_src = 0.0;
    g_tar = 0.0;
    return;
  }
  Scalar sign = diff > 0.0 ? 1.0 : -1.0;
  g_tar = -sign;
  g_src = sign;
}

// Confidence of the edited attribute.
inline Scalar extract_edited_score(const AttrEncoder& enc, const Image& img, int edited_index) {
  require(edited_index >= 0 && edited_index < enc.config().attr_count,
          "extract_edited_score: index out of range");
  return enc.encode_attrs(img)[edited_index];
}

// L_total = AAL_src + AAL_tar + alpha * L_dual.
inline Scalar total_loss(Scalar aal_src, Scalar aal_tar, Scalar l_dual, const LossWeights& w) {
  require(std::isfinite(aal_src) && std::isfinite(aal_tar) && std::isfinite(l_dual),
          "total_loss: non-finite input");
  return aal_src + aal_tar + w.dual_alpha * l_dual;
}

}  // namespace a2bfr
