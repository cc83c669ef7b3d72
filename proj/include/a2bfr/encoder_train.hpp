#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/common.hpp"
#include "a2bfr/degrade.hpp"
#include "a2bfr/losses.hpp"
#include "a2bfr/manifest.hpp"
#include "a2bfr/optimizer.hpp"
#include "a2bfr/rng.hpp"
#include "a2bfr/synthgen.hpp"

namespace a2bfr {

struct EncoderTrainConfig {
  int64_t steps = 800;
  int batch_size = 8;
  Scalar learning_rate = 1e-3;
  uint64_t seed = 1;
  Scalar holdout_fraction = 0.1;
  Scalar label_smooth = 0.02;  // keeps logits bounded and confidences open
  Scalar id_margin = 0.1;      // hinge threshold for different-identity cosine
  Scalar id_weight = 0.4;
  Scalar aug_noise = 0.04;     // uniform noise sigma bound
  Scalar aug_blur_max = 0.8;   // uniform blur sigma bound
  EncoderConfig arch;
};

struct EncoderEvalStats {
  Scalar attr_accuracy = 0.0;
  std::vector<Scalar> per_attr_accuracy;
  Scalar same_id_cosine = 0.0;
  Scalar diff_id_cosine = 0.0;
  int64_t holdout_records = 0;
};

namespace detail {

inline Image augment(const Image& img, Rng& rng, const EncoderTrainConfig& cfg) {
  Image out = img;
  Scalar blur_sigma = rng.uniform(0.0, cfg.aug_blur_max);
  if (blur_sigma > 0.05) out = separable_blur(out, gaussian_kernel(blur_sigma));
  Scalar noise = rng.uniform(0.0, cfg.aug_noise);
  if (noise > 0.0)
    for (auto& v : out.v) v = a2bfr::clamp01(v + noise * rng.gaussian());
  return out;
}

struct LoadedPair {
  Image src, tar;
  const RecordMeta* meta;
};

}  // namespace detail

inline EncoderEvalStats evaluate_encoder(const AttrEncoder& enc,
                                         const std::vector<detail::LoadedPair>& pairs,
                                         size_t begin, size_t end) {
  EncoderEvalStats stats;
  int k = enc.config().attr_count;
  stats.per_attr_accuracy.assign(k, 0.0);
  std::vector<int64_t> per_attr_n(k, 0);
  Scalar same_acc = 0.0, diff_acc = 0.0;
  int64_t same_n = 0, diff_n = 0;
  std::vector<Scalar> prev_id;

  for (size_t i = begin; i < end; ++i) {
    const auto& pair = pairs[i];
    for (const auto& [img, labels] :
         {std::pair<const Image&, const std::vector<Scalar>&>{pair.src, pair.meta->src_attrs},
          {pair.tar, pair.meta->tar_attrs}}) {
      auto conf = enc.encode_attrs(img);
      for (int a = 0; a < k; ++a) {
        bool correct = (conf[a] >= 0.5) == (labels[a] >= 0.5);
        stats.per_attr_accuracy[a] += correct ? 1.0 : 0.0;
        per_attr_n[a]++;
      }
    }
    auto id_src = enc.encode_identity(pair.src);
    auto id_tar = enc.encode_identity(pair.tar);
    same_acc += cosine(id_src, id_tar);
    same_n++;
    if (!prev_id.empty()) {
      diff_acc += cosine(prev_id, id_src);
      diff_n++;
    }
    prev_id = id_src;
  }

  Scalar total = 0.0;
  int64_t total_n = 0;
  for (int a = 0; a < k; ++a) {
    total += stats.per_attr_accuracy[a];
    total_n += per_attr_n[a];
    stats.per_attr_accuracy[a] /= std::max<int64_t>(1, per_attr_n[a]);
  }
  stats.attr_accuracy = total / std::max<int64_t>(1, total_n);
  stats.same_id_cosine = same_n ? same_acc / same_n : 0.0;
  stats.diff_id_cosine = diff_n ? diff_acc / diff_n : 0.0;
  stats.holdout_records = static_cast<int64_t>(end - begin);
  return stats;
}

inline EncoderEvalStats evaluate_encoder(const AttrEncoder& enc, const Manifest& manifest,
                                         size_t begin, size_t end) {
  std::vector<detail::LoadedPair> pairs;
  pairs.reserve(end - begin);
  for (size_t i = begin; i < end; ++i) {
    const auto& meta = manifest.records[i];
    pairs.push_back({read_png(manifest.base_dir / meta.src_png),
                     read_png(manifest.base_dir / meta.tar_png), &meta});
  }
  return evaluate_encoder(enc, pairs, 0, pairs.size());
}

// Trains the attribute head (BCE on ground-truth labels, lightly smoothed)
// and the identity head (cosine pulled to 1 on same-identity pairs, hinged
// below id_margin on different-identity pairs). Each batch item forwards two
// images; attribute and identity gradients share one backward pass per
// image. Augmentation with mild blur and noise keeps the encoder usable on
// restored images.
inline AttrEncoder train_encoder(const Manifest& manifest, const EncoderTrainConfig& cfg,
                                 EncoderEvalStats* stats_out = nullptr) {
  require(manifest.size() >= 1000,
          "train_encoder: corpus must have at least 1000 records, got " +
              std::to_string(manifest.size()));
  require(manifest.fully_paired(), "train_encoder: corpus must be paired");

  size_t n_holdout = static_cast<size_t>(std::ceil(manifest.size() * cfg.holdout_fraction));
  size_t n_train = manifest.size() - n_holdout;
  require(n_train > 1, "train_encoder: not enough training records");

  std::vector<detail::LoadedPair> pairs;
  pairs.reserve(manifest.size());
  for (const auto& meta : manifest.records)
    pairs.push_back({read_png(manifest.base_dir / meta.src_png),
                     read_png(manifest.base_dir / meta.tar_png), &meta});

  AttrEncoder enc(cfg.arch, cfg.seed);
  RmsProp opt(cfg.learning_rate);
  opt.attach(enc.params());

  const int k = cfg.arch.attr_count;
  auto smooth = [&](const std::vector<Scalar>& labels) {
    std::vector<Scalar> t(k);
    for (int a = 0; a < k; ++a)
      t[a] = labels[a] >= 0.5 ? 1.0 - cfg.label_smooth : cfg.label_smooth;
    return t;
  };

  for (int64_t step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, kTagEncoderStep, static_cast<uint64_t>(step)));
    opt.zero_grad();
    Scalar inv_b = 1.0 / cfg.batch_size;

    for (int b = 0; b < cfg.batch_size; ++b) {
      bool same = rng.bernoulli(0.5);
      size_t ia = rng.uniform_index(n_train);
      const detail::LoadedPair& pa = pairs[ia];

      const Image* img1;
      const Image* img2;
      const std::vector<Scalar>* labels1;
      const std::vector<Scalar>* labels2;
      if (same) {
        img1 = &pa.src;
        labels1 = &pa.meta->src_attrs;
        img2 = &pa.tar;
        labels2 = &pa.meta->tar_attrs;
      } else {
        size_t ib = (ia + 1 + rng.uniform_index(n_train - 1)) % n_train;
        const detail::LoadedPair& pb = pairs[ib];
        bool tar1 = rng.bernoulli(0.5), tar2 = rng.bernoulli(0.5);
        img1 = tar1 ? &pa.tar : &pa.src;
        labels1 = tar1 ? &pa.meta->tar_attrs : &pa.meta->src_attrs;
        img2 = tar2 ? &pb.tar : &pb.src;
        labels2 = tar2 ? &pb.meta->tar_attrs : &pb.meta->src_attrs;
      }

      Image a1 = detail::augment(*img1, rng, cfg);
      Image a2 = detail::augment(*img2, rng, cfg);

      AttrEncoder::Tape tape1, tape2;
      auto out1 = enc.forward(a1, tape1);
      auto out2 = enc.forward(a2, tape2);

      auto g_conf1 = bce_grad(out1.conf, smooth(*labels1));
      auto g_conf2 = bce_grad(out2.conf, smooth(*labels2));
      for (auto& g : g_conf1) g *= inv_b;
      for (auto& g : g_conf2) g *= inv_b;

      Scalar dot = 0.0;
      for (size_t i = 0; i < out1.id_unit.size(); ++i) dot += out1.id_unit[i] * out2.id_unit[i];
      Scalar gscale = 0.0;
      if (same) {
        gscale = -cfg.id_weight * inv_b;  // L = 1 - cos
      } else if (dot > cfg.id_margin) {
        gscale = cfg.id_weight * inv_b;  // L = max(0, cos - margin)
      }
      std::vector<Scalar> g_id1, g_id2;
      if (gscale != 0.0) {
        g_id1 = out2.id_unit;
        g_id2 = out1.id_unit;
        for (auto& g : g_id1) g *= gscale;
        for (auto& g : g_id2) g *= gscale;
      }

      enc.backward(tape1, g_conf1, g_id1, {}, /*train=*/true);
      enc.backward(tape2, g_conf2, g_id2, {}, /*train=*/true);
    }
    opt.step();
  }

  // Perceptual-distance calibration: median feature distance of held-out
  // single-attribute pairs is pinned to 0.2.
  enc.percep_scale = 1.0;
  std::vector<Scalar> raw;
  for (size_t i = n_train; i < pairs.size(); ++i)
    raw.push_back(perceptual_distance(enc, pairs[i].src, pairs[i].tar));
  require_runtime(!raw.empty(), "train_encoder: empty holdout");
  std::nth_element(raw.begin(), raw.begin() + raw.size() / 2, raw.end());
  Scalar median = raw[raw.size() / 2];
  require_runtime(median > 0.0, "train_encoder: degenerate perceptual distances");
  enc.percep_scale = 0.2 / median;
  enc.trained = true;

  if (stats_out) *stats_out = evaluate_encoder(enc, pairs, n_train, pairs.size());
  return enc;
}

}  // namespace a2bfr
