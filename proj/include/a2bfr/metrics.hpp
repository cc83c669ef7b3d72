#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/common.hpp"
#include "a2bfr/degrade.hpp"
#include "a2bfr/flowcore.hpp"
#include "a2bfr/manifest.hpp"
#include "a2bfr/parallel.hpp"
#include "a2bfr/velocity_model.hpp"

namespace a2bfr {

// 1 iff the encoder's read of the edited attribute agrees with the requested
// state at threshold 0.5; a confidence of exactly 0.5 counts as positive.
inline int attribute_accuracy(const AttrEncoder& enc, const Image& restored, int edited_index,
                              int target_state) {
  require(edited_index >= 0 && edited_index < enc.config().attr_count,
          "attribute_accuracy: index out of range");
  require(target_state == 0 || target_state == 1, "attribute_accuracy: target must be 0 or 1");
  bool positive = enc.encode_attrs(restored)[edited_index] >= 0.5;
  return positive == (target_state == 1) ? 1 : 0;
}

inline Scalar id_similarity(const AttrEncoder& enc, const Image& a, const Image& b) {
  return cosine(enc.encode_identity(a), enc.encode_identity(b));
}

// Identity similarity between two restorations of the same LQ input under
// different prompts.
inline Scalar cp_ids(const AttrEncoder& enc, const Image& restored_src, const Image& restored_tar) {
  return id_similarity(enc, restored_src, restored_tar);
}

struct EvalReport {
  Scalar aa = 0.0;
  Scalar ids_mean = 0.0;
  Scalar cp_ids_mean = 0.0;
  Scalar percep_mean = 0.0;
  int64_t n = 0;
  std::vector<Scalar> per_attribute;
  std::vector<int64_t> per_attribute_n;

  json to_json() const {
    return json{{"aa", aa},
                {"ids_mean", ids_mean},
                {"cp_ids_mean", cp_ids_mean},
                {"percep_mean", percep_mean},
                {"n", n},
                {"per_attribute", per_attribute},
                {"per_attribute_n", per_attribute_n}};
  }
};

struct EvalConfig {
  SamplerConfig sampler;
  ParamRanges degrade_ranges;
  uint64_t seed = 0;
};

struct EvalRow {
  int64_t id = 0;
  int edited_index = -1;
  int target_state = 0;
  int aa = 0;
  Scalar ids = 0.0;
  Scalar cp_ids = 0.0;
  Scalar percep = 0.0;
};

// Restores every record twice (source and target prompts) from one seeded
// degradation of the source image, sharing the initial sampling noise so the
// prompt is the only difference. Deterministic in (manifest, config).
template <typename Model>
EvalReport evaluate(const Model& model, const AttrEncoder& enc, const Manifest& manifest,
                    const EvalConfig& cfg, std::vector<EvalRow>* rows_out = nullptr) {
  require(!manifest.records.empty(), "evaluate: empty manifest");
  require(manifest.fully_paired(), "evaluate: manifest must be paired");

  const int k = enc.config().attr_count;
  std::vector<EvalRow> rows(manifest.size());

  parallel_for(static_cast<int64_t>(manifest.size()), [&](int64_t i) {
    const auto& meta = manifest.records[i];
    Image src_gt = read_png(manifest.base_dir / meta.src_png);
    Image tar_gt = read_png(manifest.base_dir / meta.tar_png);

    DegradeConfig dcfg = sample_degrade_config(
        derive_seed(cfg.seed, kTagEval, static_cast<uint64_t>(meta.id)), cfg.degrade_ranges);
    Image lq = degrade(src_gt, dcfg);
    Image lq_up = bilinear_upsample(lq, src_gt.h, src_gt.w);

    uint64_t init_seed = derive_seed(cfg.seed, kTagSampleInit, static_cast<uint64_t>(meta.id));
    Image restored_src =
        euler_sample(model, Conditioning{lq_up, meta.src_attrs}, cfg.sampler, init_seed);
    Image restored_tar =
        euler_sample(model, Conditioning{lq_up, meta.tar_attrs}, cfg.sampler, init_seed);

    EvalRow row;
    row.id = meta.id;
    row.edited_index = meta.edited_index;
    row.target_state = meta.tar_attrs[meta.edited_index] >= 0.5 ? 1 : 0;
    row.aa = attribute_accuracy(enc, restored_tar, meta.edited_index, row.target_state);
    row.ids = 0.5 * (id_similarity(enc, restored_src, src_gt) +
                     id_similarity(enc, restored_tar, tar_gt));
    row.cp_ids = cp_ids(enc, restored_src, restored_tar);
    row.percep = 0.5 * (perceptual_distance(enc, restored_src, src_gt) +
                        perceptual_distance(enc, restored_tar, tar_gt));
    rows[i] = row;
  });

  EvalReport report;
  report.n = static_cast<int64_t>(rows.size());
  report.per_attribute.assign(k, 0.0);
  report.per_attribute_n.assign(k, 0);
  for (const auto& row : rows) {
    report.aa += row.aa;
    report.ids_mean += row.ids;
    report.cp_ids_mean += row.cp_ids;
    report.percep_mean += row.percep;
    if (row.edited_index >= 0 && row.edited_index < k) {
      report.per_attribute[row.edited_index] += row.aa;
      report.per_attribute_n[row.edited_index]++;
    }
  }
  report.aa /= report.n;
  report.ids_mean /= report.n;
  report.cp_ids_mean /= report.n;
  report.percep_mean /= report.n;
  for (int a = 0; a < k; ++a)
    if (report.per_attribute_n[a] > 0) report.per_attribute[a] /= report.per_attribute_n[a];

  if (rows_out) *rows_out = std::move(rows);
  return report;
}

// Contact sheet: one row per record, columns LQ (upsampled), restored with
// the source prompt, restored with the target prompt, source GT.
template <typename Model>
Image build_grid(const Model& model, const Manifest& manifest, const EvalConfig& cfg,
                 int max_rows = 8) {
  require(!manifest.records.empty(), "grid: empty manifest");
  int rows = std::min<int>(max_rows, static_cast<int>(manifest.size()));
  int s = model.config().size;
  Image sheet(rows * s, 4 * s, model.config().in_channels);

  std::vector<Image> tiles(static_cast<size_t>(rows) * 4);
  parallel_for(rows, [&](int64_t i) {
    const auto& meta = manifest.records[i];
    Image src_gt = read_png(manifest.base_dir / meta.src_png);
    DegradeConfig dcfg = sample_degrade_config(
        derive_seed(cfg.seed, kTagEval, static_cast<uint64_t>(meta.id)), cfg.degrade_ranges);
    Image lq_up = bilinear_upsample(degrade(src_gt, dcfg), s, s);
    uint64_t init_seed = derive_seed(cfg.seed, kTagSampleInit, static_cast<uint64_t>(meta.id));
    tiles[i * 4 + 0] = lq_up;
    tiles[i * 4 + 1] =
        euler_sample(model, Conditioning{lq_up, meta.src_attrs}, cfg.sampler, init_seed);
    tiles[i * 4 + 2] =
        euler_sample(model, Conditioning{lq_up, meta.tar_attrs}, cfg.sampler, init_seed);
    tiles[i * 4 + 3] = src_gt;
  });

  for (int i = 0; i < rows; ++i)
    for (int col = 0; col < 4; ++col) {
      const Image& tile = tiles[static_cast<size_t>(i) * 4 + col];
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          for (int ch = 0; ch < sheet.c; ++ch)
            sheet.at(i * s + y, col * s + x, ch) = tile.at(y, x, ch);
    }
  return sheet;
}

}  // namespace a2bfr
