#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/common.hpp"
#include "a2bfr/flowedit.hpp"
#include "a2bfr/image_io.hpp"
#include "a2bfr/manifest.hpp"

namespace a2bfr {

struct QCThresholds {
  Scalar attr_conf_min = 0.6;
  Scalar id_sim_min = 0.5;
  Scalar percep_max = 0.3;

  void validate() const {
    require(attr_conf_min > 0.0 && attr_conf_min < 1.0, "qc: attr_conf_min in (0,1)");
    require(id_sim_min > -1.0 && id_sim_min < 1.0, "qc: id_sim_min in (-1,1)");
    require(percep_max > 0.0, "qc: percep_max > 0");
  }
};

enum class QCReason { Kept, AttributeWeak, IdentityShift, PerceptualDrift };

inline const char* qc_reason_name(QCReason r) {
  switch (r) {
    case QCReason::Kept: return "kept";
    case QCReason::AttributeWeak: return "attribute_weak";
    case QCReason::IdentityShift: return "identity_shift";
    case QCReason::PerceptualDrift: return "perceptual_drift";
  }
  return "?";
}

struct QCScores {
  Scalar attr_conf = 0.0;  // aligned to the requested target state
  Scalar id_sim = 0.0;
  Scalar percep = 0.0;
};

struct QCVerdict {
  bool kept = false;
  QCReason reason = QCReason::Kept;
  QCScores scores;
};

enum class AttrLabel { negative, unknown, positive };

// Confidence > 0.6 is positive, < 0.4 negative; the boundaries themselves
// are unknown (strict inequalities).
inline std::vector<AttrLabel> label_attributes(const std::vector<Scalar>& conf) {
  std::vector<AttrLabel> labels(conf.size());
  for (size_t i = 0; i < conf.size(); ++i) {
    if (conf[i] > 0.6)
      labels[i] = AttrLabel::positive;
    else if (conf[i] < 0.4)
      labels[i] = AttrLabel::negative;
    else
      labels[i] = AttrLabel::unknown;
  }
  return labels;
}

// Stage order is fixed: attribute, then identity, then perceptual; the first
// failing stage names the reason. Boundary semantics follow "below" /
// "greater than": a score exactly at a threshold is kept.
inline QCVerdict qc_verdict_from_scores(const QCScores& s, const QCThresholds& th) {
  QCVerdict v;
  v.scores = s;
  if (s.attr_conf < th.attr_conf_min) {
    v.reason = QCReason::AttributeWeak;
  } else if (s.id_sim < th.id_sim_min) {
    v.reason = QCReason::IdentityShift;
  } else if (s.percep > th.percep_max) {
    v.reason = QCReason::PerceptualDrift;
  } else {
    v.kept = true;
    v.reason = QCReason::Kept;
  }
  return v;
}

inline QCVerdict qc_filter(const Image& src_img, const Image& edited_img, int edited_index,
                           int target_state, const AttrEncoder& enc, const QCThresholds& th) {
  th.validate();
  require(enc.trained, "qc_filter: encoder is not trained");
  require(edited_index >= 0 && edited_index < enc.config().attr_count,
          "qc_filter: edited index out of range");
  require(target_state == 0 || target_state == 1, "qc_filter: target state must be 0 or 1");

  QCScores s;
  Scalar conf = enc.encode_attrs(edited_img)[edited_index];
  s.attr_conf = target_state == 1 ? conf : 1.0 - conf;
  s.id_sim = cosine(enc.encode_identity(src_img), enc.encode_identity(edited_img));
  s.percep = perceptual_distance(enc, src_img, edited_img);
  return qc_verdict_from_scores(s, th);
}

struct ForgeReport {
  int64_t input = 0;
  int64_t kept = 0;
  int64_t attribute_weak = 0;
  int64_t identity_shift = 0;
  int64_t perceptual_drift = 0;
  int64_t edit_failures = 0;
  QCScores mean_kept_scores;  // means over the kept set
  QCThresholds thresholds;
  std::filesystem::path manifest_path;

  json to_json() const {
    return json{{"input", input},
                {"kept", kept},
                {"discarded",
                 json{{"attribute_weak", attribute_weak},
                      {"identity_shift", identity_shift},
                      {"perceptual_drift", perceptual_drift}}},
                {"edit_failures", edit_failures},
                {"mean_scores",
                 json{{"attr_conf", mean_kept_scores.attr_conf},
                      {"id_sim", mean_kept_scores.id_sim},
                      {"percep", mean_kept_scores.percep}}},
                {"thresholds",
                 json{{"attr_conf_min", thresholds.attr_conf_min},
                      {"id_sim_min", thresholds.id_sim_min},
                      {"percep_max", thresholds.percep_max}}}};
  }
};

// Dataset construction: edit every clean record (round-robin attribute),
// filter through the three-stage QC, and emit kept pairs in the synthgen
// manifest schema with per-record qc_scores. The target annotation is
// regenerated post-filter from the requested edit.
template <typename Model>
ForgeReport forge_dataset(const Manifest& clean_manifest, const Model& model,
                          const AttrEncoder& enc, const EditBatchConfig& edit_cfg,
                          const QCThresholds& th, const std::filesystem::path& out_dir,
                          bool dump_rejects = false) {
  require(!clean_manifest.records.empty(), "forge: input manifest is empty");
  th.validate();
  require(enc.trained, "forge: encoder is not trained");

  EditedManifest edited = edit_batch(model, clean_manifest, edit_cfg, /*out_dir=*/"");

  std::filesystem::create_directories(out_dir);
  std::filesystem::path rejects_dir = out_dir / "rejects";
  if (dump_rejects) std::filesystem::create_directories(rejects_dir);

  ForgeReport report;
  report.input = static_cast<int64_t>(clean_manifest.size());
  report.edit_failures = static_cast<int64_t>(edited.failures.size());
  report.thresholds = th;

  Manifest kept_manifest;
  kept_manifest.base_dir = out_dir;

  // Score in parallel, write sequentially.
  std::vector<QCVerdict> verdicts(edited.records.size());
  std::vector<Image> srcs(edited.records.size());
  parallel_for(static_cast<int64_t>(edited.records.size()), [&](int64_t i) {
    const auto& rec = edited.records[i];
    srcs[i] = read_png(clean_manifest.base_dir / rec.src_png);
    verdicts[i] = qc_filter(srcs[i], rec.edited_image, rec.edited_index, rec.target_state, enc, th);
  });

  char name[64];
  int64_t out_id = 0;
  for (size_t i = 0; i < edited.records.size(); ++i) {
    const auto& rec = edited.records[i];
    const auto& v = verdicts[i];
    if (!v.kept) {
      switch (v.reason) {
        case QCReason::AttributeWeak: report.attribute_weak++; break;
        case QCReason::IdentityShift: report.identity_shift++; break;
        case QCReason::PerceptualDrift: report.perceptual_drift++; break;
        case QCReason::Kept: break;
      }
      if (dump_rejects) {
        std::snprintf(name, sizeof(name), "reject_%06lld_%s.png", static_cast<long long>(rec.id),
                      qc_reason_name(v.reason));
        write_png(rejects_dir / name, rec.edited_image);
      }
      continue;
    }

    report.kept++;
    report.mean_kept_scores.attr_conf += v.scores.attr_conf;
    report.mean_kept_scores.id_sim += v.scores.id_sim;
    report.mean_kept_scores.percep += v.scores.percep;

    RecordMeta meta;
    meta.id = out_id;
    std::snprintf(name, sizeof(name), "src_%06lld.png", static_cast<long long>(out_id));
    meta.src_png = name;
    std::snprintf(name, sizeof(name), "tar_%06lld.png", static_cast<long long>(out_id));
    meta.tar_png = name;
    meta.src_attrs = rec.src_attrs;
    meta.tar_attrs = rec.src_attrs;
    meta.tar_attrs[rec.edited_index] = static_cast<Scalar>(rec.target_state);
    meta.edited_index = rec.edited_index;
    for (const auto& src_meta : clean_manifest.records)
      if (src_meta.id == rec.id) {
        meta.identity = src_meta.identity;
        break;
      }
    meta.seed = rec.seed;
    meta.extra["qc_scores"] = json{{"attr_conf", v.scores.attr_conf},
                                   {"id_sim", v.scores.id_sim},
                                   {"percep", v.scores.percep}};

    write_png(out_dir / meta.src_png, srcs[i]);
    write_png(out_dir / meta.tar_png, rec.edited_image);
    kept_manifest.records.push_back(std::move(meta));
    out_id++;
  }

  if (report.kept > 0) {
    report.mean_kept_scores.attr_conf /= report.kept;
    report.mean_kept_scores.id_sim /= report.kept;
    report.mean_kept_scores.percep /= report.kept;
  }

  report.manifest_path = out_dir / "manifest.jsonl";
  save_manifest(report.manifest_path, kept_manifest);
  return report;
}

}  // namespace a2bfr
