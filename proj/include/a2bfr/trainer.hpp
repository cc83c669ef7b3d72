#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "a2bfr/attr_encoder.hpp"
#include "a2bfr/checkpoint.hpp"
#include "a2bfr/common.hpp"
#include "a2bfr/degrade.hpp"
#include "a2bfr/flowcore.hpp"
#include "a2bfr/losses.hpp"
#include "a2bfr/manifest.hpp"
#include "a2bfr/optimizer.hpp"
#include "a2bfr/rng.hpp"
#include "a2bfr/synthgen.hpp"
#include "a2bfr/velocity_model.hpp"

namespace a2bfr {

enum class TrainMode { baseline, aal, sdt, sdt_no_dual };

inline const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::aal: return "aal";
    case TrainMode::sdt: return "sdt";
    case TrainMode::sdt_no_dual: return "sdtNoDual";
  }
  return "?";
}

inline TrainMode train_mode_from_name(const std::string& s) {
  if (s == "baseline") return TrainMode::baseline;
  if (s == "aal") return TrainMode::aal;
  if (s == "sdt") return TrainMode::sdt;
  if (s == "sdtNoDual") return TrainMode::sdt_no_dual;
  fail_validation("unknown train mode: " + s);
}

struct TrainConfig {
  TrainMode mode = TrainMode::sdt;
  LossWeights weights;
  int64_t steps_total = 2000;
  int batch_size = 1;
  Scalar learning_rate = 2e-3;
  uint64_t seed = 1;
  ParamRanges degrade_ranges;
  int64_t checkpoint_every = 500;
  std::filesystem::path corpus_path;
  std::filesystem::path encoder_path;
  std::filesystem::path out_dir;
  Scalar uncond_dropout = 0.1;  // probability of swapping attrs for the template
  bool attr_t_gate = false;     // when set, the attribute loss is skipped for t >= 0.8
  VelocityConfig model;

  void validate() const {
    weights.validate();
    require(steps_total >= 1, "train: steps_total must be >= 1");
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(learning_rate > 0.0, "train: learning_rate must be > 0");
    require(checkpoint_every >= 1, "train: checkpoint_every must be >= 1");
    require(uncond_dropout >= 0.0 && uncond_dropout < 1.0, "train: uncond_dropout in [0,1)");
    validate_ranges(degrade_ranges);
  }
};

struct StepRecord {
  int64_t step = 0;
  Scalar l_diff_src = 0.0, l_attr_src = 0.0;
  Scalar l_diff_tar = 0.0, l_attr_tar = 0.0;
  Scalar l_dual = 0.0, l_total = 0.0;
  Scalar t = 0.0;
  Scalar wall_ms = 0.0;

  json to_json() const {
    return json{{"step", step},         {"l_diff_src", l_diff_src}, {"l_attr_src", l_attr_src},
                {"l_diff_tar", l_diff_tar}, {"l_attr_tar", l_attr_tar}, {"l_dual", l_dual},
                {"l_total", l_total},   {"t", t},                   {"wall_ms", wall_ms}};
  }

  // Equality on the numeric trajectory; wall time is excluded.
  bool same_trajectory(const StepRecord& o) const {
    return step == o.step && l_diff_src == o.l_diff_src && l_attr_src == o.l_attr_src &&
           l_diff_tar == o.l_diff_tar && l_attr_tar == o.l_attr_tar && l_dual == o.l_dual &&
           l_total == o.l_total && t == o.t;
  }
};

namespace detail {

struct BranchGrads {
  Scalar l_diff = 0.0;
  Scalar l_attr = 0.0;
  std::vector<Scalar> conf;        // encoder confidences of the decoded estimate
  Image clamp_mask;                // 1 where the decode is interior to [0,1]
  VelocityModel::Tape model_tape;
  AttrEncoder::Tape enc_tape;
  Image g_v;                       // running gradient wrt the velocity
  Image pred;                      // clamped decode
  bool has_enc_tape = false;
};

// Forward of one branch: velocity, flow loss, decoded estimate, and (when
// the encoder is needed) attribute confidences. Gradients are assembled by
// the caller once cross-branch terms are known.
inline BranchGrads branch_forward(VelocityModel& model, AttrEncoder* enc, const Image& hq,
                                  const Image& lq_up, const Image& zt, const Image& eps, Scalar t,
                                  const std::vector<Scalar>& attrs, bool need_encoder) {
  BranchGrads br;
  Image v = model.forward(zt, lq_up, t, attrs, br.model_tape);
  br.l_diff = flow_loss(v, hq, eps);
  br.g_v = flow_loss_grad(v, hq, eps);

  if (need_encoder) {
    Image z0_hat = denoise_estimate(zt, t, v);
    br.clamp_mask = Image(z0_hat.h, z0_hat.w, z0_hat.c);
    br.pred = z0_hat;
    for (size_t i = 0; i < z0_hat.v.size(); ++i) {
      br.clamp_mask.v[i] = (z0_hat.v[i] >= 0.0 && z0_hat.v[i] <= 1.0) ? 1.0 : 0.0;
      br.pred.v[i] = a2bfr::clamp01(z0_hat.v[i]);
    }
    auto out = enc->forward(br.pred, br.enc_tape);
    br.conf = out.conf;
    br.has_enc_tape = true;
  }
  return br;
}

// Routes d(loss)/d(conf) through the frozen encoder, the clamp, and Eq. (1)
// into the velocity gradient, then backpropagates into the model.
inline void branch_backward(VelocityModel& model, AttrEncoder* enc, BranchGrads& br, Scalar t,
                            const std::vector<Scalar>& g_conf, Scalar inv_batch) {
  if (br.has_enc_tape && !g_conf.empty()) {
    bool any = false;
    for (Scalar g : g_conf) any |= (g != 0.0);
    if (any) {
      Image g_pred = enc->backward(br.enc_tape, g_conf, {}, {}, /*train=*/false);
      for (size_t i = 0; i < g_pred.v.size(); ++i) {
        // d z0_hat / d v = -t, gated by the clamp mask.
        br.g_v.v[i] += -t * g_pred.v[i] * br.clamp_mask.v[i];
      }
    }
  }
  if (inv_batch != 1.0)
    for (auto& g : br.g_v.v) g *= inv_batch;
  model.backward(br.model_tape, br.g_v);
}

}  // namespace detail

// One AAL (or baseline) sample: online degradation, shared-noise flow loss,
// attribute loss through the decoded estimate. Gradients are accumulated into
// the model; the caller owns the optimizer step.
inline StepRecord train_step_aal(VelocityModel& model, AttrEncoder& enc, const Image& hq,
                                 const std::vector<Scalar>& attrs, const TrainConfig& cfg,
                                 Rng& rng, Scalar inv_batch = 1.0) {
  DegradeConfig dcfg = sample_degrade_config(rng.next_u64(), cfg.degrade_ranges);
  Image lq = degrade(hq, dcfg);
  Image lq_up = bilinear_upsample(lq, hq.h, hq.w);

  Scalar t = 1.0 - rng.uniform();  // uniform on (0,1]
  Rng noise_rng(rng.next_u64());
  Image eps = gaussian_image(hq.h, hq.w, hq.c, noise_rng);
  Image zt = interpolate(hq, eps, t);

  std::vector<Scalar> attrs_used = attrs;
  if (cfg.uncond_dropout > 0.0 && rng.bernoulli(cfg.uncond_dropout))
    attrs_used = template_attrs(model.config().attr_count);

  bool want_attr = cfg.mode != TrainMode::baseline && cfg.weights.lambda_attr > 0.0 &&
                   !(cfg.attr_t_gate && t >= 0.8);

  auto br = detail::branch_forward(model, want_attr ? &enc : nullptr, hq, lq_up, zt, eps, t,
                                   attrs_used, want_attr);

  StepRecord rec;
  rec.l_diff_src = br.l_diff;
  rec.t = t;
  std::vector<Scalar> g_conf;
  if (want_attr) {
    auto targets = enc.encode_attrs(hq);
    rec.l_attr_src = bce_mean(br.conf, targets);
    g_conf = bce_grad(br.conf, targets);
    for (auto& g : g_conf) g *= cfg.weights.lambda_attr;
  }
  detail::branch_backward(model, want_attr ? &enc : nullptr, br, t, g_conf, inv_batch);

  LossWeights w = cfg.weights;
  if (cfg.mode == TrainMode::baseline) w.lambda_attr = 0.0;
  rec.l_total = aal_loss(rec.l_diff_src, rec.l_attr_src, w);
  require_runtime(std::isfinite(rec.l_total),
                  "train_step_aal: non-finite loss (l_diff=" + std::to_string(rec.l_diff_src) +
                      ", l_attr=" + std::to_string(rec.l_attr_src) + ")");
  return rec;
}

// One SDT sample: a single LQ synthesized from the source image, two branches
// sharing t and eps but conditioned on source/target prompts, plus the margin
// dual loss on the edited attribute's confidence gap.
inline StepRecord train_step_sdt(VelocityModel& model, AttrEncoder& enc, const PairRecord& pair,
                                 const TrainConfig& cfg, Rng& rng, Scalar inv_batch = 1.0) {
  require(pair.edited_index >= 0 &&
              pair.edited_index < static_cast<int>(pair.src_attrs.size()),
          "train_step_sdt: invalid pair record");

  DegradeConfig dcfg = sample_degrade_config(rng.next_u64(), cfg.degrade_ranges);
  Image lq = degrade(pair.src_image, dcfg);
  Image lq_up = bilinear_upsample(lq, pair.src_image.h, pair.src_image.w);

  Scalar t = 1.0 - rng.uniform();
  Rng noise_rng(rng.next_u64());
  Image eps = gaussian_image(pair.src_image.h, pair.src_image.w, pair.src_image.c, noise_rng);
  Image zt_src = interpolate(pair.src_image, eps, t);
  Image zt_tar = interpolate(pair.tar_image, eps, t);

  std::vector<Scalar> attrs_src = pair.src_attrs;
  std::vector<Scalar> attrs_tar = pair.tar_attrs;
  if (cfg.uncond_dropout > 0.0 && rng.bernoulli(cfg.uncond_dropout)) {
    attrs_src = template_attrs(model.config().attr_count);
    attrs_tar = attrs_src;
  }

  Scalar alpha = cfg.mode == TrainMode::sdt ? cfg.weights.dual_alpha : 0.0;
  bool need_encoder = cfg.weights.lambda_attr > 0.0 || alpha > 0.0;
  bool want_attr = cfg.weights.lambda_attr > 0.0 && !(cfg.attr_t_gate && t >= 0.8);

  auto br_src = detail::branch_forward(model, need_encoder ? &enc : nullptr, pair.src_image, lq_up,
                                       zt_src, eps, t, attrs_src, need_encoder);
  auto br_tar = detail::branch_forward(model, need_encoder ? &enc : nullptr, pair.tar_image, lq_up,
                                       zt_tar, eps, t, attrs_tar, need_encoder);

  StepRecord rec;
  rec.t = t;
  rec.l_diff_src = br_src.l_diff;
  rec.l_diff_tar = br_tar.l_diff;

  std::vector<Scalar> g_conf_src, g_conf_tar;
  if (need_encoder) {
    int k = model.config().attr_count;
    g_conf_src.assign(k, 0.0);
    g_conf_tar.assign(k, 0.0);

    if (want_attr) {
      auto targets_src = enc.encode_attrs(pair.src_image);
      auto targets_tar = enc.encode_attrs(pair.tar_image);
      rec.l_attr_src = bce_mean(br_src.conf, targets_src);
      rec.l_attr_tar = bce_mean(br_tar.conf, targets_tar);
      auto gs = bce_grad(br_src.conf, targets_src);
      auto gt = bce_grad(br_tar.conf, targets_tar);
      for (int i = 0; i < k; ++i) {
        g_conf_src[i] += cfg.weights.lambda_attr * gs[i];
        g_conf_tar[i] += cfg.weights.lambda_attr * gt[i];
      }
    }

    Scalar a_src = br_src.conf[pair.edited_index];
    Scalar a_tar = br_tar.conf[pair.edited_index];
    rec.l_dual = dual_loss(a_src, a_tar, cfg.weights.margin);
    if (alpha > 0.0) {
      Scalar g_as, g_at;
      dual_loss_grad(a_src, a_tar, cfg.weights.margin, g_as, g_at);
      g_conf_src[pair.edited_index] += alpha * g_as;
      g_conf_tar[pair.edited_index] += alpha * g_at;
    }
  }

  detail::branch_backward(model, need_encoder ? &enc : nullptr, br_src, t, g_conf_src, inv_batch);
  detail::branch_backward(model, need_encoder ? &enc : nullptr, br_tar, t, g_conf_tar, inv_batch);

  LossWeights w = cfg.weights;
  w.dual_alpha = alpha;
  Scalar aal_src = aal_loss(rec.l_diff_src, rec.l_attr_src, w);
  Scalar aal_tar = aal_loss(rec.l_diff_tar, rec.l_attr_tar, w);
  rec.l_total = total_loss(aal_src, aal_tar, rec.l_dual, w);
  require_runtime(std::isfinite(rec.l_total), "train_step_sdt: non-finite loss at t=" +
                                                  std::to_string(t));
  return rec;
}

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<StepRecord> records;
};

namespace detail {

inline json train_config_json(const TrainConfig& cfg) {
  return json{{"mode", train_mode_name(cfg.mode)},
              {"lambda", cfg.weights.lambda_attr},
              {"alpha", cfg.weights.dual_alpha},
              {"margin", cfg.weights.margin},
              {"steps_total", cfg.steps_total},
              {"batch_size", cfg.batch_size},
              {"learning_rate", cfg.learning_rate},
              {"seed", cfg.seed},
              {"checkpoint_every", cfg.checkpoint_every},
              {"uncond_dropout", cfg.uncond_dropout},
              {"attr_t_gate", cfg.attr_t_gate}};
}

inline void save_train_checkpoint(const std::filesystem::path& path, VelocityModel& model,
                                  RmsProp& opt, int64_t next_step, const TrainConfig& cfg) {
  Checkpoint ck;
  ck.meta = json{{"kind", "velocity_model"},
                 {"version", 1},
                 {"config", velocity_config_json(model.config())},
                 {"extra", json{{"train", train_config_json(cfg)}, {"next_step", next_step}}}};
  for (auto* p : model.params()) ck.tensors[p->name] = p->value;
  auto params = model.params();
  for (size_t i = 0; i < params.size(); ++i) ck.tensors["opt." + params[i]->name] = opt.state()[i];
  save_checkpoint(path, ck);
}

}  // namespace detail

// Full training loop over a corpus manifest. Deterministic: every step's
// randomness derives from (seed, step), so resume from a checkpoint continues
// the exact uninterrupted trajectory.
inline TrainResult train(const TrainConfig& cfg,
                         const std::optional<std::filesystem::path>& resume_from = std::nullopt) {
  cfg.validate();
  require_runtime(std::filesystem::exists(cfg.corpus_path),
                  "train: corpus manifest not found: " + cfg.corpus_path.string());
  require_runtime(std::filesystem::exists(cfg.encoder_path),
                  "train: encoder checkpoint not found: " + cfg.encoder_path.string());

  Manifest manifest = load_manifest(cfg.corpus_path);
  require(!manifest.records.empty(), "train: empty corpus");
  bool dual_mode = cfg.mode == TrainMode::sdt || cfg.mode == TrainMode::sdt_no_dual;
  if (dual_mode)
    require(manifest.fully_paired(), "train: mode " + std::string(train_mode_name(cfg.mode)) +
                                         " requires a paired corpus");

  AttrEncoder enc = load_encoder(cfg.encoder_path);

  std::filesystem::create_directories(cfg.out_dir);
  VelocityModel model(cfg.model, cfg.seed);
  RmsProp opt(cfg.learning_rate);
  opt.attach(model.params());

  int64_t start_step = 0;
  if (resume_from) {
    json extra;
    Checkpoint ck = load_checkpoint(*resume_from);
    require_runtime(ck.meta.value("kind", "") == "velocity_model",
                    "train: resume checkpoint is not a velocity model");
    auto params = model.params();
    for (size_t i = 0; i < params.size(); ++i) {
      params[i]->value = ck.tensors.at(params[i]->name);
      opt.state()[i] = ck.tensors.at("opt." + params[i]->name);
    }
    start_step = ck.meta.at("extra").at("next_step").get<int64_t>();
  }

  std::ofstream log(cfg.out_dir / "train_log.jsonl", std::ios::app | std::ios::binary);
  require_runtime(static_cast<bool>(log), "train: cannot open training log");

  // Preload the corpus; the desk corpora are small.
  std::vector<PairRecord> pairs;
  pairs.reserve(manifest.size());
  CorpusConfig ccfg;
  for (const auto& meta : manifest.records) pairs.push_back(load_pair(manifest, meta, ccfg));

  TrainResult result;
  char ckpt_name[64];

  for (int64_t step = start_step; step < cfg.steps_total; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, kTagTrainStep, static_cast<uint64_t>(step)));
    opt.zero_grad();

    StepRecord mean_rec;
    Scalar inv_b = 1.0 / cfg.batch_size;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const PairRecord& pair = pairs[rng.uniform_index(pairs.size())];
      StepRecord rec;
      if (dual_mode) {
        rec = train_step_sdt(model, enc, pair, cfg, rng, inv_b);
      } else {
        bool use_tar = pair.tar_image.v.empty() ? false : rng.bernoulli(0.5);
        rec = train_step_aal(model, enc, use_tar ? pair.tar_image : pair.src_image,
                             use_tar ? pair.tar_attrs : pair.src_attrs, cfg, rng, inv_b);
      }
      mean_rec.l_diff_src += rec.l_diff_src * inv_b;
      mean_rec.l_attr_src += rec.l_attr_src * inv_b;
      mean_rec.l_diff_tar += rec.l_diff_tar * inv_b;
      mean_rec.l_attr_tar += rec.l_attr_tar * inv_b;
      mean_rec.l_dual += rec.l_dual * inv_b;
      mean_rec.l_total += rec.l_total * inv_b;
      mean_rec.t = rec.t;
    }
    opt.step();

    mean_rec.step = step;
    mean_rec.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    log << mean_rec.to_json().dump() << "\n";
    result.records.push_back(mean_rec);

    int64_t done = step + 1;
    if (done % cfg.checkpoint_every == 0 || done == cfg.steps_total) {
      std::snprintf(ckpt_name, sizeof(ckpt_name), "step_%06lld.ckpt",
                    static_cast<long long>(done));
      detail::save_train_checkpoint(cfg.out_dir / ckpt_name, model, opt, done, cfg);
    }
  }
  log.flush();
  require_runtime(static_cast<bool>(log), "train: log write failed (disk full?)");

  detail::save_train_checkpoint(cfg.out_dir / "final.ckpt", model, opt, cfg.steps_total, cfg);
  result.final_checkpoint = cfg.out_dir / "final.ckpt";
  return result;
}

}  // namespace a2bfr
