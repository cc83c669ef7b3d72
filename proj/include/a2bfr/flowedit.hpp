#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/degrade.hpp"
#include "a2bfr/flowcore.hpp"
#include "a2bfr/image.hpp"
#include "a2bfr/image_io.hpp"
#include "a2bfr/manifest.hpp"
#include "a2bfr/parallel.hpp"
#include "a2bfr/rng.hpp"
#include "a2bfr/velocity_model.hpp"

namespace a2bfr {

struct EditConfig {
  Scalar noise_blend_alpha = 0.85;  // 1 = vanilla FlowEdit, 0 = frozen initial noise
  int t_steps = 28;                 // T; grid t_i = i/T, i = 0..T
  int n_max = 0;                    // 0 = auto ceil(0.9 T)
  uint64_t seed = 0;
  Conditioning src_cond;
  Conditioning tar_cond;
  Scalar cfg_scale = 1.0;

  int resolved_n_max() const {
    return n_max > 0 ? n_max : static_cast<int>(std::ceil(0.9 * t_steps));
  }

  void validate() const {
    require(noise_blend_alpha >= 0.0 && noise_blend_alpha <= 1.0,
            "flowedit: alpha must be in [0,1]");
    require(t_steps >= 2, "flowedit: t_steps must be >= 2");
    int nm = resolved_n_max();
    require(nm >= 1 && nm <= t_steps, "flowedit: n_max must be in [1, T]");
    require(cfg_scale >= 0.0, "flowedit: cfg_scale must be >= 0");
  }
};

// Fresh per-iteration gaussian, a pure function of (seed, i): alpha sweeps
// with one seed consume identical noise.
inline Image flowedit_noise(uint64_t seed, int iteration, int h, int w, int c) {
  Rng rng(derive_seed(seed, kTagEditNoise, static_cast<uint64_t>(iteration)));
  return gaussian_image(h, w, c, rng);
}

// Inversion-free editing ODE. Pass 1 runs the source-conditioned velocity
// from t_nmax down to t_1 starting at the clean image, accumulating the
// noising direction to obtain N_initial. Pass 2 re-noises the source with an
// alpha blend of fresh noise and N_initial, and integrates the velocity
// difference between target- and source-conditioned predictions.
template <typename Model>
Image flow_edit_alpha(const Model& model, const Image& x_src, const EditConfig& cfg) {
  cfg.validate();
  require(x_src.h == model.config().size && x_src.w == model.config().size &&
              x_src.c == model.config().in_channels,
          "flowedit: image " + x_src.shape_str() + " does not match model resolution");

  const int T = cfg.t_steps;
  const int n_max = cfg.resolved_n_max();
  auto t_at = [T](int i) { return static_cast<Scalar>(i) / T; };
  SamplerConfig vel_cfg;
  vel_cfg.cfg_scale = cfg.cfg_scale;
  const Scalar alpha = cfg.noise_blend_alpha;

  // Pass 1: N_initial.
  Image z_src = x_src;
  for (int i = n_max; i >= 1; --i) {
    Scalar ti = t_at(i);
    Image v = velocity_with_cfg(model, z_src, cfg.src_cond, ti, vel_cfg);
    Scalar dt = t_at(i - 1) - ti;  // negative: this loop adds noise
    for (size_t j = 0; j < z_src.v.size(); ++j) {
      z_src.v[j] -= dt * v.v[j];
      if (!std::isfinite(z_src.v[j]))
        fail_runtime("flowedit: non-finite state in pass 1 at i=" + std::to_string(i));
    }
  }
  const Image n_initial = z_src;

  // Pass 2.
  Image z_fe = x_src;
  for (int i = n_max; i >= 1; --i) {
    Scalar ti = t_at(i);
    Image fresh = flowedit_noise(cfg.seed, i, x_src.h, x_src.w, x_src.c);

    Image z_src_i(x_src.h, x_src.w, x_src.c);
    for (size_t j = 0; j < z_src_i.v.size(); ++j)
      z_src_i.v[j] = (1.0 - ti) * x_src.v[j] + (alpha * ti) * fresh.v[j] +
                     ((1.0 - alpha) * ti) * n_initial.v[j];

    Image z_tar_i(x_src.h, x_src.w, x_src.c);
    for (size_t j = 0; j < z_tar_i.v.size(); ++j)
      z_tar_i.v[j] = z_fe.v[j] + z_src_i.v[j] - x_src.v[j];

    Image v_tar = velocity_with_cfg(model, z_tar_i, cfg.tar_cond, ti, vel_cfg);
    Image v_src = velocity_with_cfg(model, z_src_i, cfg.src_cond, ti, vel_cfg);

    Scalar dt = t_at(i - 1) - ti;
    for (size_t j = 0; j < z_fe.v.size(); ++j) {
      z_fe.v[j] += dt * (v_tar.v[j] - v_src.v[j]);
      if (!std::isfinite(z_fe.v[j]))
        fail_runtime("flowedit: non-finite state in pass 2 at i=" + std::to_string(i));
    }
  }
  return clamp01(z_fe);
}

struct EditInstruction {
  int edited_index = -1;  // -1: round-robin over records
};

struct EditBatchConfig {
  EditConfig edit;
  ParamRanges degrade_ranges;  // LQ anchor for conditioning
  uint64_t seed = 0;
  EditInstruction instruction;
};

struct EditedRecord {
  int64_t id = 0;
  std::string src_png;
  std::string edited_png;
  int edited_index = -1;
  int target_state = 0;
  Scalar alpha = 0.0;
  uint64_t seed = 0;
  Image edited_image;
  std::vector<Scalar> src_attrs;

  json to_json() const {
    return json{{"id", id},
                {"src_png", src_png},
                {"edited_png", edited_png},
                {"edited_index", edited_index},
                {"target_state", target_state},
                {"alpha", alpha},
                {"seed", seed}};
  }
};

struct EditedManifest {
  std::vector<EditedRecord> records;
  std::vector<std::string> failures;
};

// Applies flow_edit_alpha per manifest record with derived per-record seeds.
// The LQ anchor conditioning is the degraded source; both branches share it,
// only the prompt differs. Per-record failures are collected, not fatal.
template <typename Model>
EditedManifest edit_batch(const Model& model, const Manifest& manifest,
                          const EditBatchConfig& cfg, const std::filesystem::path& out_dir) {
  const int k = model.config().attr_count;
  EditedManifest out;
  out.records.resize(manifest.size());
  std::vector<std::string> errors(manifest.size());

  parallel_for(static_cast<int64_t>(manifest.size()), [&](int64_t idx) {
    const auto& meta = manifest.records[idx];
    try {
      Image src = read_png(manifest.base_dir / meta.src_png);
      uint64_t rec_seed = derive_seed(cfg.seed, kTagEditRecord, static_cast<uint64_t>(meta.id));

      int edited = cfg.instruction.edited_index >= 0 ? cfg.instruction.edited_index
                                                     : static_cast<int>(idx % k);
      require(edited >= 0 && edited < k, "edit_batch: edited index out of range");
      require(static_cast<int>(meta.src_attrs.size()) == k,
              "edit_batch: record attrs do not match model");
      int target_state = meta.src_attrs[edited] >= 0.5 ? 0 : 1;

      DegradeConfig dcfg = sample_degrade_config(rec_seed, cfg.degrade_ranges);
      Image lq = degrade(src, dcfg);
      Image lq_up = bilinear_upsample(lq, src.h, src.w);

      EditConfig ec = cfg.edit;
      ec.seed = rec_seed;
      ec.src_cond = Conditioning{lq_up, meta.src_attrs};
      auto tar_attrs = meta.src_attrs;
      tar_attrs[edited] = static_cast<Scalar>(target_state);
      ec.tar_cond = Conditioning{lq_up, tar_attrs};

      EditedRecord rec;
      rec.id = meta.id;
      rec.src_png = meta.src_png;
      char name[64];
      std::snprintf(name, sizeof(name), "edited_%06lld.png", static_cast<long long>(meta.id));
      rec.edited_png = name;
      rec.edited_index = edited;
      rec.target_state = target_state;
      rec.alpha = ec.noise_blend_alpha;
      rec.seed = rec_seed;
      rec.src_attrs = meta.src_attrs;
      rec.edited_image = flow_edit_alpha(model, src, ec);
      out.records[idx] = std::move(rec);
    } catch (const std::exception& e) {
      errors[idx] = "record " + std::to_string(meta.id) + ": " + e.what();
    }
  });

  for (auto& e : errors)
    if (!e.empty()) out.failures.push_back(e);
  out.records.erase(std::remove_if(out.records.begin(), out.records.end(),
                                   [](const EditedRecord& r) { return r.edited_png.empty(); }),
                    out.records.end());

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream mf(out_dir / "edited.jsonl", std::ios::binary);
    require_runtime(static_cast<bool>(mf), "edit_batch: cannot write manifest");
    for (const auto& rec : out.records) {
      write_png(out_dir / rec.edited_png, rec.edited_image);
      mf << rec.to_json().dump() << "\n";
    }
  }
  return out;
}

}  // namespace a2bfr
