#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "a2bfr/checkpoint.hpp"
#include "a2bfr/common.hpp"
#include "a2bfr/degrade.hpp"
#include "a2bfr/encoder_train.hpp"
#include "a2bfr/flowedit.hpp"
#include "a2bfr/forge.hpp"
#include "a2bfr/manifest.hpp"
#include "a2bfr/metrics.hpp"
#include "a2bfr/parallel.hpp"
#include "a2bfr/synthgen.hpp"
#include "a2bfr/trainer.hpp"

namespace a2bfr {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration: a JSON document validated against the default schema
// (unknown keys rejected), overridable with dotted keys.
// ---------------------------------------------------------------------------

inline json default_config() {
  return json{
      {"seed", 1},
      {"workers", 0},  // 0 = hardware concurrency
      {"out_dir", ""},
      {"corpus", json{{"count", 200}, {"size", 64}}},
      {"degrade",
       json{{"sigma", json::array({0.2, 3.0})},
            {"noise", json::array({0.0, 0.08})},
            {"jpeg", json::array({30, 95})},
            {"down_scale", 8},
            {"kinds", json::array({"gaussian", "average", "median", "motion"})}}},
      {"encoder",
       json{{"steps", 2500},
            {"batch_size", 8},
            {"learning_rate", 1e-3},
            {"holdout_fraction", 0.1},
            {"label_smooth", 0.02},
            {"id_margin", 0.1},
            {"id_weight", 0.5},
            {"aug_noise", 0.04},
            {"aug_blur_max", 0.8},
            {"base_channels", 16},
            {"id_dims", 32}}},
      {"model",
       json{{"base_channels", 16},
            {"cond_dims", 32},
            {"time_feats", 16},
            {"levels", 3},
            {"double_conv", true}}},
      {"train",
       json{{"mode", "sdt"},
            {"lambda", 0.2},
            {"alpha", 0.2},
            {"margin", 0.5},
            {"steps", 2000},
            {"batch_size", 1},
            {"learning_rate", 2e-3},
            {"checkpoint_every", 500},
            {"uncond_dropout", 0.1},
            {"attr_t_gate", false},
            {"resume", ""}}},
      {"sampler", json{{"steps", 20}, {"cfg_scale", 5.5}}},
      {"edit",
       json{{"alpha", 0.85}, {"t_steps", 28}, {"n_max", 0}, {"cfg_scale", 1.0},
            {"edited_index", -1}}},
      {"qc",
       json{{"attr_conf_min", 0.6}, {"id_sim_min", 0.5}, {"percep_max", 0.3},
            {"dump_rejects", false}}},
      {"paths",
       json{{"corpus", ""}, {"encoder", ""}, {"model", ""}, {"input", ""}, {"manifest", ""}}},
      {"restore", json{{"attrs", ""}}},
      {"grid", json{{"rows", 8}}},
  };
}

inline void validate_against_schema(const json& user, const json& schema,
                                    const std::string& prefix) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) fail_validation("unknown config key: " + key);
    const json& sv = schema.at(it.key());
    if (sv.is_object()) {
      if (!it.value().is_object()) fail_validation("config key " + key + " must be an object");
      validate_against_schema(it.value(), sv, key);
    }
  }
}

inline void merge_into(json& base, const json& user) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      merge_into(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

inline void apply_override(json& cfg, const std::string& dotted) {
  auto eq = dotted.find('=');
  if (eq == std::string::npos) fail_validation("override must be key=value: " + dotted);
  std::string key = dotted.substr(0, eq);
  std::string value = dotted.substr(eq + 1);

  json* node = &cfg;
  const json* schema_node = nullptr;
  json schema = default_config();
  schema_node = &schema;
  size_t pos = 0;
  std::vector<std::string> parts;
  while (pos != std::string::npos) {
    auto dot = key.find('.', pos);
    parts.push_back(key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos));
    pos = dot == std::string::npos ? std::string::npos : dot + 1;
  }
  for (size_t i = 0; i < parts.size(); ++i) {
    if (!schema_node->contains(parts[i])) fail_validation("unknown config key: " + key);
    schema_node = &schema_node->at(parts[i]);
    if (i + 1 < parts.size()) {
      if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
        (*node)[parts[i]] = json::object();
      node = &(*node)[parts[i]];
    } else {
      json parsed = json::parse(value, nullptr, false);
      if (parsed.is_discarded()) parsed = value;  // plain string
      if (schema_node->is_object()) fail_validation("config key " + key + " is an object");
      (*node)[parts[i]] = parsed;
    }
  }
}

inline json load_run_config(const std::string& config_path,
                            const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) fail_validation("cannot open config file: " + config_path);
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded()) fail_validation("config file is not valid JSON: " + config_path);
    validate_against_schema(user, default_config(), "");
    merge_into(cfg, user);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline fs::path resolve_run_dir(const std::string& command, const json& cfg) {
  std::string explicit_dir = cfg.value("out_dir", "");
  if (!explicit_dir.empty()) return fs::path(explicit_dir);
  const char* root_env = std::getenv("A2BFR_RUN_ROOT");
  fs::path root = root_env ? fs::path(root_env) : fs::path("runs");
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(command + "\n" + cfg.dump())));
  return root / (command + "-" + std::string(hex));
}

// "glasses=1,smile=0" -> attribute vector; unspecified entries are 0.5.
inline std::vector<Scalar> parse_attrs(const std::string& spec, int k) {
  std::vector<Scalar> attrs(k, 0.5);
  if (spec.empty()) return attrs;
  const auto& names = attribute_names();
  size_t pos = 0;
  while (pos < spec.size()) {
    auto comma = spec.find(',', pos);
    std::string item = spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    pos = comma == std::string::npos ? spec.size() : comma + 1;
    auto eq = item.find('=');
    if (eq == std::string::npos) fail_validation("bad attribute spec item: " + item);
    std::string name = item.substr(0, eq);
    Scalar value = std::stod(item.substr(eq + 1));
    require(value >= 0.0 && value <= 1.0, "attribute value outside [0,1]: " + item);
    int idx = -1;
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) idx = static_cast<int>(i);
    if (idx < 0 || idx >= k) fail_validation("unknown attribute name: " + name);
    attrs[idx] = value;
  }
  return attrs;
}

// ---------------------------------------------------------------------------
// Config adapters.
// ---------------------------------------------------------------------------

inline ParamRanges ranges_from_config(const json& cfg) {
  const json& d = cfg.at("degrade");
  ParamRanges r;
  r.sigma_lo = d.at("sigma").at(0).get<Scalar>();
  r.sigma_hi = d.at("sigma").at(1).get<Scalar>();
  r.noise_lo = d.at("noise").at(0).get<Scalar>();
  r.noise_hi = d.at("noise").at(1).get<Scalar>();
  r.jpeg_lo = d.at("jpeg").at(0).get<int>();
  r.jpeg_hi = d.at("jpeg").at(1).get<int>();
  r.down_scale = d.at("down_scale").get<int>();
  r.kinds.clear();
  for (const auto& k : d.at("kinds")) {
    std::string name = k.get<std::string>();
    if (name == "gaussian")
      r.kinds.push_back(KernelKind::gaussian);
    else if (name == "average")
      r.kinds.push_back(KernelKind::average);
    else if (name == "median")
      r.kinds.push_back(KernelKind::median);
    else if (name == "motion")
      r.kinds.push_back(KernelKind::motion);
    else
      fail_validation("unknown kernel kind: " + name);
  }
  validate_ranges(r);
  return r;
}

inline VelocityConfig model_config_from(const json& cfg, int size, int attr_count) {
  const json& m = cfg.at("model");
  VelocityConfig mc;
  mc.size = size;
  mc.in_channels = 3;
  mc.attr_count = attr_count;
  mc.base_channels = m.at("base_channels").get<int>();
  mc.cond_dims = m.at("cond_dims").get<int>();
  mc.time_feats = m.at("time_feats").get<int>();
  mc.levels = m.at("levels").get<int>();
  mc.double_conv = m.at("double_conv").get<bool>();
  return mc;
}

inline SamplerConfig sampler_from_config(const json& cfg) {
  SamplerConfig s;
  s.steps = cfg.at("sampler").at("steps").get<int>();
  s.cfg_scale = cfg.at("sampler").at("cfg_scale").get<Scalar>();
  require(s.steps >= 1, "sampler.steps must be >= 1");
  require(s.cfg_scale >= 0.0, "sampler.cfg_scale must be >= 0");
  return s;
}

inline TrainConfig train_config_from(const json& cfg) {
  const json& t = cfg.at("train");
  TrainConfig tc;
  tc.mode = train_mode_from_name(t.at("mode").get<std::string>());
  tc.weights.lambda_attr = t.at("lambda").get<Scalar>();
  tc.weights.dual_alpha = t.at("alpha").get<Scalar>();
  tc.weights.margin = t.at("margin").get<Scalar>();
  tc.steps_total = t.at("steps").get<int64_t>();
  tc.batch_size = t.at("batch_size").get<int>();
  tc.learning_rate = t.at("learning_rate").get<Scalar>();
  tc.seed = cfg.at("seed").get<uint64_t>();
  tc.degrade_ranges = ranges_from_config(cfg);
  tc.checkpoint_every = t.at("checkpoint_every").get<int64_t>();
  tc.corpus_path = cfg.at("paths").at("corpus").get<std::string>();
  tc.encoder_path = cfg.at("paths").at("encoder").get<std::string>();
  tc.uncond_dropout = t.at("uncond_dropout").get<Scalar>();
  tc.attr_t_gate = t.at("attr_t_gate").get<bool>();
  int size = cfg.at("corpus").at("size").get<int>();
  tc.model = model_config_from(cfg, size, 6);
  return tc;
}

// ---------------------------------------------------------------------------
// Commands. Each writes into a run directory named by the config hash and
// echoes the resolved configuration to run.json.
// ---------------------------------------------------------------------------

namespace cli {

inline void write_run_echo(const fs::path& run_dir, const std::string& command, const json& cfg) {
  fs::create_directories(run_dir);
  std::ofstream out(run_dir / "run.json", std::ios::binary);
  require_runtime(static_cast<bool>(out), "cannot write run.json");
  out << json{{"command", command}, {"config", cfg}}.dump(2) << "\n";
}

inline int cmd_synthgen(const json& cfg, const fs::path& run_dir) {
  CorpusConfig cc;
  cc.size = cfg.at("corpus").at("size").get<int>();
  FaceRenderer renderer(cc);
  auto summary = build_corpus(renderer, cfg.at("corpus").at("count").get<int64_t>(),
                              cfg.at("seed").get<uint64_t>(), run_dir / "corpus");
  json per_index;
  for (auto& [k, n] : summary.per_edited_index) per_index[std::to_string(k)] = n;
  json out{{"count", summary.count},
           {"per_edited_index", per_index},
           {"manifest", summary.manifest_path.string()}};
  std::ofstream(run_dir / "summary.json") << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

inline int cmd_degrade(const json& cfg, const fs::path& run_dir) {
  std::string input = cfg.at("paths").at("input").get<std::string>();
  require(!input.empty(), "degrade: paths.input is required");
  Image hq = read_png(input);
  DegradeConfig dc = sample_degrade_config(cfg.at("seed").get<uint64_t>(), ranges_from_config(cfg));
  Image lq = degrade(hq, dc);
  write_png(run_dir / "lq.png", lq);
  write_png(run_dir / "lq_up.png", bilinear_upsample(lq, hq.h, hq.w));
  json out{{"kernel", kernel_kind_name(dc.kernel_kind)},
           {"sigma", dc.kernel_sigma},
           {"down_scale", dc.down_scale},
           {"noise_sigma", dc.noise_sigma},
           {"jpeg_quality", dc.jpeg_quality}};
  std::ofstream(run_dir / "degrade.json") << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

inline int cmd_train_encoder(const json& cfg, const fs::path& run_dir) {
  std::string corpus = cfg.at("paths").at("corpus").get<std::string>();
  require(!corpus.empty(), "train-encoder: paths.corpus is required");
  Manifest manifest = load_manifest(corpus);

  const json& e = cfg.at("encoder");
  EncoderTrainConfig ec;
  ec.steps = e.at("steps").get<int64_t>();
  ec.batch_size = e.at("batch_size").get<int>();
  ec.learning_rate = e.at("learning_rate").get<Scalar>();
  ec.seed = cfg.at("seed").get<uint64_t>();
  ec.holdout_fraction = e.at("holdout_fraction").get<Scalar>();
  ec.label_smooth = e.at("label_smooth").get<Scalar>();
  ec.id_margin = e.at("id_margin").get<Scalar>();
  ec.id_weight = e.at("id_weight").get<Scalar>();
  ec.aug_noise = e.at("aug_noise").get<Scalar>();
  ec.aug_blur_max = e.at("aug_blur_max").get<Scalar>();
  ec.arch.input_size = cfg.at("corpus").at("size").get<int>();
  ec.arch.base_channels = e.at("base_channels").get<int>();
  ec.arch.id_dims = e.at("id_dims").get<int>();

  EncoderEvalStats stats;
  AttrEncoder enc = train_encoder(manifest, ec, &stats);
  save_encoder(run_dir / "encoder.ckpt", enc);
  json out{{"attr_accuracy", stats.attr_accuracy},
           {"per_attr_accuracy", stats.per_attr_accuracy},
           {"same_id_cosine", stats.same_id_cosine},
           {"diff_id_cosine", stats.diff_id_cosine},
           {"holdout_records", stats.holdout_records},
           {"percep_scale", enc.percep_scale},
           {"checkpoint", (run_dir / "encoder.ckpt").string()}};
  std::ofstream(run_dir / "encoder_stats.json") << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

inline int cmd_train(const json& cfg, const fs::path& run_dir) {
  TrainConfig tc = train_config_from(cfg);
  tc.out_dir = run_dir;
  std::optional<fs::path> resume;
  std::string resume_str = cfg.at("train").at("resume").get<std::string>();
  if (!resume_str.empty()) resume = fs::path(resume_str);
  TrainResult result = train(tc, resume);
  json out{{"final_checkpoint", result.final_checkpoint.string()},
           {"steps", tc.steps_total},
           {"mode", train_mode_name(tc.mode)}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

inline int cmd_restore(const json& cfg, const fs::path& run_dir) {
  std::string model_path = cfg.at("paths").at("model").get<std::string>();
  std::string input = cfg.at("paths").at("input").get<std::string>();
  require(!model_path.empty() && !input.empty(), "restore: paths.model and paths.input required");
  VelocityModel model = load_velocity_model(model_path);
  Image lq = read_png(input);
  int s = model.config().size;
  Image lq_up = (lq.h == s && lq.w == s) ? lq : bilinear_upsample(lq, s, s);
  Conditioning cond;
  cond.lq_up = lq_up;
  cond.attrs = parse_attrs(cfg.at("restore").at("attrs").get<std::string>(),
                           model.config().attr_count);
  Image restored = euler_sample(model, cond, sampler_from_config(cfg),
                                derive_seed(cfg.at("seed").get<uint64_t>(), kTagSampleInit));
  write_png(run_dir / "restored.png", restored);
  std::cout << json{{"restored", (run_dir / "restored.png").string()}}.dump(2) << "\n";
  return 0;
}

inline EditBatchConfig edit_config_from(const json& cfg) {
  EditBatchConfig bc;
  bc.edit.noise_blend_alpha = cfg.at("edit").at("alpha").get<Scalar>();
  bc.edit.t_steps = cfg.at("edit").at("t_steps").get<int>();
  bc.edit.n_max = cfg.at("edit").at("n_max").get<int>();
  bc.edit.cfg_scale = cfg.at("edit").at("cfg_scale").get<Scalar>();
  bc.degrade_ranges = ranges_from_config(cfg);
  bc.seed = cfg.at("seed").get<uint64_t>();
  bc.instruction.edited_index = cfg.at("edit").at("edited_index").get<int>();
  return bc;
}

inline int cmd_edit(const json& cfg, const fs::path& run_dir) {
  std::string model_path = cfg.at("paths").at("model").get<std::string>();
  std::string manifest_path = cfg.at("paths").at("manifest").get<std::string>();
  require(!model_path.empty() && !manifest_path.empty(),
          "edit: paths.model and paths.manifest required");
  VelocityModel model = load_velocity_model(model_path);
  Manifest manifest = load_manifest(manifest_path);
  EditedManifest result = edit_batch(model, manifest, edit_config_from(cfg), run_dir / "edited");
  json out{{"edited", static_cast<int64_t>(result.records.size())},
           {"failures", result.failures}};
  std::ofstream(run_dir / "edit_report.json") << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return result.failures.empty() ? 0 : 1;
}

inline int cmd_forge(const json& cfg, const fs::path& run_dir) {
  std::string model_path = cfg.at("paths").at("model").get<std::string>();
  std::string encoder_path = cfg.at("paths").at("encoder").get<std::string>();
  std::string manifest_path = cfg.at("paths").at("manifest").get<std::string>();
  require(!model_path.empty() && !encoder_path.empty() && !manifest_path.empty(),
          "forge: paths.model, paths.encoder, paths.manifest required");
  VelocityModel model = load_velocity_model(model_path);
  AttrEncoder enc = load_encoder(encoder_path);
  Manifest manifest = load_manifest(manifest_path);

  QCThresholds th;
  th.attr_conf_min = cfg.at("qc").at("attr_conf_min").get<Scalar>();
  th.id_sim_min = cfg.at("qc").at("id_sim_min").get<Scalar>();
  th.percep_max = cfg.at("qc").at("percep_max").get<Scalar>();

  ForgeReport report = forge_dataset(manifest, model, enc, edit_config_from(cfg), th,
                                     run_dir / "forged",
                                     cfg.at("qc").at("dump_rejects").get<bool>());
  std::ofstream(run_dir / "forge_report.json") << report.to_json().dump(2) << "\n";
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

inline int cmd_eval(const json& cfg, const fs::path& run_dir) {
  std::string model_path = cfg.at("paths").at("model").get<std::string>();
  std::string encoder_path = cfg.at("paths").at("encoder").get<std::string>();
  std::string manifest_path = cfg.at("paths").at("manifest").get<std::string>();
  require(!model_path.empty() && !encoder_path.empty() && !manifest_path.empty(),
          "eval: paths.model, paths.encoder, paths.manifest required");
  VelocityModel model = load_velocity_model(model_path);
  AttrEncoder enc = load_encoder(encoder_path);
  Manifest manifest = load_manifest(manifest_path);

  EvalConfig ec;
  ec.sampler = sampler_from_config(cfg);
  ec.degrade_ranges = ranges_from_config(cfg);
  ec.seed = cfg.at("seed").get<uint64_t>();

  std::vector<EvalRow> rows;
  EvalReport report = evaluate(model, enc, manifest, ec, &rows);
  std::ofstream(run_dir / "eval_report.json") << report.to_json().dump(2) << "\n";
  std::ofstream csv(run_dir / "eval_rows.csv");
  csv << "id,edited_index,target_state,aa,ids,cp_ids,percep\n";
  for (const auto& r : rows)
    csv << r.id << "," << r.edited_index << "," << r.target_state << "," << r.aa << "," << r.ids
        << "," << r.cp_ids << "," << r.percep << "\n";
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

inline int cmd_grid(const json& cfg, const fs::path& run_dir) {
  std::string model_path = cfg.at("paths").at("model").get<std::string>();
  std::string manifest_path = cfg.at("paths").at("manifest").get<std::string>();
  require(!model_path.empty() && !manifest_path.empty(),
          "grid: paths.model and paths.manifest required");
  VelocityModel model = load_velocity_model(model_path);
  Manifest manifest = load_manifest(manifest_path);
  EvalConfig ec;
  ec.sampler = sampler_from_config(cfg);
  ec.degrade_ranges = ranges_from_config(cfg);
  ec.seed = cfg.at("seed").get<uint64_t>();
  Image sheet = build_grid(model, manifest, ec, cfg.at("grid").at("rows").get<int>());
  write_png(run_dir / "grid.png", sheet);
  std::cout << json{{"grid", (run_dir / "grid.png").string()}}.dump(2) << "\n";
  return 0;
}

}  // namespace cli

inline int cli_main(int argc, char** argv) {
  CLI::App app{"attribute-aware blind face restoration, desk scale"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int workers = 0;
  app.add_option("--config", config_path, "JSON config file")->expected(1);
  app.add_option("--set", overrides, "dotted-key override, e.g. train.alpha=0.8");
  app.add_option("--workers", workers, "worker thread bound");

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const json&, const fs::path&);
  };
  const Sub subs[] = {
      {"synthgen", "build a synthetic paired face corpus", cli::cmd_synthgen},
      {"degrade", "degrade one image with a sampled config", cli::cmd_degrade},
      {"train-encoder", "train the attribute/identity encoder", cli::cmd_train_encoder},
      {"train", "train the restoration model", cli::cmd_train},
      {"restore", "restore one LQ image", cli::cmd_restore},
      {"edit", "FlowEdit-alpha over a manifest", cli::cmd_edit},
      {"forge", "edit + quality control into a paired dataset", cli::cmd_forge},
      {"eval", "evaluate a model over a manifest", cli::cmd_eval},
      {"grid", "contact sheet LQ | restored-src | restored-tar | GT", cli::cmd_grid},
  };

  std::map<std::string, const Sub*> chosen;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    cmd->callback([&chosen, &s, cmd]() { chosen[cmd->get_name()] = &s; });
  }

  // Path sugar flags are rewritten into --set overrides before parsing.
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
  auto rewrite = [&](const std::string& flag, const std::string& key) {
    for (size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == flag) {
        args[i] = "--set";
        args[i + 1] = key + "=" + args[i + 1];
      }
    }
  };
  rewrite("--corpus", "paths.corpus");
  rewrite("--encoder", "paths.encoder");
  rewrite("--model", "paths.model");
  rewrite("--input", "paths.input");
  rewrite("--manifest", "paths.manifest");
  rewrite("--attrs", "restore.attrs");
  rewrite("--out", "out_dir");
  rewrite("--seed", "seed");
  std::vector<const char*> cargs;
  cargs.push_back(argv[0]);
  for (auto& a : args) cargs.push_back(a.c_str());

  try {
    try {
      app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) return app.exit(e);  // --help
      std::cerr << json{{"error", {{"kind", "validation"}, {"message", e.what()}}}}.dump() << "\n";
      return 2;
    }
    require(chosen.size() == 1, "exactly one subcommand required");
    const Sub* sub = chosen.begin()->second;

    json cfg = load_run_config(config_path, overrides);
    if (workers > 0) cfg["workers"] = workers;
    int w = cfg.at("workers").get<int>();
    if (w > 0) set_workers(w);

    fs::path run_dir = resolve_run_dir(sub->name, cfg);
    cli::write_run_echo(run_dir, sub->name, cfg);
    return sub->fn(cfg, run_dir);
  } catch (const Error& e) {
    bool validation = e.kind() == ErrKind::validation;
    std::cerr << json{{"error",
                       {{"kind", validation ? "validation" : "runtime"}, {"message", e.what()}}}}
                     .dump()
              << "\n";
    return validation ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"kind", "runtime"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
}

}  // namespace a2bfr
