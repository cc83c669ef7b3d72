#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "a2bfr/checkpoint.hpp"
#include "a2bfr/encoder_train.hpp"
#include "a2bfr/trainer.hpp"
#include "helpers.hpp"

using namespace a2bfr;
using namespace a2bfr::testing;
namespace fs = std::filesystem;

namespace {

// Micro setup: 16x16 corpus, tiny model and encoder, fast steps.
struct MicroWorld {
  VelocityConfig mc;
  EncoderConfig ec;
  VelocityModel model;
  AttrEncoder enc;
  PairRecord pair;
  TrainConfig cfg;

  MicroWorld()
      : mc(make_mc()),
        ec(make_ec()),
        model(mc, 3),
        enc(ec, 4),
        pair(make_pair_record()),
        cfg(make_cfg(mc)) {
    enc.trained = true;
  }

  static VelocityConfig make_mc() {
    VelocityConfig mc = micro_velocity_config();
    mc.size = 16;
    mc.in_channels = 3;
    mc.attr_count = 6;
    return mc;
  }
  static EncoderConfig make_ec() {
    EncoderConfig ec = micro_encoder_config();
    ec.input_size = 16;
    return ec;
  }
  static PairRecord make_pair_record() {
    FaceRenderer renderer;
    PairRecord big = sample_pair(renderer, 77, 3);
    PairRecord pair = big;
    pair.src_image = area_downsample(big.src_image, 4);
    pair.tar_image = area_downsample(big.tar_image, 4);
    return pair;
  }
  static TrainConfig make_cfg(const VelocityConfig& mc) {
    TrainConfig cfg;
    cfg.mode = TrainMode::sdt;
    cfg.model = mc;
    cfg.degrade_ranges.down_scale = 4;
    cfg.uncond_dropout = 0.0;
    return cfg;
  }
};

}  // namespace

TEST_CASE("aal step with lambda 0 records exactly the flow loss") {
  MicroWorld w;
  w.cfg.mode = TrainMode::aal;
  w.cfg.weights.lambda_attr = 0.0;
  Rng rng(9);
  StepRecord rec = train_step_aal(w.model, w.enc, w.pair.src_image, w.pair.src_attrs, w.cfg, rng);
  REQUIRE(rec.l_total == rec.l_diff_src);
  REQUIRE(rec.l_attr_src == 0.0);
}

TEST_CASE("aal and sdt steps are deterministic given the step seed") {
  MicroWorld w1, w2;
  {
    Rng r1(5), r2(5);
    StepRecord a = train_step_aal(w1.model, w1.enc, w1.pair.src_image, w1.pair.src_attrs, w1.cfg, r1);
    StepRecord b = train_step_aal(w2.model, w2.enc, w2.pair.src_image, w2.pair.src_attrs, w2.cfg, r2);
    REQUIRE(a.same_trajectory(b));
  }
  {
    Rng r1(6), r2(6);
    StepRecord a = train_step_sdt(w1.model, w1.enc, w1.pair, w1.cfg, r1);
    StepRecord b = train_step_sdt(w2.model, w2.enc, w2.pair, w2.cfg, r2);
    REQUIRE(a.same_trajectory(b));
  }
}

TEST_CASE("sdt degenerate weights reduce to the two flow losses") {
  MicroWorld w;
  w.cfg.weights.lambda_attr = 0.0;
  w.cfg.mode = TrainMode::sdt_no_dual;
  Rng rng(7);
  StepRecord rec = train_step_sdt(w.model, w.enc, w.pair, w.cfg, rng);
  REQUIRE(rec.l_total == rec.l_diff_src + rec.l_diff_tar);
}

TEST_CASE("sdt with a constant 0.5 encoder pins the dual loss at the margin") {
  MicroWorld w;
  w.enc.zero_attr_head();  // every confidence is exactly 0.5
  Rng rng(8);
  StepRecord rec = train_step_sdt(w.model, w.enc, w.pair, w.cfg, rng);
  REQUIRE(rec.l_dual == w.cfg.weights.margin);
}

TEST_CASE("step record composition reproduces the total") {
  MicroWorld w;
  w.cfg.weights.lambda_attr = 0.3;
  w.cfg.weights.dual_alpha = 0.4;
  Rng rng(11);
  StepRecord rec = train_step_sdt(w.model, w.enc, w.pair, w.cfg, rng);
  Scalar recomposed = (rec.l_diff_src + 0.3 * rec.l_attr_src) +
                      (rec.l_diff_tar + 0.3 * rec.l_attr_tar) + 0.4 * rec.l_dual;
  REQUIRE(std::abs(recomposed - rec.l_total) < 1e-6);
  REQUIRE(rec.l_dual >= 0.0);
  REQUIRE(rec.l_total >= 0.0);
}

namespace {

struct TrainLoopWorld {
  fs::path dir;
  fs::path corpus_dir;
  fs::path encoder_path;
  TrainConfig cfg;

  explicit TrainLoopWorld(const std::string& name) {
    dir = fs::temp_directory_path() / ("a2bfr_trainer_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);

    CorpusConfig cc;
    cc.size = 16;
    FaceRenderer renderer(cc);
    corpus_dir = dir / "corpus";
    build_corpus(renderer, 12, 3, corpus_dir);

    EncoderConfig ec = MicroWorld::make_ec();
    AttrEncoder enc(ec, 4);
    enc.trained = true;
    encoder_path = dir / "encoder.ckpt";
    save_encoder(encoder_path, enc);

    cfg = MicroWorld::make_cfg(MicroWorld::make_mc());
    cfg.corpus_path = corpus_dir / "manifest.jsonl";
    cfg.encoder_path = encoder_path;
    cfg.steps_total = 10;
    cfg.checkpoint_every = 5;
    cfg.out_dir = dir / "run";
  }
};

}  // namespace

TEST_CASE("train loop writes checkpoints, logs, and resumes exactly") {
  TrainLoopWorld w("resume");
  TrainResult full = train(w.cfg);
  REQUIRE(full.records.size() == 10);

  REQUIRE(fs::exists(w.cfg.out_dir / "step_000005.ckpt"));
  REQUIRE(fs::exists(w.cfg.out_dir / "step_000010.ckpt"));
  REQUIRE(fs::exists(w.cfg.out_dir / "final.ckpt"));
  int ckpts = 0;
  for (auto& e : fs::directory_iterator(w.cfg.out_dir))
    if (e.path().extension() == ".ckpt") ++ckpts;
  REQUIRE(ckpts == 3);

  // Composition invariant on every logged record.
  for (const auto& rec : full.records) {
    Scalar recomposed = rec.l_diff_src + w.cfg.weights.lambda_attr * rec.l_attr_src +
                        rec.l_diff_tar + w.cfg.weights.lambda_attr * rec.l_attr_tar +
                        w.cfg.weights.dual_alpha * rec.l_dual;
    REQUIRE(std::abs(recomposed - rec.l_total) < 1e-6);
  }

  // Resume from the midpoint reproduces the uninterrupted trajectory.
  TrainConfig resumed_cfg = w.cfg;
  resumed_cfg.out_dir = w.dir / "run_resumed";
  TrainResult resumed = train(resumed_cfg, w.cfg.out_dir / "step_000005.ckpt");
  REQUIRE(resumed.records.size() == 5);
  for (int i = 0; i < 5; ++i) REQUIRE(resumed.records[i].same_trajectory(full.records[5 + i]));

  // Bitwise-identical final parameters.
  Checkpoint a = load_checkpoint(w.cfg.out_dir / "final.ckpt");
  Checkpoint b = load_checkpoint(resumed_cfg.out_dir / "final.ckpt");
  for (auto& [name, data] : a.tensors) REQUIRE(b.tensors.at(name) == data);
}

TEST_CASE("identical train configs give identical trajectories") {
  TrainLoopWorld w1("det1"), w2("det2");
  w1.cfg.steps_total = 6;
  w2.cfg.steps_total = 6;
  TrainResult a = train(w1.cfg);
  TrainResult b = train(w2.cfg);
  for (size_t i = 0; i < a.records.size(); ++i)
    REQUIRE(a.records[i].same_trajectory(b.records[i]));
}

TEST_CASE("sdt training on an unpaired corpus is rejected") {
  TrainLoopWorld w("unpaired");
  // Strip the tar side from the manifest.
  Manifest m = load_manifest(w.cfg.corpus_path);
  for (auto& rec : m.records) rec.tar_png.clear();
  fs::path unpaired = w.dir / "corpus" / "unpaired.jsonl";
  save_manifest(unpaired, m);
  w.cfg.corpus_path = unpaired;
  REQUIRE_THROWS_AS(train(w.cfg), Error);

  // baseline mode accepts the same manifest.
  w.cfg.mode = TrainMode::baseline;
  w.cfg.steps_total = 2;
  w.cfg.out_dir = w.dir / "run_baseline";
  REQUIRE_NOTHROW(train(w.cfg));
}

TEST_CASE("missing corpus or encoder fail with typed errors") {
  TrainLoopWorld w("missing");
  TrainConfig cfg = w.cfg;
  cfg.corpus_path = w.dir / "nope.jsonl";
  REQUIRE_THROWS_AS(train(cfg), Error);
  cfg = w.cfg;
  cfg.encoder_path = w.dir / "nope.ckpt";
  REQUIRE_THROWS_AS(train(cfg), Error);
  cfg = w.cfg;
  cfg.steps_total = 0;
  REQUIRE_THROWS_AS(train(cfg), Error);
}

TEST_CASE("short training descends on the flow loss") {
  TrainLoopWorld w("descent");
  w.cfg.mode = TrainMode::baseline;
  w.cfg.steps_total = 220;
  w.cfg.checkpoint_every = 1000;
  w.cfg.learning_rate = 3e-3;
  TrainResult r = train(w.cfg);
  Scalar first = 0.0, last = 0.0;
  for (int i = 0; i < 40; ++i) first += r.records[i].l_diff_src;
  for (int i = 0; i < 40; ++i) last += r.records[r.records.size() - 40 + i].l_diff_src;
  REQUIRE(last < first);
}
