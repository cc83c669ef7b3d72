#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "a2bfr/checkpoint.hpp"
#include "a2bfr/encoder_train.hpp"
#include "a2bfr/synthgen.hpp"
#include "helpers.hpp"

using namespace a2bfr;
using namespace a2bfr::testing;
namespace fs = std::filesystem;

namespace {

// One small trained encoder shared by the accuracy-dependent tests: 32x32
// corpus, reduced width, short schedule.
struct TrainedWorld {
  Manifest manifest;
  EncoderEvalStats stats;
  AttrEncoder enc;

  static TrainedWorld& instance() {
    static TrainedWorld world;
    return world;
  }

 private:
  TrainedWorld() { enc = make(); }

  AttrEncoder make() {
    auto dir = fs::temp_directory_path() / "a2bfr_enc_corpus32";
    CorpusConfig cc;
    cc.size = 32;
    FaceRenderer renderer(cc);
    if (!fs::exists(dir / "manifest.jsonl")) build_corpus(renderer, 1000, 2024, dir);
    manifest = load_manifest(dir / "manifest.jsonl");

    EncoderTrainConfig cfg;
    cfg.arch.input_size = 32;
    cfg.arch.base_channels = 8;
    cfg.arch.id_dims = 16;
    cfg.steps = 500;
    cfg.learning_rate = 2e-3;
    cfg.aug_blur_max = 0.4;
    cfg.aug_noise = 0.03;
    cfg.seed = 99;
    return train_encoder(manifest, cfg, &stats);
  }
};

}  // namespace

TEST_CASE("untrained encoder with a zeroed attribute head outputs 0.5") {
  EncoderConfig ec = micro_encoder_config();
  AttrEncoder enc(ec, 1);
  enc.zero_attr_head();
  auto conf = enc.encode_attrs(random_image(16, 16, 3, 2));
  for (Scalar c : conf) REQUIRE(c == 0.5);
}

TEST_CASE("encoder outputs are deterministic and open") {
  EncoderConfig ec = micro_encoder_config();
  AttrEncoder enc(ec, 3);
  Image img = random_image(16, 16, 3, 4);
  auto a = enc.encode_attrs(img);
  auto b = enc.encode_attrs(img);
  REQUIRE(a == b);
  for (Scalar c : a) {
    REQUIRE(c > 0.0);
    REQUIRE(c < 1.0);
  }
  REQUIRE_THROWS_AS(enc.encode_attrs(random_image(8, 8, 3, 5)), Error);
}

TEST_CASE("training requires a big enough corpus") {
  auto dir = fs::temp_directory_path() / "a2bfr_enc_tiny";
  CorpusConfig cc;
  cc.size = 32;
  FaceRenderer renderer(cc);
  if (!fs::exists(dir / "manifest.jsonl")) build_corpus(renderer, 10, 1, dir);
  Manifest tiny = load_manifest(dir / "manifest.jsonl");
  EncoderTrainConfig cfg;
  cfg.arch.input_size = 32;
  REQUIRE_THROWS_AS(train_encoder(tiny, cfg), Error);
}

TEST_CASE("trained encoder meets the held-out accuracy and separation bars") {
  auto& w = TrainedWorld::instance();
  INFO("attr_accuracy=" << w.stats.attr_accuracy);
  INFO("same=" << w.stats.same_id_cosine << " diff=" << w.stats.diff_id_cosine);
  REQUIRE(w.stats.attr_accuracy >= 0.95);
  REQUIRE(w.stats.same_id_cosine >= 0.8);
  REQUIRE(w.stats.diff_id_cosine <= 0.4);
  REQUIRE(w.enc.trained);
  REQUIRE(w.enc.percep_scale > 0.0);

  // Confidence openness on real corpus images.
  Image src = read_png(w.manifest.base_dir / w.manifest.records[0].src_png);
  for (Scalar c : w.enc.encode_attrs(src)) {
    REQUIRE(c > 0.0);
    REQUIRE(c < 1.0);
  }

  // Edited-attribute score on a ground-truth positive render.
  int hits = 0, total = 0;
  for (int i = 0; i < 20; ++i) {
    const auto& meta = w.manifest.records[w.manifest.size() - 1 - i];
    const auto& attrs = meta.tar_attrs[meta.edited_index] >= 0.5 ? meta.tar_attrs : meta.src_attrs;
    const auto& png = meta.tar_attrs[meta.edited_index] >= 0.5 ? meta.tar_png : meta.src_png;
    (void)attrs;
    Image img = read_png(w.manifest.base_dir / png);
    if (extract_edited_score(w.enc, img, meta.edited_index) >= 0.9) ++hits;
    ++total;
  }
  REQUIRE(hits >= total * 3 / 4);  // strong scores on clear positives
}

TEST_CASE("encoder training is reproducible to identical metrics") {
  auto dir = fs::temp_directory_path() / "a2bfr_enc_corpus32";
  Manifest manifest = load_manifest(dir / "manifest.jsonl");
  EncoderTrainConfig cfg;
  cfg.arch.input_size = 32;
  cfg.arch.base_channels = 8;
  cfg.arch.id_dims = 16;
  cfg.steps = 40;
  cfg.seed = 7;
  EncoderEvalStats s1, s2;
  train_encoder(manifest, cfg, &s1);
  train_encoder(manifest, cfg, &s2);
  REQUIRE(std::abs(s1.attr_accuracy - s2.attr_accuracy) < 1e-3);
  REQUIRE(s1.same_id_cosine == s2.same_id_cosine);
}

TEST_CASE("encoder checkpoint round-trips parameters and calibration") {
  auto& w = TrainedWorld::instance();
  auto path = fs::temp_directory_path() / "a2bfr_enc.ckpt";
  save_encoder(path, w.enc);
  AttrEncoder loaded = load_encoder(path);
  REQUIRE(loaded.trained);
  REQUIRE(loaded.percep_scale == w.enc.percep_scale);
  Image img = read_png(w.manifest.base_dir / w.manifest.records[3].src_png);
  REQUIRE(loaded.encode_attrs(img) == w.enc.encode_attrs(img));
  REQUIRE(loaded.encode_identity(img) == w.enc.encode_identity(img));
}

TEST_CASE("perceptual distance calibration puts src/tar pairs near 0.2") {
  auto& w = TrainedWorld::instance();
  // Median over held-out pairs was pinned to 0.2 by construction; spot-check
  // the same statistic stays in a sane band over the first records.
  std::vector<Scalar> d;
  for (int i = 0; i < 30; ++i) {
    const auto& meta = w.manifest.records[i];
    Image src = read_png(w.manifest.base_dir / meta.src_png);
    Image tar = read_png(w.manifest.base_dir / meta.tar_png);
    d.push_back(perceptual_distance(w.enc, src, tar));
  }
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  REQUIRE(d[d.size() / 2] > 0.05);
  REQUIRE(d[d.size() / 2] < 0.6);

  Image same = read_png(w.manifest.base_dir / w.manifest.records[0].src_png);
  REQUIRE(perceptual_distance(w.enc, same, same) == 0.0);
}
