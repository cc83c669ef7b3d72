#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/image.hpp"
#include "a2bfr/image_io.hpp"
#include "a2bfr/manifest.hpp"
#include "a2bfr/rng.hpp"

namespace a2bfr {

// Controllable attributes, in index order.
enum Attr : int { kGlasses = 0, kSmile = 1, kHat = 2, kDarkHair = 3, kBeard = 4, kBlush = 5 };

inline const std::vector<std::string>& attribute_names() {
  static const std::vector<std::string> names = {"glasses", "smile", "hat",
                                                 "darkHair", "beard", "blush"};
  return names;
}

struct CorpusConfig {
  int size = 64;       // square canvas
  int channels = 3;
  int attr_count = 6;  // K
  int id_dims = 8;     // D
};

using IdentityLatent = std::vector<Scalar>;
using AttrVector = std::vector<Scalar>;

struct PairRecord {
  Image src_image;
  Image tar_image;
  AttrVector src_attrs;
  AttrVector tar_attrs;
  int edited_index = -1;
  IdentityLatent identity;
  uint64_t seed = 0;
};

inline void validate_identity(const CorpusConfig& cfg, const IdentityLatent& id) {
  require(static_cast<int>(id.size()) == cfg.id_dims,
          "identity latent has " + std::to_string(id.size()) + " dims, corpus expects " +
              std::to_string(cfg.id_dims));
  for (Scalar v : id)
    require(std::isfinite(v) && v >= -1.0 && v <= 1.0, "identity component outside [-1,1]");
}

inline void validate_attrs(const CorpusConfig& cfg, const AttrVector& attrs) {
  require(static_cast<int>(attrs.size()) == cfg.attr_count,
          "attribute vector has " + std::to_string(attrs.size()) + " entries, corpus expects " +
              std::to_string(cfg.attr_count));
  for (Scalar v : attrs)
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "attribute value outside [0,1]");
}

// Procedural aligned-face renderer. Geometry (oval, eyes, mouth) is a pure
// function of the identity latent; each attribute draws only inside a region
// rectangle that depends on identity alone, so toggling an attribute can
// never touch pixels outside its declared region.
class FaceRenderer {
 public:
  explicit FaceRenderer(CorpusConfig cfg = {}) : cfg_(cfg) {
    require(cfg_.size >= 16, "renderer needs canvas >= 16");
    require(cfg_.channels == 3, "renderer emits RGB");
    require(cfg_.attr_count == 6, "renderer supports exactly the 6 built-in attributes");
    require(cfg_.id_dims == 8, "renderer expects an 8-dim identity latent");
  }

  const CorpusConfig& config() const { return cfg_; }

  Image render(const IdentityLatent& id, const AttrVector& attrs) const {
    validate_identity(cfg_, id);
    validate_attrs(cfg_, attrs);
    Geometry g = geometry(id);
    const Scalar s = static_cast<Scalar>(cfg_.size);

    Image img(cfg_.size, cfg_.size, 3);
    // Background.
    fill(img, {0, 0, cfg_.size, cfg_.size}, {0.84, 0.86, 0.90});

    // Face oval with 8 angular shading sectors, one per identity dim. The
    // sector offsets keep every latent direction visible in pixel space.
    for (int y = 0; y < cfg_.size; ++y) {
      for (int x = 0; x < cfg_.size; ++x) {
        Scalar nx = (x + 0.5 - g.cx) / g.rx;
        Scalar ny = (y + 0.5 - g.cy) / g.ry;
        if (nx * nx + ny * ny > 1.0) continue;
        Scalar angle = std::atan2(ny, nx);  // [-pi, pi]
        int sector = static_cast<int>((angle + M_PI) / (2.0 * M_PI) * 8.0);
        if (sector > 7) sector = 7;
        Scalar off = 0.34 * id[sector];
        img.at(y, x, 0) = 0.52 + off * 1.00;
        img.at(y, x, 1) = 0.47 + off * 0.85;
        img.at(y, x, 2) = 0.43 + off * 0.72;
      }
    }

    // Hair cap: always drawn, color toggled by darkHair.
    {
      bool dark = present(attrs, kDarkHair);
      std::array<Scalar, 3> hair = dark ? std::array<Scalar, 3>{0.12, 0.10, 0.08}
                                        : std::array<Scalar, 3>{0.58, 0.44, 0.30};
      Rect r = region_rect(id, kDarkHair);
      for_ellipse_band(g, r, [&](int y, int x, Scalar ny) {
        if (ny < -kHairline) set(img, y, x, hair);
      });
    }

    if (present(attrs, kBeard)) {
      Rect r = region_rect(id, kBeard);
      for_ellipse_band(g, r, [&](int y, int x, Scalar ny) {
        if (ny > kBeardline) set(img, y, x, {0.07, 0.05, 0.04});
      });
    }

    if (present(attrs, kBlush)) {
      Rect r = region_rect(id, kBlush);
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
          for (int side : {-1, 1}) {
            Scalar ex = g.cx + side * 0.17 * s;
            Scalar ey = g.cy + 0.07 * s;
            Scalar dx = (x + 0.5 - ex) / (0.070 * s);
            Scalar dy = (y + 0.5 - ey) / (0.050 * s);
            if (dx * dx + dy * dy <= 1.0) blend(img, y, x, {1.0, 0.22, 0.45}, 0.95);
          }
        }
      }
    }

    // Mouth: always drawn; a smile widens it, bends the corners up, and
    // shows a white teeth band.
    {
      Rect r = region_rect(id, kSmile);
      bool smiling = present(attrs, kSmile);
      Scalar bend_amp = smiling ? 0.09 * s : 0.0;
      Scalar half_w = smiling ? g.mouth_hw * 1.3 : g.mouth_hw;
      Scalar th = 0.026 * s;
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
          Scalar dx = x + 0.5 - g.cx;
          if (std::abs(dx) > half_w) continue;
          Scalar u = dx / half_w;
          Scalar center = g.mouth_y + bend_amp * (0.5 - u * u);
          Scalar dy = std::abs(y + 0.5 - center);
          if (dy > th) continue;
          bool teeth = smiling && std::abs(u) < 0.72 && dy <= 0.55 * th;
          if (teeth)
            set(img, y, x, {0.93, 0.93, 0.90});
          else
            set(img, y, x, {0.55, 0.12, 0.14});
        }
      }
    }

    // Eyes: sclera plus pupil, geometry only.
    for (int side : {-1, 1}) {
      Scalar ex = g.cx + side * g.eye_dx;
      draw_disc(img, ex, g.eye_y, 0.045 * s, {0.95, 0.95, 0.96});
      draw_disc(img, ex, g.eye_y, 0.020 * s, {0.09, 0.08, 0.10});
    }

    if (present(attrs, kGlasses)) {
      Rect r = region_rect(id, kGlasses);
      Scalar rg = 0.075 * s;
      Scalar ring = 0.020 * s;
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
          Scalar px = x + 0.5, py = y + 0.5;
          bool rim = false, lens = false;
          for (int side : {-1, 1}) {
            Scalar ex = g.cx + side * g.eye_dx;
            Scalar d = std::hypot(px - ex, py - g.eye_y);
            if (std::abs(d - rg) <= ring) rim = true;
            if (d < rg - ring) lens = true;
          }
          // Bridge between the lenses.
          if (std::abs(py - g.eye_y) <= 0.012 * s && std::abs(px - g.cx) <= g.eye_dx - rg + ring)
            rim = true;
          if (rim)
            set(img, y, x, {0.10, 0.10, 0.13});
          else if (lens)
            blend(img, y, x, {0.25, 0.35, 0.55}, 0.35);
        }
      }
    }

    if (present(attrs, kHat)) {
      Rect r = region_rect(id, kHat);
      fill(img, r, {0.16, 0.21, 0.46});
    }

    for (auto& v : img.v) v = a2bfr::clamp01(v);
    return img;
  }

  // Axis-aligned pixel region an attribute is allowed to touch. Depends on
  // identity (geometry) but never on the attribute vector.
  Rect region_rect(const IdentityLatent& id, int attr) const {
    validate_identity(cfg_, id);
    require(attr >= 0 && attr < cfg_.attr_count, "attribute index out of range");
    Geometry g = geometry(id);
    const Scalar s = static_cast<Scalar>(cfg_.size);
    Rect r;
    switch (attr) {
      case kGlasses: {
        Scalar rg = 0.075 * s + 0.020 * s;
        r = rect(g.cx - g.eye_dx - rg - 1, g.eye_y - rg - 1, g.cx + g.eye_dx + rg + 1,
                 g.eye_y + rg + 1);
        break;
      }
      case kSmile: {
        Scalar th = 0.026 * s;
        Scalar hw = g.mouth_hw * 1.3;
        r = rect(g.cx - hw - 1, g.mouth_y - 0.055 * s - th - 1, g.cx + hw + 1,
                 g.mouth_y + 0.055 * s + th + 1);
        break;
      }
      case kHat:
        r = rect(g.cx - g.rx - 0.02 * s, g.cy - g.ry - 0.07 * s, g.cx + g.rx + 0.02 * s,
                 g.cy - g.ry + 0.06 * s);
        break;
      case kDarkHair:
        r = rect(g.cx - g.rx - 1, g.cy - g.ry - 1, g.cx + g.rx + 1,
                 g.cy - kHairline * g.ry + 1);
        break;
      case kBeard:
        r = rect(g.cx - g.rx - 1, g.cy + kBeardline * g.ry - 1, g.cx + g.rx + 1, g.cy + g.ry + 1);
        break;
      case kBlush:
        r = rect(g.cx - 0.17 * s - 0.065 * s - 1, g.cy + 0.07 * s - 0.048 * s - 1,
                 g.cx + 0.17 * s + 0.065 * s + 1, g.cy + 0.07 * s + 0.048 * s + 1);
        break;
      default:
        break;
    }
    return clip_canvas(r);
  }

 private:
  struct Geometry {
    Scalar cx, cy, rx, ry, eye_y, eye_dx, mouth_y, mouth_hw;
  };

  static constexpr Scalar kHairline = 0.55;   // hair cap: ny < -kHairline
  static constexpr Scalar kBeardline = 0.62;  // beard band: ny > kBeardline

  Geometry geometry(const IdentityLatent& id) const {
    const Scalar s = static_cast<Scalar>(cfg_.size);
    Geometry g;
    g.cx = 0.50 * s;
    g.cy = 0.54 * s;
    g.rx = (0.270 + 0.045 * id[0]) * s;
    g.ry = (0.340 + 0.045 * id[1]) * s;
    g.eye_y = g.cy - 0.10 * s;
    g.eye_dx = (0.110 + 0.030 * id[2]) * s;
    g.mouth_y = g.cy + 0.175 * s;
    g.mouth_hw = (0.110 + 0.035 * id[3]) * s;
    return g;
  }

  static bool present(const AttrVector& attrs, int k) { return attrs[k] >= 0.5; }

  Rect rect(Scalar x0, Scalar y0, Scalar x1, Scalar y1) const {
    return Rect{static_cast<int>(std::floor(x0)), static_cast<int>(std::floor(y0)),
                static_cast<int>(std::ceil(x1)), static_cast<int>(std::ceil(y1))};
  }

  Rect clip_canvas(Rect r) const {
    r.x0 = std::max(r.x0, 0);
    r.y0 = std::max(r.y0, 0);
    r.x1 = std::min(r.x1, cfg_.size);
    r.y1 = std::min(r.y1, cfg_.size);
    return r;
  }

  static void set(Image& img, int y, int x, std::array<Scalar, 3> color) {
    img.at(y, x, 0) = color[0];
    img.at(y, x, 1) = color[1];
    img.at(y, x, 2) = color[2];
  }

  static void blend(Image& img, int y, int x, std::array<Scalar, 3> color, Scalar alpha) {
    for (int ch = 0; ch < 3; ++ch)
      img.at(y, x, ch) = (1.0 - alpha) * img.at(y, x, ch) + alpha * color[ch];
  }

  static void fill(Image& img, Rect r, std::array<Scalar, 3> color) {
    for (int y = std::max(r.y0, 0); y < std::min(r.y1, img.h); ++y)
      for (int x = std::max(r.x0, 0); x < std::min(r.x1, img.w); ++x) set(img, y, x, color);
  }

  static void draw_disc(Image& img, Scalar cx, Scalar cy, Scalar radius,
                        std::array<Scalar, 3> color) {
    int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    int x1 = std::min(img.w, static_cast<int>(std::ceil(cx + radius)) + 1);
    int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    int y1 = std::min(img.h, static_cast<int>(std::ceil(cy + radius)) + 1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= radius) set(img, y, x, color);
  }

  // Visits pixels of the face ellipse inside rect r, passing normalized ny.
  template <typename F>
  void for_ellipse_band(const Geometry& g, Rect r, F&& f) const {
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        Scalar nx = (x + 0.5 - g.cx) / g.rx;
        Scalar ny = (y + 0.5 - g.cy) / g.ry;
        if (nx * nx + ny * ny <= 1.0) f(y, x, ny);
      }
    }
  }

  CorpusConfig cfg_;
};

inline void validate_pair(const CorpusConfig& cfg, const PairRecord& rec) {
  validate_attrs(cfg, rec.src_attrs);
  validate_attrs(cfg, rec.tar_attrs);
  validate_identity(cfg, rec.identity);
  require(rec.edited_index >= 0 && rec.edited_index < cfg.attr_count,
          "edited_index out of range");
  for (int k = 0; k < cfg.attr_count; ++k) {
    if (k == rec.edited_index) {
      require(std::abs(rec.src_attrs[k] - rec.tar_attrs[k]) == 1.0,
              "pair must differ by exactly 1 at the edited attribute");
    } else {
      require(rec.src_attrs[k] == rec.tar_attrs[k],
              "pair attributes must match away from the edited attribute");
    }
  }
}

// Deterministic pair draw: identity, bystander attributes, and the edited
// attribute's source state all come from the record seed.
inline PairRecord sample_pair(const FaceRenderer& renderer, uint64_t seed, int edited_index) {
  const CorpusConfig& cfg = renderer.config();
  require(edited_index >= 0 && edited_index < cfg.attr_count, "edited_index out of range");
  Rng rng(seed);
  PairRecord rec;
  rec.seed = seed;
  rec.edited_index = edited_index;
  rec.identity.resize(cfg.id_dims);
  for (auto& v : rec.identity) v = rng.uniform(-1.0, 1.0);
  rec.src_attrs.resize(cfg.attr_count);
  for (auto& v : rec.src_attrs) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  rec.tar_attrs = rec.src_attrs;
  rec.tar_attrs[edited_index] = 1.0 - rec.src_attrs[edited_index];
  rec.src_image = renderer.render(rec.identity, rec.src_attrs);
  rec.tar_image = renderer.render(rec.identity, rec.tar_attrs);
  return rec;
}

struct CorpusSummary {
  int64_t count = 0;
  std::map<int, int64_t> per_edited_index;
  std::filesystem::path manifest_path;
};

inline CorpusSummary build_corpus(const FaceRenderer& renderer, int64_t count, uint64_t seed,
                                  const std::filesystem::path& out_dir) {
  require(count > 0, "build_corpus: count must be > 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require_runtime(std::filesystem::is_directory(out_dir),
                  "build_corpus: cannot create " + out_dir.string());

  const CorpusConfig& cfg = renderer.config();
  Manifest manifest;
  manifest.base_dir = out_dir;
  CorpusSummary summary;
  summary.count = count;

  char name[64];
  for (int64_t i = 0; i < count; ++i) {
    uint64_t rec_seed = derive_seed(seed, kTagCorpusRecord, static_cast<uint64_t>(i));
    int edited = static_cast<int>(i % cfg.attr_count);
    PairRecord rec = sample_pair(renderer, rec_seed, edited);

    RecordMeta meta;
    meta.id = i;
    std::snprintf(name, sizeof(name), "src_%06lld.png", static_cast<long long>(i));
    meta.src_png = name;
    std::snprintf(name, sizeof(name), "tar_%06lld.png", static_cast<long long>(i));
    meta.tar_png = name;
    meta.src_attrs = rec.src_attrs;
    meta.tar_attrs = rec.tar_attrs;
    meta.edited_index = rec.edited_index;
    meta.identity = rec.identity;
    meta.seed = rec_seed;

    write_png(out_dir / meta.src_png, rec.src_image);
    write_png(out_dir / meta.tar_png, rec.tar_image);
    manifest.records.push_back(std::move(meta));
    summary.per_edited_index[edited]++;
  }

  summary.manifest_path = out_dir / "manifest.jsonl";
  save_manifest(summary.manifest_path, manifest);
  return summary;
}

// Loads the pair images referenced by a manifest record.
inline PairRecord load_pair(const Manifest& manifest, const RecordMeta& meta,
                            const CorpusConfig& cfg) {
  PairRecord rec;
  rec.src_attrs = meta.src_attrs;
  rec.tar_attrs = meta.tar_attrs;
  rec.edited_index = meta.edited_index;
  rec.identity = meta.identity;
  rec.seed = meta.seed;
  rec.src_image = read_png(manifest.base_dir / meta.src_png);
  if (meta.paired()) rec.tar_image = read_png(manifest.base_dir / meta.tar_png);
  (void)cfg;
  return rec;
}

}  // namespace a2bfr
