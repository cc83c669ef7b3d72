#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/image.hpp"
#include "a2bfr/image_io.hpp"
#include "a2bfr/rng.hpp"

namespace a2bfr {

enum class KernelKind { gaussian, average, median, motion };

inline const char* kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::average: return "average";
    case KernelKind::median: return "median";
    case KernelKind::motion: return "motion";
  }
  return "?";
}

// One draw of the online LQ synthesis: blur -> downsample -> noise -> JPEG.
struct DegradeConfig {
  KernelKind kernel_kind = KernelKind::gaussian;
  Scalar kernel_sigma = 1.0;  // gaussian sigma; kernel length for the others
  Scalar motion_angle = 0.0;  // radians, motion blur only
  int down_scale = 8;
  Scalar noise_sigma = 0.0;
  int jpeg_quality = 95;
  uint64_t seed = 0;
};

struct ParamRanges {
  Scalar sigma_lo = 0.2, sigma_hi = 3.0;
  Scalar noise_lo = 0.0, noise_hi = 0.08;
  int jpeg_lo = 30, jpeg_hi = 95;
  int down_scale = 8;
  std::vector<KernelKind> kinds = {KernelKind::gaussian, KernelKind::average, KernelKind::median,
                                   KernelKind::motion};
};

inline void validate_ranges(const ParamRanges& r) {
  require(!r.kinds.empty(), "degrade ranges: kernel kind list is empty");
  require(r.sigma_lo > 0.0 && r.sigma_hi >= r.sigma_lo, "degrade ranges: bad sigma range");
  require(r.noise_lo >= 0.0 && r.noise_hi >= r.noise_lo, "degrade ranges: bad noise range");
  require(r.jpeg_lo >= 1 && r.jpeg_hi <= 100 && r.jpeg_hi >= r.jpeg_lo,
          "degrade ranges: bad jpeg range");
  require(r.down_scale >= 1, "degrade ranges: down_scale must be >= 1");
}

inline void validate_config(const DegradeConfig& cfg) {
  require(cfg.kernel_sigma > 0.0, "degrade: kernel_sigma must be > 0");
  require(cfg.down_scale >= 1, "degrade: down_scale must be >= 1");
  require(cfg.noise_sigma >= 0.0, "degrade: noise_sigma must be >= 0");
  require(cfg.jpeg_quality >= 1 && cfg.jpeg_quality <= 100, "degrade: jpeg quality outside [1,100]");
}

inline DegradeConfig sample_degrade_config(uint64_t seed, const ParamRanges& ranges) {
  validate_ranges(ranges);
  Rng rng(derive_seed(seed, kTagDegrade));
  DegradeConfig cfg;
  cfg.kernel_kind = ranges.kinds[rng.uniform_index(ranges.kinds.size())];
  cfg.kernel_sigma = rng.uniform(ranges.sigma_lo, ranges.sigma_hi);
  cfg.motion_angle = rng.uniform(0.0, M_PI);
  cfg.down_scale = ranges.down_scale;
  cfg.noise_sigma = rng.uniform(ranges.noise_lo, ranges.noise_hi);
  cfg.jpeg_quality = ranges.jpeg_lo +
                     static_cast<int>(rng.uniform_index(static_cast<uint64_t>(ranges.jpeg_hi - ranges.jpeg_lo + 1)));
  cfg.seed = derive_seed(seed, kTagDegrade, 1);
  return cfg;
}

namespace detail {

// reflect-101 border: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

inline Image separable_blur(const Image& img, const std::vector<Scalar>& k) {
  int radius = static_cast<int>(k.size() / 2);
  Image tmp(img.h, img.w, img.c), out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        Scalar acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * img.at(y, reflect101(x + i, img.w), ch);
        tmp.at(y, x, ch) = acc;
      }
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        Scalar acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at(reflect101(y + i, img.h), x, ch);
        out.at(y, x, ch) = acc;
      }
  return out;
}

inline std::vector<Scalar> gaussian_kernel(Scalar sigma) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<Scalar> k(2 * radius + 1);
  Scalar sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Odd box width from the sampled length value.
inline int odd_width(Scalar len) {
  int k = 2 * static_cast<int>(std::floor(len)) + 1;
  return std::max(1, k);
}

inline Image median_blur(const Image& img, int width) {
  if (width <= 1) return img;
  int radius = width / 2;
  Image out(img.h, img.w, img.c);
  std::vector<Scalar> window;
  window.reserve(static_cast<size_t>(width) * width);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        window.clear();
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx)
            window.push_back(img.at(reflect101(y + dy, img.h), reflect101(x + dx, img.w), ch));
        size_t mid = window.size() / 2;
        std::nth_element(window.begin(), window.begin() + mid, window.end());
        out.at(y, x, ch) = window[mid];
      }
  return out;
}

// Line kernel rasterized with bilinear splats.
inline Image motion_blur(const Image& img, Scalar len, Scalar angle) {
  if (len <= 1.0) return img;
  int radius = static_cast<int>(std::ceil((len - 1.0) / 2.0));
  int n = 2 * radius + 1;
  std::vector<Scalar> k(static_cast<size_t>(n) * n, 0.0);
  Scalar cx = radius, cy = radius;
  Scalar dx = std::cos(angle), dy = std::sin(angle);
  int steps = std::max(2, static_cast<int>(std::ceil(len * 8.0)));
  for (int s = 0; s < steps; ++s) {
    Scalar t = -((len - 1.0) / 2.0) + (len - 1.0) * s / (steps - 1);
    Scalar px = cx + t * dx, py = cy + t * dy;
    int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
    Scalar fx = px - x0, fy = py - y0;
    for (int oy = 0; oy <= 1; ++oy)
      for (int ox = 0; ox <= 1; ++ox) {
        int xx = x0 + ox, yy = y0 + oy;
        if (xx < 0 || xx >= n || yy < 0 || yy >= n) continue;
        Scalar wgt = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
        k[static_cast<size_t>(yy) * n + xx] += wgt;
      }
  }
  Scalar sum = 0.0;
  for (Scalar v : k) sum += v;
  for (auto& v : k) v /= sum;

  Image out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        Scalar acc = 0.0;
        for (int ky = 0; ky < n; ++ky)
          for (int kx = 0; kx < n; ++kx) {
            Scalar w = k[static_cast<size_t>(ky) * n + kx];
            if (w == 0.0) continue;
            acc += w * img.at(reflect101(y + ky - radius, img.h),
                              reflect101(x + kx - radius, img.w), ch);
          }
        out.at(y, x, ch) = acc;
      }
  return out;
}

inline Image apply_blur(const Image& img, const DegradeConfig& cfg) {
  switch (cfg.kernel_kind) {
    case KernelKind::gaussian:
      return separable_blur(img, gaussian_kernel(cfg.kernel_sigma));
    case KernelKind::average: {
      int w = odd_width(cfg.kernel_sigma);
      std::vector<Scalar> k(w, 1.0 / w);
      return separable_blur(img, k);
    }
    case KernelKind::median:
      return median_blur(img, odd_width(cfg.kernel_sigma));
    case KernelKind::motion:
      return motion_blur(img, cfg.kernel_sigma, cfg.motion_angle);
  }
  return img;
}

}  // namespace detail

inline Image area_downsample(const Image& img, int r) {
  require(r >= 1, "area_downsample: scale must be >= 1");
  require(img.h % r == 0 && img.w % r == 0,
          "area_downsample: dimensions " + img.shape_str() + " not divisible by " + std::to_string(r));
  if (r == 1) return img;
  Image out(img.h / r, img.w / r, img.c);
  Scalar inv = 1.0 / (static_cast<Scalar>(r) * r);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        Scalar acc = 0.0;
        for (int dy = 0; dy < r; ++dy)
          for (int dx = 0; dx < r; ++dx) acc += img.at(y * r + dy, x * r + dx, ch);
        out.at(y, x, ch) = acc * inv;
      }
  return out;
}

// I_LQ = [ (I_HQ * k_sigma) down_r + n_delta ]_JPEG_q, then clamp to [0,1].
inline Image degrade(const Image& hq, const DegradeConfig& cfg) {
  validate_config(cfg);
  require(hq.h % cfg.down_scale == 0 && hq.w % cfg.down_scale == 0,
          "degrade: image " + hq.shape_str() + " not divisible by r=" + std::to_string(cfg.down_scale));

  Image lq = detail::apply_blur(hq, cfg);
  lq = area_downsample(lq, cfg.down_scale);
  if (cfg.noise_sigma > 0.0) {
    Rng rng(cfg.seed);
    for (auto& v : lq.v) v += cfg.noise_sigma * rng.gaussian();
  }
  lq = jpeg_roundtrip(lq, cfg.jpeg_quality);  // quantizes, encodes, decodes
  for (auto& v : lq.v) v = clamp01(v);
  return lq;
}

// Separable bilinear upsampling on pixel centers. Edge segments extrapolate
// linearly so that downsample-then-upsample reproduces linear ramps exactly;
// the output is clamped back to [0,1].
inline Image bilinear_upsample(const Image& lq, int target_h, int target_w) {
  require(target_h >= lq.h && target_w >= lq.w && target_h % lq.h == 0 && target_w % lq.w == 0,
          "bilinear_upsample: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
              " must be an integer multiple of " + lq.shape_str());

  auto src_pos = [](int i, int out_n, int in_n) {
    Scalar scale = static_cast<Scalar>(in_n) / out_n;
    return (i + 0.5) * scale - 0.5;
  };
  auto segment = [](Scalar p, int n, int& j, Scalar& f) {
    j = static_cast<int>(std::floor(p));
    if (j < 0) j = 0;
    if (j > n - 2) j = n - 2;
    f = p - j;
  };

  Image out(target_h, target_w, lq.c);
  for (int y = 0; y < target_h; ++y) {
    Scalar py = src_pos(y, target_h, lq.h);
    int jy;
    Scalar fy;
    if (lq.h == 1) {
      jy = 0;
      fy = 0.0;
    } else {
      segment(py, lq.h, jy, fy);
    }
    for (int x = 0; x < target_w; ++x) {
      Scalar px = src_pos(x, target_w, lq.w);
      int jx;
      Scalar fx;
      if (lq.w == 1) {
        jx = 0;
        fx = 0.0;
      } else {
        segment(px, lq.w, jx, fx);
      }
      for (int ch = 0; ch < lq.c; ++ch) {
        int jy1 = lq.h == 1 ? 0 : jy + 1;
        int jx1 = lq.w == 1 ? 0 : jx + 1;
        Scalar top = (1.0 - fx) * lq.at(jy, jx, ch) + fx * lq.at(jy, jx1, ch);
        Scalar bot = (1.0 - fx) * lq.at(jy1, jx, ch) + fx * lq.at(jy1, jx1, ch);
        out.at(y, x, ch) = clamp01((1.0 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

}  // namespace a2bfr
