#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/rng.hpp"

namespace a2bfr {

// H x W x C pixel grid, row-major interleaved, values nominally in [0,1].
struct Image {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<Scalar> v;

  Image() = default;
  Image(int h_, int w_, int c_, Scalar fill = 0.0)
      : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, fill) {}

  size_t size() const { return v.size(); }
  Scalar& at(int y, int x, int ch) { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }
  Scalar at(int y, int x, int ch) const { return v[(static_cast<size_t>(y) * w + x) * c + ch]; }

  bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }

  std::string shape_str() const {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
  }
};

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
  require(a.same_shape(b), std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

inline Image clamp01(const Image& img) {
  Image out = img;
  for (auto& x : out.v) x = clamp01(x);
  return out;
}

inline Image gaussian_image(int h, int w, int c, Rng& rng) {
  Image out(h, w, c);
  for (auto& x : out.v) x = rng.gaussian();
  return out;
}

inline Scalar mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  Scalar acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    Scalar d = a.v[i] - b.v[i];
    acc += d * d;
  }
  return acc / static_cast<Scalar>(a.v.size());
}

inline Scalar max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  Scalar m = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

inline Scalar mean_value(const Image& img) {
  Scalar acc = 0.0;
  for (Scalar x : img.v) acc += x;
  return img.v.empty() ? 0.0 : acc / static_cast<Scalar>(img.v.size());
}

// out = a + s * b
inline Image axpy(const Image& a, Scalar s, const Image& b) {
  require_same_shape(a, b, "axpy");
  Image out = a;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += s * b.v[i];
  return out;
}

inline Image scaled(const Image& a, Scalar s) {
  Image out = a;
  for (auto& x : out.v) x *= s;
  return out;
}

inline bool bitwise_equal(const Image& a, const Image& b) {
  return a.same_shape(b) && a.v == b.v;
}

// Integer pixel rectangle [x0,x1) x [y0,y1); used for attribute region masks.
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

}  // namespace a2bfr
