#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "a2bfr/common.hpp"
#include "a2bfr/image.hpp"
#include "a2bfr/parallel.hpp"
#include "a2bfr/rng.hpp"

namespace a2bfr {

// Planar feature map (channel, row, col).
struct Chw {
  int c = 0, h = 0, w = 0;
  std::vector<Scalar> v;

  Chw() = default;
  Chw(int c_, int h_, int w_, Scalar fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  size_t plane() const { return static_cast<size_t>(h) * w; }
  Scalar* channel(int ch) { return v.data() + ch * plane(); }
  const Scalar* channel(int ch) const { return v.data() + ch * plane(); }
};

inline Chw chw_from_image(const Image& img) {
  Chw out(img.c, img.h, img.w);
  for (int ch = 0; ch < img.c; ++ch) {
    Scalar* plane = out.channel(ch);
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) plane[y * img.w + x] = img.at(y, x, ch);
  }
  return out;
}

inline Image image_from_chw(const Chw& t) {
  Image img(t.h, t.w, t.c);
  for (int ch = 0; ch < t.c; ++ch) {
    const Scalar* plane = t.channel(ch);
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) img.at(y, x, ch) = plane[y * t.w + x];
  }
  return img;
}

inline Chw concat_channels(const Chw& a, const Chw& b) {
  Chw out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  return out;
}

struct ParamTensor {
  std::string name;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;

  void resize(size_t n) {
    value.assign(n, 0.0);
    grad.assign(n, 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline void he_init(ParamTensor& p, size_t fan_in, Rng& rng) {
  Scalar std_dev = std::sqrt(2.0 / static_cast<Scalar>(fan_in));
  for (auto& v : p.value) v = std_dev * rng.gaussian();
}

// ---------------------------------------------------------------------------
// Conv2d: stride 1, square kernel (1 or 3), zero padding k/2.
// ---------------------------------------------------------------------------
struct Conv2d {
  int in_c = 0, out_c = 0, k = 3, pad = 1;
  ParamTensor w;  // [oc][ic][ky][kx]
  ParamTensor b;  // [oc]

  void init(const std::string& name, int in_channels, int out_channels, int kernel, Rng& rng) {
    in_c = in_channels;
    out_c = out_channels;
    k = kernel;
    pad = kernel / 2;
    w.name = name + ".w";
    b.name = name + ".b";
    w.resize(static_cast<size_t>(out_c) * in_c * k * k);
    b.resize(static_cast<size_t>(out_c));
    he_init(w, static_cast<size_t>(in_c) * k * k, rng);
  }

  void zero_params() {
    std::fill(w.value.begin(), w.value.end(), 0.0);
    std::fill(b.value.begin(), b.value.end(), 0.0);
  }

  Chw forward(const Chw& in) const {
    Chw out(out_c, in.h, in.w);
    const int hh = in.h, ww = in.w;
    parallel_for(out_c, [&](int64_t oc) {
      Scalar* op = out.channel(static_cast<int>(oc));
      Scalar bias = b.value[oc];
      for (size_t i = 0; i < out.plane(); ++i) op[i] = bias;
      for (int ic = 0; ic < in_c; ++ic) {
        const Scalar* ip = in.channel(ic);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            Scalar wv = w.value[((oc * in_c + ic) * k + ky) * k + kx];
            if (wv == 0.0) continue;
            int dy = ky - pad, dx = kx - pad;
            int y0 = std::max(0, -dy), y1 = std::min(hh, hh - dy);
            int x0 = std::max(0, -dx), x1 = std::min(ww, ww - dx);
            for (int y = y0; y < y1; ++y) {
              Scalar* orow = op + y * ww;
              const Scalar* irow = ip + (y + dy) * ww + dx;
              for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
            }
          }
        }
      }
    });
    return out;
  }

  // Returns grad wrt input; accumulates into w.grad/b.grad when accumulate.
  Chw backward(const Chw& in, const Chw& gout, bool accumulate) {
    const int hh = in.h, ww = in.w;
    Chw gin(in_c, hh, ww);
    parallel_for(in_c, [&](int64_t ic) {
      Scalar* gp = gin.channel(static_cast<int>(ic));
      for (int oc = 0; oc < out_c; ++oc) {
        const Scalar* gop = gout.channel(oc);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            Scalar wv = w.value[((static_cast<size_t>(oc) * in_c + ic) * k + ky) * k + kx];
            if (wv == 0.0) continue;
            int dy = ky - pad, dx = kx - pad;
            // in[y+dy][x+dx] contributed to out[y][x]; transpose the shift.
            int y0 = std::max(0, dy), y1 = std::min(hh, hh + dy);
            int x0 = std::max(0, dx), x1 = std::min(ww, ww + dx);
            for (int iy = y0; iy < y1; ++iy) {
              Scalar* grow = gp + iy * ww;
              const Scalar* gorow = gop + (iy - dy) * ww - dx;
              for (int ix = x0; ix < x1; ++ix) grow[ix] += wv * gorow[ix];
            }
          }
        }
      }
    });
    if (accumulate) {
      parallel_for(out_c, [&](int64_t oc) {
        const Scalar* gop = gout.channel(static_cast<int>(oc));
        Scalar gb = 0.0;
        for (size_t i = 0; i < gout.plane(); ++i) gb += gop[i];
        b.grad[oc] += gb;
        for (int ic = 0; ic < in_c; ++ic) {
          const Scalar* ip = in.channel(ic);
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              int dy = ky - pad, dx = kx - pad;
              int y0 = std::max(0, -dy), y1 = std::min(hh, hh - dy);
              int x0 = std::max(0, -dx), x1 = std::min(ww, ww - dx);
              Scalar acc = 0.0;
              for (int y = y0; y < y1; ++y) {
                const Scalar* gorow = gop + y * ww;
                const Scalar* irow = ip + (y + dy) * ww + dx;
                for (int x = x0; x < x1; ++x) acc += gorow[x] * irow[x];
              }
              w.grad[((oc * in_c + ic) * k + ky) * k + kx] += acc;
            }
          }
        }
      });
    }
    return gin;
  }
};

// ---------------------------------------------------------------------------
// Dense: y = W x + b.
// ---------------------------------------------------------------------------
struct Dense {
  int in_n = 0, out_n = 0;
  ParamTensor w;  // [out][in]
  ParamTensor b;  // [out]

  void init(const std::string& name, int in_count, int out_count, Rng& rng) {
    in_n = in_count;
    out_n = out_count;
    w.name = name + ".w";
    b.name = name + ".b";
    w.resize(static_cast<size_t>(out_n) * in_n);
    b.resize(static_cast<size_t>(out_n));
    he_init(w, static_cast<size_t>(in_n), rng);
  }

  void zero_params() {
    std::fill(w.value.begin(), w.value.end(), 0.0);
    std::fill(b.value.begin(), b.value.end(), 0.0);
  }

  std::vector<Scalar> forward(const std::vector<Scalar>& x) const {
    std::vector<Scalar> y(out_n);
    for (int o = 0; o < out_n; ++o) {
      Scalar acc = b.value[o];
      const Scalar* wrow = w.value.data() + static_cast<size_t>(o) * in_n;
      for (int i = 0; i < in_n; ++i) acc += wrow[i] * x[i];
      y[o] = acc;
    }
    return y;
  }

  std::vector<Scalar> backward(const std::vector<Scalar>& x, const std::vector<Scalar>& gout,
                               bool accumulate) {
    std::vector<Scalar> gin(in_n, 0.0);
    for (int o = 0; o < out_n; ++o) {
      Scalar g = gout[o];
      const Scalar* wrow = w.value.data() + static_cast<size_t>(o) * in_n;
      for (int i = 0; i < in_n; ++i) gin[i] += wrow[i] * g;
      if (accumulate) {
        Scalar* gwrow = w.grad.data() + static_cast<size_t>(o) * in_n;
        for (int i = 0; i < in_n; ++i) gwrow[i] += g * x[i];
        b.grad[o] += g;
      }
    }
    return gin;
  }
};

// ---------------------------------------------------------------------------
// Activations and shape ops (stateless; caller keeps what backward needs).
// ---------------------------------------------------------------------------

inline Scalar sigmoid(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }

// SiLU x*sigmoid(x): smooth everywhere, which keeps finite-difference
// gradient checks clean.
inline Chw silu_forward(const Chw& pre) {
  Chw out = pre;
  for (auto& x : out.v) x = x * sigmoid(x);
  return out;
}

inline Chw silu_backward(const Chw& pre, const Chw& gout) {
  Chw gin = pre;
  for (size_t i = 0; i < gin.v.size(); ++i) {
    Scalar s = sigmoid(pre.v[i]);
    gin.v[i] = gout.v[i] * s * (1.0 + pre.v[i] * (1.0 - s));
  }
  return gin;
}

inline std::vector<Scalar> silu_vec_forward(const std::vector<Scalar>& pre) {
  std::vector<Scalar> out(pre.size());
  for (size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] * sigmoid(pre[i]);
  return out;
}

inline std::vector<Scalar> silu_vec_backward(const std::vector<Scalar>& pre,
                                             const std::vector<Scalar>& gout) {
  std::vector<Scalar> gin(pre.size());
  for (size_t i = 0; i < pre.size(); ++i) {
    Scalar s = sigmoid(pre[i]);
    gin[i] = gout[i] * s * (1.0 + pre[i] * (1.0 - s));
  }
  return gin;
}

inline Chw avgpool2_forward(const Chw& in) {
  Chw out(in.c, in.h / 2, in.w / 2);
  for (int ch = 0; ch < in.c; ++ch) {
    const Scalar* ip = in.channel(ch);
    Scalar* op = out.channel(ch);
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w; ++x) {
        const Scalar* p = ip + (2 * y) * in.w + 2 * x;
        op[y * out.w + x] = 0.25 * (p[0] + p[1] + p[in.w] + p[in.w + 1]);
      }
  }
  return out;
}

inline Chw avgpool2_backward(const Chw& gout, int in_h, int in_w) {
  Chw gin(gout.c, in_h, in_w);
  for (int ch = 0; ch < gout.c; ++ch) {
    const Scalar* gp = gout.channel(ch);
    Scalar* ip = gin.channel(ch);
    for (int y = 0; y < gout.h; ++y)
      for (int x = 0; x < gout.w; ++x) {
        Scalar g = 0.25 * gp[y * gout.w + x];
        Scalar* p = ip + (2 * y) * in_w + 2 * x;
        p[0] = g;
        p[1] = g;
        p[in_w] = g;
        p[in_w + 1] = g;
      }
  }
  return gin;
}

inline Chw upsample2_forward(const Chw& in) {
  Chw out(in.c, in.h * 2, in.w * 2);
  for (int ch = 0; ch < in.c; ++ch) {
    const Scalar* ip = in.channel(ch);
    Scalar* op = out.channel(ch);
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) {
        Scalar v = ip[y * in.w + x];
        Scalar* p = op + (2 * y) * out.w + 2 * x;
        p[0] = v;
        p[1] = v;
        p[out.w] = v;
        p[out.w + 1] = v;
      }
  }
  return out;
}

inline Chw upsample2_backward(const Chw& gout) {
  Chw gin(gout.c, gout.h / 2, gout.w / 2);
  for (int ch = 0; ch < gout.c; ++ch) {
    const Scalar* gp = gout.channel(ch);
    Scalar* ip = gin.channel(ch);
    for (int y = 0; y < gin.h; ++y)
      for (int x = 0; x < gin.w; ++x) {
        const Scalar* p = gp + (2 * y) * gout.w + 2 * x;
        ip[y * gin.w + x] = p[0] + p[1] + p[gout.w] + p[gout.w + 1];
      }
  }
  return gin;
}

inline Chw global_avgpool_backward(const std::vector<Scalar>& gout, int c, int h, int w) {
  Chw gin(c, h, w);
  Scalar inv = 1.0 / (static_cast<Scalar>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    Scalar g = gout[ch] * inv;
    Scalar* p = gin.channel(ch);
    for (size_t i = 0; i < gin.plane(); ++i) p[i] = g;
  }
  return gin;
}

inline std::vector<Scalar> global_avgpool_forward(const Chw& in) {
  std::vector<Scalar> out(in.c);
  Scalar inv = 1.0 / static_cast<Scalar>(in.plane());
  for (int ch = 0; ch < in.c; ++ch) {
    const Scalar* p = in.channel(ch);
    Scalar acc = 0.0;
    for (size_t i = 0; i < in.plane(); ++i) acc += p[i];
    out[ch] = acc * inv;
  }
  return out;
}

// Adds a per-channel bias everywhere (conditioning injection point).
inline void add_channel_bias(Chw& t, const std::vector<Scalar>& bias) {
  for (int ch = 0; ch < t.c; ++ch) {
    Scalar b = bias[ch];
    Scalar* p = t.channel(ch);
    for (size_t i = 0; i < t.plane(); ++i) p[i] += b;
  }
}

inline std::vector<Scalar> channel_bias_backward(const Chw& gout) {
  std::vector<Scalar> g(gout.c, 0.0);
  for (int ch = 0; ch < gout.c; ++ch) {
    const Scalar* p = gout.channel(ch);
    Scalar acc = 0.0;
    for (size_t i = 0; i < gout.plane(); ++i) acc += p[i];
    g[ch] = acc;
  }
  return g;
}

}  // namespace a2bfr
