#include "stylab/imageops.hpp"

#include <algorithm>
#include <cmath>

namespace stylab {

namespace {

struct Tap {
  int64_t i0, i1;
  double w1;
};

std::vector<Tap> make_taps(int64_t in, int64_t out) {
  std::vector<Tap> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    double fl = std::floor(src);
    int64_t i0 = static_cast<int64_t>(fl);
    int64_t i1 = i0 + 1;
    double w1 = src - fl;
    i0 = std::clamp<int64_t>(i0, 0, in - 1);
    i1 = std::clamp<int64_t>(i1, 0, in - 1);
    taps[static_cast<size_t>(o)] = {i0, i1, w1};
  }
  return taps;
}

void check_chw(const Tensor& img, const char* where) {
  if (img.rank() != 3) fail(std::string(where) + ": need [C,H,W], got " + shape_str(img.shape));
}

}  // namespace

Tensor resize_image(const Tensor& img, int64_t out_h, int64_t out_w) {
  check_chw(img, "resize_image");
  const int64_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
  if (H < 1 || W < 1 || out_h < 1 || out_w < 1) fail("resize_image: empty input or output");
  const auto ty = make_taps(H, out_h);
  const auto tx = make_taps(W, out_w);
  Tensor out({C, out_h, out_w});
  for (int64_t c = 0; c < C; ++c) {
    const float* xp = img.ptr() + c * H * W;
    float* op = out.ptr() + c * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const Tap& rY = ty[static_cast<size_t>(oy)];
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const Tap& rX = tx[static_cast<size_t>(ox)];
        const double v00 = xp[rY.i0 * W + rX.i0];
        const double v01 = xp[rY.i0 * W + rX.i1];
        const double v10 = xp[rY.i1 * W + rX.i0];
        const double v11 = xp[rY.i1 * W + rX.i1];
        const double top = v00 + (v01 - v00) * rX.w1;
        const double bot = v10 + (v11 - v10) * rX.w1;
        op[oy * out_w + ox] = static_cast<float>(top + (bot - top) * rY.w1);
      }
    }
  }
  return out;
}

Tensor luma(const Tensor& img) {
  check_chw(img, "luma");
  if (img.shape[0] != 3) fail("luma: need 3 channels, got " + shape_str(img.shape));
  const int64_t HW = img.shape[1] * img.shape[2];
  Tensor out({img.shape[1], img.shape[2]});
  const float* r = img.ptr();
  const float* g = r + HW;
  const float* b = g + HW;
  for (int64_t i = 0; i < HW; ++i)
    out[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  return out;
}

void clamp01_inplace(Tensor& img) {
  for (auto& v : img.data) v = std::min(1.0f, std::max(0.0f, v));
}

Tensor rgb_to_hsv(const Tensor& img) {
  check_chw(img, "rgb_to_hsv");
  if (img.shape[0] != 3) fail("rgb_to_hsv: need 3 channels");
  const int64_t HW = img.shape[1] * img.shape[2];
  Tensor out(img.shape);
  const float* r = img.ptr();
  const float* g = r + HW;
  const float* b = g + HW;
  float* h = out.ptr();
  float* s = h + HW;
  float* v = s + HW;
  for (int64_t i = 0; i < HW; ++i) {
    const float mx = std::max({r[i], g[i], b[i]});
    const float mn = std::min({r[i], g[i], b[i]});
    const float d = mx - mn;
    v[i] = mx;
    s[i] = mx > 0.0f ? d / mx : 0.0f;
    float hue = 0.0f;
    if (d > 0.0f) {
      if (mx == r[i])
        hue = (g[i] - b[i]) / d;
      else if (mx == g[i])
        hue = (b[i] - r[i]) / d + 2.0f;
      else
        hue = (r[i] - g[i]) / d + 4.0f;
      hue /= 6.0f;
      if (hue < 0.0f) hue += 1.0f;
    }
    h[i] = hue;
  }
  return out;
}

Tensor hsv_to_rgb(const Tensor& img) {
  check_chw(img, "hsv_to_rgb");
  if (img.shape[0] != 3) fail("hsv_to_rgb: need 3 channels");
  const int64_t HW = img.shape[1] * img.shape[2];
  Tensor out(img.shape);
  const float* h = img.ptr();
  const float* s = h + HW;
  const float* v = s + HW;
  float* r = out.ptr();
  float* g = r + HW;
  float* b = g + HW;
  for (int64_t i = 0; i < HW; ++i) {
    const float hue = (h[i] - std::floor(h[i])) * 6.0f;
    const int sector = std::min(5, static_cast<int>(hue));
    const float f = hue - static_cast<float>(sector);
    const float p = v[i] * (1.0f - s[i]);
    const float q = v[i] * (1.0f - s[i] * f);
    const float t = v[i] * (1.0f - s[i] * (1.0f - f));
    switch (sector) {
      case 0: r[i] = v[i]; g[i] = t; b[i] = p; break;
      case 1: r[i] = q; g[i] = v[i]; b[i] = p; break;
      case 2: r[i] = p; g[i] = v[i]; b[i] = t; break;
      case 3: r[i] = p; g[i] = q; b[i] = v[i]; break;
      case 4: r[i] = t; g[i] = p; b[i] = v[i]; break;
      default: r[i] = v[i]; g[i] = p; b[i] = q; break;
    }
  }
  return out;
}

Tensor crop_image(const Tensor& img, int64_t top, int64_t left, int64_t h, int64_t w) {
  check_chw(img, "crop_image");
  const int64_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > H || left + w > W)
    fail("crop_image: window out of bounds");
  Tensor out({C, h, w});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < h; ++y)
      std::copy(img.ptr() + (c * H + top + y) * W + left,
                img.ptr() + (c * H + top + y) * W + left + w,
                out.ptr() + (c * h + y) * w);
  return out;
}

}  // namespace stylab
