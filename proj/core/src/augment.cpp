#include "stylab/augment.hpp"

#include <algorithm>
#include <cmath>

#include "stylab/imageops.hpp"
#include "stylab/parallel.hpp"

namespace stylab {

SasslViews sassl_views_from_string(const std::string& s) {
  if (s == "none") return SasslViews::none;
  if (s == "left") return SasslViews::left;
  if (s == "right") return SasslViews::right;
  if (s == "both") return SasslViews::both;
  fail("unknown sassl views '" + s + "' (expected none|left|right|both)");
}

std::string to_string(SasslViews v) {
  switch (v) {
    case SasslViews::none: return "none";
    case SasslViews::left: return "left";
    case SasslViews::right: return "right";
    case SasslViews::both: return "both";
  }
  return "none";
}

void AugPolicy::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(std::string("AugPolicy: ") + name + " must lie in [0,1]");
  };
  prob(hflip_p, "hflip_p");
  prob(jitter_p, "jitter_p");
  prob(grayscale_p, "grayscale_p");
  prob(blur_p_left, "blur_p_left");
  prob(blur_p_right, "blur_p_right");
  prob(solarize_p_left, "solarize_p_left");
  prob(solarize_p_right, "solarize_p_right");
  if (!(crop_area_min > 0.0 && crop_area_min <= crop_area_max && crop_area_max <= 1.0))
    fail("AugPolicy: crop area range must satisfy 0 < min <= max <= 1");
  if (!(crop_aspect_min > 0.0 && crop_aspect_min <= crop_aspect_max))
    fail("AugPolicy: crop aspect range must be ordered and positive");
  if (!(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max))
    fail("AugPolicy: blur sigma range must be ordered and positive");
  if (output_size < 1) fail("AugPolicy: output_size must be positive");
  sassl.validate();
}

// ---------------------------------------------------------------------------
// Individual transforms
// ---------------------------------------------------------------------------

Tensor random_resized_crop(const Tensor& image, const AugPolicy& policy, RngStream rng) {
  if (image.rank() != 3) fail("random_resized_crop: need [C,H,W], got " + shape_str(image.shape));
  const int64_t H = image.shape[1], W = image.shape[2];
  if (H < 1 || W < 1) fail("random_resized_crop: empty image");
  RngStream s = rng.sub("crop");
  const double area = static_cast<double>(H) * static_cast<double>(W);
  const double log_lo = std::log(policy.crop_aspect_min);
  const double log_hi = std::log(policy.crop_aspect_max);

  int64_t top = 0, left = 0, ch = H, cw = W;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double frac = s.next_uniform(policy.crop_area_min, policy.crop_area_max);
    const double ratio = std::exp(s.next_uniform(log_lo, log_hi));
    const double target = frac * area;
    const int64_t w = static_cast<int64_t>(std::lround(std::sqrt(target * ratio)));
    const int64_t h = static_cast<int64_t>(std::lround(std::sqrt(target / ratio)));
    if (w >= 1 && h >= 1 && w <= W && h <= H) {
      top = s.next_index(H - h + 1);
      left = s.next_index(W - w + 1);
      ch = h;
      cw = w;
      found = true;
    }
  }
  if (!found) {
    // Largest in-range-aspect rectangle, centered.
    const double in_ratio = static_cast<double>(W) / static_cast<double>(H);
    if (in_ratio < policy.crop_aspect_min) {
      cw = W;
      ch = std::min<int64_t>(H, std::lround(W / policy.crop_aspect_min));
    } else if (in_ratio > policy.crop_aspect_max) {
      ch = H;
      cw = std::min<int64_t>(W, std::lround(H * policy.crop_aspect_max));
    } else {
      ch = H;
      cw = W;
    }
    ch = std::max<int64_t>(1, ch);
    cw = std::max<int64_t>(1, cw);
    top = (H - ch) / 2;
    left = (W - cw) / 2;
  }
  Tensor cropped = crop_image(image, top, left, ch, cw);
  return resize_image(cropped, policy.output_size, policy.output_size);
}

Tensor hflip(const Tensor& image, double p, RngStream rng) {
  if (image.rank() != 3) fail("hflip: need [C,H,W], got " + shape_str(image.shape));
  if (!rng.sub("flip").next_bernoulli(p)) return image;
  const int64_t C = image.shape[0], H = image.shape[1], W = image.shape[2];
  Tensor out(image.shape);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y) {
      const float* src = image.ptr() + (c * H + y) * W;
      float* dst = out.ptr() + (c * H + y) * W;
      for (int64_t x = 0; x < W; ++x) dst[x] = src[W - 1 - x];
    }
  return out;
}

Tensor adjust_brightness(const Tensor& image, double factor) {
  Tensor out(image.shape);
  for (int64_t i = 0; i < image.numel(); ++i)
    out[i] = static_cast<float>(image[i] * factor);
  clamp01_inplace(out);
  return out;
}

Tensor adjust_contrast(const Tensor& image, double factor) {
  Tensor l = luma(image);
  double mean = 0;
  for (float v : l.data) mean += v;
  mean /= static_cast<double>(l.numel());
  Tensor out(image.shape);
  for (int64_t i = 0; i < image.numel(); ++i)
    out[i] = static_cast<float>((image[i] - mean) * factor + mean);
  clamp01_inplace(out);
  return out;
}

Tensor adjust_saturation(const Tensor& image, double factor) {
  Tensor l = luma(image);
  const int64_t HW = l.numel();
  Tensor out(image.shape);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < HW; ++i) {
      const double g = l[i];
      out[c * HW + i] = static_cast<float>((image[c * HW + i] - g) * factor + g);
    }
  clamp01_inplace(out);
  return out;
}

Tensor adjust_hue(const Tensor& image, double delta_turns) {
  Tensor hsv = rgb_to_hsv(image);
  const int64_t HW = image.shape[1] * image.shape[2];
  for (int64_t i = 0; i < HW; ++i) {
    double h = hsv[i] + delta_turns;
    hsv[i] = static_cast<float>(h - std::floor(h));
  }
  Tensor out = hsv_to_rgb(hsv);
  clamp01_inplace(out);
  return out;
}

Tensor color_jitter(const Tensor& image, const AugPolicy& policy, RngStream rng) {
  if (image.rank() != 3 || image.shape[0] != 3)
    fail("color_jitter: need a 3-channel image, got " + shape_str(image.shape));
  RngStream s = rng.sub("jitter");
  if (!s.next_bernoulli(policy.jitter_p)) return image;

  // Draw all factors first so the draw layout does not depend on the order.
  const double fb = 1.0 + s.next_uniform(-policy.jitter_brightness, policy.jitter_brightness);
  const double fc = 1.0 + s.next_uniform(-policy.jitter_contrast, policy.jitter_contrast);
  const double fs = 1.0 + s.next_uniform(-policy.jitter_saturation, policy.jitter_saturation);
  const double dh = 0.5 * s.next_uniform(-policy.jitter_hue, policy.jitter_hue);

  int order[4] = {0, 1, 2, 3};
  for (int i = 3; i > 0; --i) {
    const int j = static_cast<int>(s.next_index(i + 1));
    std::swap(order[i], order[j]);
  }

  Tensor out = image;
  for (int op : order) {
    switch (op) {
      case 0: out = adjust_brightness(out, fb); break;
      case 1: out = adjust_contrast(out, fc); break;
      case 2: out = adjust_saturation(out, fs); break;
      default: out = adjust_hue(out, dh); break;
    }
  }
  return out;
}

Tensor grayscale(const Tensor& image, double p, RngStream rng) {
  if (image.rank() != 3 || image.shape[0] != 3)
    fail("grayscale: need a 3-channel image, got " + shape_str(image.shape));
  if (!rng.sub("gray").next_bernoulli(p)) return image;
  Tensor l = luma(image);
  Tensor out(image.shape);
  const int64_t HW = l.numel();
  for (int64_t c = 0; c < 3; ++c)
    std::copy(l.ptr(), l.ptr() + HW, out.ptr() + c * HW);
  return out;
}

Tensor gaussian_blur(const Tensor& image, const AugPolicy& policy, View view, RngStream rng) {
  if (image.rank() != 3) fail("gaussian_blur: need [C,H,W], got " + shape_str(image.shape));
  RngStream s = rng.sub("blur");
  const double p = view == View::left ? policy.blur_p_left : policy.blur_p_right;
  if (!s.next_bernoulli(p)) return image;
  const double sigma = s.next_uniform(policy.blur_sigma_min, policy.blur_sigma_max);
  const int64_t radius = static_cast<int64_t>(std::ceil(2.0 * sigma));

  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double norm = 0;
  for (int64_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = w;
    norm += w;
  }
  for (auto& w : kernel) w /= norm;

  const int64_t C = image.shape[0], H = image.shape[1], W = image.shape[2];
  Tensor tmp(image.shape);
  Tensor out(image.shape);
  for (int64_t c = 0; c < C; ++c) {
    const float* src = image.ptr() + c * H * W;
    float* mid = tmp.ptr() + c * H * W;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double acc = 0;
        for (int64_t k = -radius; k <= radius; ++k) {
          const int64_t xx = std::clamp<int64_t>(x + k, 0, W - 1);
          acc += kernel[static_cast<size_t>(k + radius)] * src[y * W + xx];
        }
        mid[y * W + x] = static_cast<float>(acc);
      }
    float* dst = out.ptr() + c * H * W;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double acc = 0;
        for (int64_t k = -radius; k <= radius; ++k) {
          const int64_t yy = std::clamp<int64_t>(y + k, 0, H - 1);
          acc += kernel[static_cast<size_t>(k + radius)] * mid[yy * W + x];
        }
        dst[y * W + x] = static_cast<float>(acc);
      }
  }
  return out;
}

Tensor solarize(const Tensor& image, const AugPolicy& policy, View view, RngStream rng) {
  const double p = view == View::left ? policy.solarize_p_left : policy.solarize_p_right;
  if (!rng.sub("solarize").next_bernoulli(p)) return image;
  Tensor out(image.shape);
  const float thr = static_cast<float>(policy.solarize_threshold);
  for (int64_t i = 0; i < image.numel(); ++i)
    out[i] = image[i] > thr ? 1.0f - image[i] : image[i];
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

Tensor augment_view(StyleTransfer* engine, const Tensor& image, const AugPolicy& policy,
                    View view, int64_t sample_index, RngStream rng, const StyleRef* style,
                    std::vector<Tensor>* trace) {
  policy.validate();
  RngStream vs = rng.sub(static_cast<uint64_t>(sample_index)).sub(static_cast<uint64_t>(view));
  auto record = [&trace](const Tensor& t) {
    if (trace) trace->push_back(t);
  };

  Tensor x = random_resized_crop(image, policy, vs);
  record(x);
  if (policy.stylized(view)) {
    if (!engine || !style) fail("augment_view: stylized view without engine or style reference");
    x = style_augment(*engine, x, *style, policy.sassl, vs);
    record(x);
  }
  x = hflip(x, policy.hflip_p, vs);
  record(x);
  x = color_jitter(x, policy, vs);
  record(x);
  x = grayscale(x, policy.grayscale_p, vs);
  record(x);
  x = gaussian_blur(x, policy, view, vs);
  record(x);
  x = solarize(x, policy, view, vs);
  record(x);
  return x;
}

namespace {

// Per-sample style references for one view. Raw batch images serve as the
// in-batch style references.
std::vector<StyleRef> resolve_styles(StyleTransfer* engine, const Tensor& batch,
                                     const AugPolicy& policy, const StyleContext& ctx,
                                     RngStream rng, View view) {
  const int64_t B = batch.shape[0];
  std::vector<StyleRef> refs(static_cast<size_t>(B));
  if (!policy.stylized(view)) return refs;

  switch (policy.sassl.style_source) {
    case StyleSource::external_bank: {
      if (!ctx.bank) fail("make_views: external_bank style source requires a bank");
      for (int64_t b = 0; b < B; ++b) {
        RngStream pick = rng.sub(static_cast<uint64_t>(b))
                             .sub(static_cast<uint64_t>(view))
                             .sub("style.pick");
        refs[static_cast<size_t>(b)] = StyleRef::from_embedding(
            ctx.bank->row(static_cast<uint64_t>(pick.next_index(static_cast<int64_t>(ctx.bank->count)))));
      }
      break;
    }
    case StyleSource::in_batch: {
      if (!engine) fail("make_views: in_batch style source requires the style engine");
      const std::vector<int64_t> pairing = inbatch_pairing(B, ctx.pairing_offset);
      const int64_t per = batch.numel() / B;
      std::vector<int64_t> img_shape(batch.shape.begin() + 1, batch.shape.end());
      std::vector<Tensor> codes(static_cast<size_t>(B));
      for (int64_t b = 0; b < B; ++b) {
        Tensor img(img_shape);
        std::copy(batch.ptr() + b * per, batch.ptr() + (b + 1) * per, img.ptr());
        codes[static_cast<size_t>(b)] = engine->extractor.extract(img);
      }
      for (int64_t b = 0; b < B; ++b)
        refs[static_cast<size_t>(b)] =
            StyleRef::from_embedding(codes[static_cast<size_t>(pairing[static_cast<size_t>(b)])]);
      break;
    }
    case StyleSource::content_self:
      for (auto& r : refs) r = StyleRef::content_self_ref();
      break;
    case StyleSource::gaussian_noise: {
      if (!ctx.bank) fail("make_views: gaussian_noise style source requires a bank");
      auto [mu, sd] = noise_style_params(*ctx.bank);
      for (auto& r : refs) r = StyleRef::noise(mu, sd);
      break;
    }
  }
  return refs;
}

}  // namespace

std::pair<Tensor, Tensor> make_views(StyleTransfer* engine, const Tensor& batch,
                                     const AugPolicy& policy, const StyleContext& ctx,
                                     RngStream rng, int workers) {
  if (batch.rank() != 4) fail("make_views: need [B,C,H,W], got " + shape_str(batch.shape));
  const int64_t B = batch.shape[0];
  if (B < 1) fail("make_views: empty batch");
  policy.validate();

  const std::vector<StyleRef> left_styles = resolve_styles(engine, batch, policy, ctx, rng, View::left);
  const std::vector<StyleRef> right_styles =
      resolve_styles(engine, batch, policy, ctx, rng, View::right);

  const int64_t C = batch.shape[1];
  const int64_t S = policy.output_size;
  const int64_t per_in = batch.numel() / B;
  std::vector<int64_t> img_shape(batch.shape.begin() + 1, batch.shape.end());
  Tensor left({B, C, S, S});
  Tensor right({B, C, S, S});
  const int64_t per_out = C * S * S;

  parallel_for(B, workers, [&](int64_t b) {
    Tensor img(img_shape);
    std::copy(batch.ptr() + b * per_in, batch.ptr() + (b + 1) * per_in, img.ptr());
    const StyleRef* ls = policy.stylized(View::left) ? &left_styles[static_cast<size_t>(b)] : nullptr;
    const StyleRef* rs = policy.stylized(View::right) ? &right_styles[static_cast<size_t>(b)] : nullptr;
    Tensor l = augment_view(engine, img, policy, View::left, b, rng, ls);
    Tensor r = augment_view(engine, img, policy, View::right, b, rng, rs);
    std::copy(l.ptr(), l.ptr() + per_out, left.ptr() + b * per_out);
    std::copy(r.ptr(), r.ptr() + per_out, right.ptr() + b * per_out);
  });
  return {std::move(left), std::move(right)};
}

}  // namespace stylab
