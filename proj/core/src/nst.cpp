#include "stylab/nst.hpp"

#include <cmath>

namespace stylab {

StyleSource style_source_from_string(const std::string& s) {
  if (s == "external_bank") return StyleSource::external_bank;
  if (s == "in_batch") return StyleSource::in_batch;
  if (s == "content_self") return StyleSource::content_self;
  if (s == "gaussian_noise") return StyleSource::gaussian_noise;
  fail("unknown style_source '" + s +
       "' (expected external_bank|in_batch|content_self|gaussian_noise)");
}

std::string to_string(StyleSource s) {
  switch (s) {
    case StyleSource::external_bank: return "external_bank";
    case StyleSource::in_batch: return "in_batch";
    case StyleSource::content_self: return "content_self";
    case StyleSource::gaussian_noise: return "gaussian_noise";
  }
  return "external_bank";
}

void SasslParams::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) fail("SasslParams: p must lie in [0,1]");
  if (!(0.0 <= alpha_min && alpha_min <= alpha_max && alpha_max <= 1.0))
    fail("SasslParams: alpha range must satisfy 0 <= min <= max <= 1");
  if (!(0.0 <= beta_min && beta_min <= beta_max && beta_max <= 1.0))
    fail("SasslParams: beta range must satisfy 0 <= min <= max <= 1");
}

// ---------------------------------------------------------------------------
// StyleExtractor
// ---------------------------------------------------------------------------

template <class S>
StyleExtractorT<S> StyleExtractorT<S>::seeded(uint64_t seed, int embed_dim, int base_width,
                                              int image_channels) {
  RngStream rng = RngStream(seed).sub("style_extractor");
  StyleExtractorT<S> e;
  e.embed_dim = embed_dim;
  e.c1 = Conv2dT<S>::seeded(image_channels, base_width, 3, 2, 1, rng.sub("c1"));
  e.c2 = Conv2dT<S>::seeded(base_width, 2 * base_width, 3, 2, 1, rng.sub("c2"));
  e.c3 = Conv2dT<S>::seeded(2 * base_width, 4 * base_width, 3, 2, 1, rng.sub("c3"));
  e.c4 = Conv2dT<S>::seeded(4 * base_width, 4 * base_width, 3, 2, 1, rng.sub("c4"));
  e.head = LinearT<S>::seeded(4 * base_width, embed_dim, rng.sub("head"));
  return e;
}

template <class S>
VarT<S> StyleExtractorT<S>::forward(TapeT<S>& t, VarT<S> image) {
  const auto& shp = image.shape();
  if (shp.size() != 3) fail("extract_style: need [C,H,W], got " + shape_str(shp));
  if (shp[1] < min_input || shp[2] < min_input)
    fail("extract_style: image " + shape_str(shp) + " smaller than minimum input " +
         std::to_string(min_input));
  VarT<S> x = reshape(image, {1, shp[0], shp[1], shp[2]});
  x = relu(c1.forward(t, x));
  x = relu(c2.forward(t, x));
  x = relu(c3.forward(t, x));
  x = relu(c4.forward(t, x));
  x = global_avg_pool(x);          // [1, W4]
  x = head.forward(t, x);          // [1, D]
  return reshape(x, {static_cast<int64_t>(embed_dim)});
}

template <class S>
StyleEmbeddingT<S> StyleExtractorT<S>::extract(const TensorT<S>& image) {
  TapeT<S> t;
  t.set_grad_enabled(false);
  return forward(t, t.constant(image)).value();
}

template <class S>
void StyleExtractorT<S>::visit(const std::string& prefix, const ParamVisitor<S>& fn) {
  c1.visit(prefix + ".c1", fn);
  c2.visit(prefix + ".c2", fn);
  c3.visit(prefix + ".c3", fn);
  c4.visit(prefix + ".c4", fn);
  head.visit(prefix + ".head", fn);
}

template <class S>
template <class S2>
StyleExtractorT<S2> StyleExtractorT<S>::cast() const {
  StyleExtractorT<S2> e;
  e.c1 = c1.template cast<S2>();
  e.c2 = c2.template cast<S2>();
  e.c3 = c3.template cast<S2>();
  e.c4 = c4.template cast<S2>();
  e.head = head.template cast<S2>();
  e.embed_dim = embed_dim;
  e.min_input = min_input;
  return e;
}

// ---------------------------------------------------------------------------
// CIN predictors
// ---------------------------------------------------------------------------

template <class S>
VarT<S> CinLayerT<S>::predict_scale(TapeT<S>& t, VarT<S> z) {
  VarT<S> y = scale_head.forward(t, reshape(z, {1, z.numel()}));
  y = reshape(y, {static_cast<int64_t>(channels)});
  // softplus keeps scales positive; the small shift keeps them off zero
  return scalar_affine(softplus(y), 1.0, 0.01);
}

template <class S>
VarT<S> CinLayerT<S>::predict_shift(TapeT<S>& t, VarT<S> z) {
  VarT<S> y = shift_head.forward(t, reshape(z, {1, z.numel()}));
  return reshape(y, {static_cast<int64_t>(channels)});
}

// ---------------------------------------------------------------------------
// StylizationNetwork
// ---------------------------------------------------------------------------

template <class S>
StylizationNetworkT<S> StylizationNetworkT<S>::seeded(uint64_t seed, int embed_dim,
                                                      int base_width, int image_channels,
                                                      int styled_prefix) {
  RngStream rng = RngStream(seed).sub("stylizer");
  StylizationNetworkT<S> n;
  n.embed_dim = embed_dim;
  const int rw = 2 * base_width;  // residual width
  n.down1 = Conv2dT<S>::seeded(image_channels, base_width, 3, 2, 1, rng.sub("down1"));
  n.down2 = Conv2dT<S>::seeded(base_width, rw, 3, 2, 1, rng.sub("down2"));
  for (int i = 0; i < 10; ++i)
    n.res[i] = Conv2dT<S>::seeded(rw, rw, 3, 1, 1, rng.sub("res").sub(static_cast<uint64_t>(i)));
  n.up[0] = Conv2dT<S>::seeded(rw, base_width, 3, 1, 1, rng.sub("up0"));
  n.up[1] = Conv2dT<S>::seeded(base_width, base_width, 3, 1, 1, rng.sub("up1"));
  n.up[2] = Conv2dT<S>::seeded(base_width, base_width, 3, 1, 1, rng.sub("up2"));
  n.out = Conv2dT<S>::seeded(base_width, image_channels, 3, 1, 1, rng.sub("out"));

  n.cin.resize(kStyledLayerCount);
  for (int l = 0; l < kStyledLayerCount; ++l) {
    const int ch = l < 10 ? rw : base_width;
    RngStream lr = rng.sub("cin").sub(static_cast<uint64_t>(l));
    n.cin[l].scale_head = LinearT<S>::seeded(embed_dim, ch, lr.sub("scale"));
    n.cin[l].shift_head = LinearT<S>::seeded(embed_dim, ch, lr.sub("shift"));
    n.cin[l].channels = ch;
  }
  n.set_styled_prefix(styled_prefix);
  return n;
}

template <class S>
void StylizationNetworkT<S>::set_styled_prefix(int n) {
  if (n < 0 || n > kStyledLayerCount)
    fail("styled prefix must lie in [0," + std::to_string(kStyledLayerCount) + "]");
  styled_layers.clear();
  for (int i = 0; i < n; ++i) styled_layers.push_back(i);
}

template <class S>
VarT<S> StylizationNetworkT<S>::cin_apply(TapeT<S>& t, VarT<S> x, VarT<S> z, int layer) {
  if (layer < 0 || layer >= kStyledLayerCount) fail("cin: layer id out of range");
  CinLayerT<S>& c = cin[static_cast<size_t>(layer)];
  const auto& shp = x.shape();
  if (shp.size() != 3) fail("cin: need [C,H,W], got " + shape_str(shp));
  if (shp[0] != c.channels)
    fail("cin: layer " + std::to_string(layer) + " predicts " + std::to_string(c.channels) +
         " channels but input has " + std::to_string(shp[0]));
  if (z.numel() != embed_dim)
    fail("cin: style code length " + std::to_string(z.numel()) + " != " +
         std::to_string(embed_dim));

  auto [mean, stdev] = instance_stats(x);
  VarT<S> denom = scalar_affine(stdev, 1.0, kCinEps);
  VarT<S> gamma = c.predict_scale(t, z);
  VarT<S> lambda = c.predict_shift(t, z);
  VarT<S> scale = div(gamma, denom);
  VarT<S> shift = sub(lambda, mul(mean, scale));
  return channel_affine(x, scale, shift);
}

namespace {

template <class S>
VarT<S> maybe_cin(StylizationNetworkT<S>& n, TapeT<S>& t, VarT<S> x4, VarT<S> z, int layer) {
  bool styled = false;
  for (int l : n.styled_layers) styled = styled || (l == layer);
  if (!styled) return x4;
  const auto& s = x4.shape();
  VarT<S> x3 = reshape(x4, {s[1], s[2], s[3]});
  x3 = n.cin_apply(t, x3, z, layer);
  return reshape(x3, s);
}

}  // namespace

template <class S>
VarT<S> StylizationNetworkT<S>::forward(TapeT<S>& t, VarT<S> image, VarT<S> z) {
  const auto& shp = image.shape();
  if (shp.size() != 3) fail("run_stylizer: need [C,H,W], got " + shape_str(shp));
  const int64_t H = shp[1], W = shp[2];

  VarT<S> x = reshape(image, {1, shp[0], H, W});
  x = relu(down1.forward(t, x));
  const int64_t H2 = x.shape()[2], W2 = x.shape()[3];
  x = relu(down2.forward(t, x));

  for (int b = 0; b < 5; ++b) {
    VarT<S> skip = x;
    x = res[2 * b].forward(t, x);
    x = maybe_cin(*this, t, x, z, 2 * b);
    x = relu(x);
    x = res[2 * b + 1].forward(t, x);
    x = maybe_cin(*this, t, x, z, 2 * b + 1);
    x = add(skip, x);
  }

  const int64_t up_h[3] = {H2, H, H};
  const int64_t up_w[3] = {W2, W, W};
  for (int u = 0; u < 3; ++u) {
    x = bilinear_resize(x, up_h[u], up_w[u]);
    x = up[u].forward(t, x);
    x = maybe_cin(*this, t, x, z, 10 + u);
    x = relu(x);
  }

  x = out.forward(t, x);
  x = clamp(x, 0.0, 1.0);
  return reshape(x, shp);
}

template <class S>
TensorT<S> StylizationNetworkT<S>::run(const TensorT<S>& image, const StyleEmbeddingT<S>& z) {
  TapeT<S> t;
  t.set_grad_enabled(false);
  return forward(t, t.constant(image), t.constant(z)).value();
}

template <class S>
void StylizationNetworkT<S>::visit(const std::string& prefix, const ParamVisitor<S>& fn) {
  down1.visit(prefix + ".down1", fn);
  down2.visit(prefix + ".down2", fn);
  for (int i = 0; i < 10; ++i) res[i].visit(prefix + ".res" + std::to_string(i), fn);
  for (int i = 0; i < 3; ++i) up[i].visit(prefix + ".up" + std::to_string(i), fn);
  out.visit(prefix + ".out", fn);
  for (int l = 0; l < kStyledLayerCount; ++l) {
    cin[l].scale_head.visit(prefix + ".cin" + std::to_string(l) + ".scale", fn);
    cin[l].shift_head.visit(prefix + ".cin" + std::to_string(l) + ".shift", fn);
  }
}

template <class S>
template <class S2>
StylizationNetworkT<S2> StylizationNetworkT<S>::cast() const {
  StylizationNetworkT<S2> n;
  n.down1 = down1.template cast<S2>();
  n.down2 = down2.template cast<S2>();
  for (int i = 0; i < 10; ++i) n.res[i] = res[i].template cast<S2>();
  for (int i = 0; i < 3; ++i) n.up[i] = up[i].template cast<S2>();
  n.out = out.template cast<S2>();
  n.cin.resize(cin.size());
  for (size_t l = 0; l < cin.size(); ++l) {
    n.cin[l].scale_head = cin[l].scale_head.template cast<S2>();
    n.cin[l].shift_head = cin[l].shift_head.template cast<S2>();
    n.cin[l].channels = cin[l].channels;
  }
  n.styled_layers = styled_layers;
  n.embed_dim = embed_dim;
  return n;
}

// ---------------------------------------------------------------------------
// Engine and operations
// ---------------------------------------------------------------------------

template <class S>
StyleTransferT<S> StyleTransferT<S>::seeded(uint64_t seed, int embed_dim, int styled_prefix) {
  StyleTransferT<S> e;
  e.extractor = StyleExtractorT<S>::seeded(seed, embed_dim);
  e.network = StylizationNetworkT<S>::seeded(seed, embed_dim, 16, 3, styled_prefix);
  return e;
}

template <class S>
void StyleTransferT<S>::visit(const ParamVisitor<S>& fn) {
  extractor.visit("extractor", fn);
  network.visit("stylizer", fn);
}

template <class S>
template <class S2>
StyleTransferT<S2> StyleTransferT<S>::cast() const {
  StyleTransferT<S2> e;
  e.extractor = extractor.template cast<S2>();
  e.network = network.template cast<S2>();
  return e;
}

template <class S>
StyleEmbeddingT<S> extract_style(StyleExtractorT<S>& extractor, const TensorT<S>& image) {
  return extractor.extract(image);
}

Tensor blend_embeddings(const Tensor& content_code, const Tensor& style_code, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("blend_embeddings: alpha must lie in [0,1]");
  if (content_code.shape != style_code.shape)
    fail("blend_embeddings: shape mismatch " + shape_str(content_code.shape) + " vs " +
         shape_str(style_code.shape));
  Tensor out(content_code.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>((1.0 - alpha) * content_code[i] + alpha * style_code[i]);
  return out;
}

Tensor interpolate_pixels(const Tensor& content, const Tensor& stylized, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) fail("interpolate_pixels: beta must lie in [0,1]");
  if (content.shape != stylized.shape)
    fail("interpolate_pixels: shape mismatch " + shape_str(content.shape) + " vs " +
         shape_str(stylized.shape));
  Tensor out(content.shape);
  // accumulate in double so the result stays inside [min,max] of the operands
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>((1.0 - beta) * content[i] + beta * stylized[i]);
  return out;
}

Tensor run_stylizer(StylizationNetwork& net, const Tensor& image, const StyleEmbedding& z) {
  return net.run(image, z);
}

Tensor draw_noise_style(const Tensor& mean, const Tensor& stddev, RngStream rng) {
  if (mean.shape != stddev.shape)
    fail("draw_noise_style: shape mismatch " + shape_str(mean.shape) + " vs " +
         shape_str(stddev.shape));
  Tensor z(mean.shape);
  for (int64_t i = 0; i < z.numel(); ++i)
    z[i] = static_cast<float>(mean[i] + stddev[i] * rng.next_gaussian());
  return z;
}

namespace {

Tensor resolve_style_code(StyleTransfer& engine, const Tensor& content_code,
                          const StyleRef& style, double alpha, RngStream& rng) {
  switch (style.kind) {
    case StyleRef::Kind::embedding:
      return blend_embeddings(content_code, style.embedding, alpha);
    case StyleRef::Kind::content_self:
      return content_code;
    case StyleRef::Kind::gaussian_noise: {
      if (style.noise_mean.shape != style.noise_std.shape ||
          style.noise_mean.numel() != engine.extractor.embed_dim)
        fail("style_augment: noise parameters do not match the embedding length");
      return draw_noise_style(style.noise_mean, style.noise_std, rng.sub("style.noise"));
    }
  }
  fail("style_augment: invalid style reference");
}

}  // namespace

Tensor style_augment(StyleTransfer& engine, const Tensor& content, const StyleRef& style,
                     const SasslParams& params, RngStream rng) {
  params.validate();
  if (!rng.sub("style.apply").next_bernoulli(params.p)) return content;

  const double alpha = rng.sub("style.alpha").next_uniform(params.alpha_min, params.alpha_max);
  const double beta = rng.sub("style.beta").next_uniform(params.beta_min, params.beta_max);

  Tensor content_code;
  if (style.kind != StyleRef::Kind::gaussian_noise)
    content_code = engine.extractor.extract(content);
  Tensor z = resolve_style_code(engine, content_code, style, alpha, rng);
  Tensor stylized = engine.network.run(content, z);
  return interpolate_pixels(content, stylized, beta);
}

Tensor style_augment(StyleTransfer& engine, const Tensor& content, const Tensor& style_image,
                     const SasslParams& params, RngStream rng) {
  return style_augment(engine, content,
                       StyleRef::from_embedding(engine.extractor.extract(style_image)), params,
                       std::move(rng));
}

Tensor style_augment_batch(StyleTransfer& engine, const Tensor& batch,
                           const std::vector<StyleRef>& styles, const SasslParams& params,
                           RngStream rng, uint64_t view_index) {
  if (batch.rank() != 4) fail("style_augment_batch: need [B,C,H,W], got " + shape_str(batch.shape));
  const int64_t B = batch.shape[0];
  if (B < 1) fail("style_augment_batch: empty batch");
  if (static_cast<int64_t>(styles.size()) != B)
    fail("style_augment_batch: got " + std::to_string(styles.size()) + " style refs for batch " +
         std::to_string(B));
  const int64_t per = batch.numel() / B;
  std::vector<int64_t> img_shape(batch.shape.begin() + 1, batch.shape.end());

  Tensor out(batch.shape);
  for (int64_t b = 0; b < B; ++b) {
    Tensor img(img_shape);
    std::copy(batch.ptr() + b * per, batch.ptr() + (b + 1) * per, img.ptr());
    Tensor res = style_augment(engine, img, styles[static_cast<size_t>(b)], params,
                               rng.sub(static_cast<uint64_t>(b)).sub(view_index));
    std::copy(res.ptr(), res.ptr() + per, out.ptr() + b * per);
  }
  return out;
}

template <class S>
VarT<S> style_augment_graph(StyleTransferT<S>& engine, TapeT<S>& t, VarT<S> content,
                            VarT<S> style_code, double alpha, double beta) {
  VarT<S> content_code = engine.extractor.forward(t, content);
  VarT<S> blended = add(scalar_affine(content_code, 1.0 - alpha, 0.0),
                        scalar_affine(style_code, alpha, 0.0));
  VarT<S> stylized = engine.network.forward(t, content, blended);
  return add(scalar_affine(content, 1.0 - beta, 0.0), scalar_affine(stylized, beta, 0.0));
}

// ---------------------------------------------------------------------------
// Instantiations
// ---------------------------------------------------------------------------

template struct StyleExtractorT<float>;
template struct StyleExtractorT<double>;
template struct CinLayerT<float>;
template struct CinLayerT<double>;
template struct StylizationNetworkT<float>;
template struct StylizationNetworkT<double>;
template struct StyleTransferT<float>;
template struct StyleTransferT<double>;

template StyleExtractorT<double> StyleExtractorT<float>::cast<double>() const;
template StylizationNetworkT<double> StylizationNetworkT<float>::cast<double>() const;
template StyleTransferT<double> StyleTransferT<float>::cast<double>() const;

template StyleEmbeddingT<float> extract_style<float>(StyleExtractorT<float>&,
                                                     const TensorT<float>&);
template StyleEmbeddingT<double> extract_style<double>(StyleExtractorT<double>&,
                                                       const TensorT<double>&);
template VarT<float> style_augment_graph<float>(StyleTransferT<float>&, TapeT<float>&,
                                                VarT<float>, VarT<float>, double, double);
template VarT<double> style_augment_graph<double>(StyleTransferT<double>&, TapeT<double>&,
                                                  VarT<double>, VarT<double>, double, double);

}  // namespace stylab
