#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stylab/layers.hpp"
#include "stylab/rng.hpp"

namespace stylab {

/// Length-D style code produced by the extractor; shape [D].
template <class S>
using StyleEmbeddingT = TensorT<S>;
using StyleEmbedding = Tensor;

inline constexpr int kDefaultEmbedDim = 100;

/// Where style codes come from during augmentation.
enum class StyleSource { external_bank, in_batch, content_self, gaussian_noise };

StyleSource style_source_from_string(const std::string& s);
std::string to_string(StyleSource s);

struct SasslParams {
  double p = 0.8;
  double alpha_min = 0.1, alpha_max = 0.3;
  double beta_min = 0.1, beta_max = 0.3;
  StyleSource style_source = StyleSource::external_bank;

  void validate() const;
};

/// Resolved per-sample style reference.
struct StyleRef {
  enum class Kind { embedding, content_self, gaussian_noise };
  Kind kind = Kind::content_self;
  Tensor embedding;    // kind == embedding
  Tensor noise_mean;   // kind == gaussian_noise
  Tensor noise_std;

  static StyleRef from_embedding(Tensor z) {
    StyleRef r;
    r.kind = Kind::embedding;
    r.embedding = std::move(z);
    return r;
  }
  static StyleRef content_self_ref() { return StyleRef{}; }
  static StyleRef noise(Tensor mean, Tensor stddev) {
    StyleRef r;
    r.kind = Kind::gaussian_noise;
    r.noise_mean = std::move(mean);
    r.noise_std = std::move(stddev);
    return r;
  }
};

/// Small convolutional network mapping an image to its style code: four
/// stride-2 conv+relu stages, global average pooling, one linear head.
template <class S>
struct StyleExtractorT {
  Conv2dT<S> c1, c2, c3, c4;
  LinearT<S> head;
  int embed_dim = kDefaultEmbedDim;
  int min_input = 8;

  static StyleExtractorT seeded(uint64_t seed, int embed_dim = kDefaultEmbedDim,
                                int base_width = 16, int image_channels = 3);

  VarT<S> forward(TapeT<S>& t, VarT<S> image);  // [C,H,W] -> [D]
  StyleEmbeddingT<S> extract(const TensorT<S>& image);

  void visit(const std::string& prefix, const ParamVisitor<S>& fn);
  template <class S2>
  StyleExtractorT<S2> cast() const;
};

/// Scale/offset predictors for one normalized layer: two linear maps from the
/// style code to per-channel values. The scale passes through a shifted
/// softplus so it stays positive.
template <class S>
struct CinLayerT {
  LinearT<S> scale_head;
  LinearT<S> shift_head;
  int channels = 0;

  VarT<S> predict_scale(TapeT<S>& t, VarT<S> z);  // [D] -> [C], positive
  VarT<S> predict_shift(TapeT<S>& t, VarT<S> z);  // [D] -> [C]
};

/// Image-to-image stylization network: two downsampling convolutions, five
/// residual blocks, three upsampling blocks (resize + conv), and an output
/// projection clamped to [0,1]. Conditional instance normalization is applied
/// after each layer in `styled_layers`; the thirteen stylable layers are the
/// ten residual convolutions (ids 0..9) followed by the three upsampling
/// convolutions (ids 10..12). With no styled layers the network is a plain
/// autoencoder of its input.
template <class S>
struct StylizationNetworkT {
  static constexpr int kStyledLayerCount = 13;

  Conv2dT<S> down1, down2;
  std::array<Conv2dT<S>, 10> res;  // res[2i], res[2i+1] form block i
  std::array<Conv2dT<S>, 3> up;
  Conv2dT<S> out;
  std::vector<CinLayerT<S>> cin;   // one per stylable layer
  std::vector<int> styled_layers;  // subset of 0..12
  int embed_dim = kDefaultEmbedDim;

  static StylizationNetworkT seeded(uint64_t seed, int embed_dim = kDefaultEmbedDim,
                                    int base_width = 16, int image_channels = 3,
                                    int styled_prefix = kStyledLayerCount);

  void set_styled_prefix(int n);

  /// Conditional instance normalization at one stylable layer:
  /// per channel, scale(z) * (x - mean) / (std + eps) + shift(z).
  VarT<S> cin_apply(TapeT<S>& t, VarT<S> x, VarT<S> z, int layer);

  VarT<S> forward(TapeT<S>& t, VarT<S> image, VarT<S> z);  // [C,H,W] -> [C,H,W]
  TensorT<S> run(const TensorT<S>& image, const StyleEmbeddingT<S>& z);

  void visit(const std::string& prefix, const ParamVisitor<S>& fn);
  template <class S2>
  StylizationNetworkT<S2> cast() const;
};

/// Extractor + stylizer bundle used by the augmentation pipeline.
template <class S>
struct StyleTransferT {
  StyleExtractorT<S> extractor;
  StylizationNetworkT<S> network;

  static StyleTransferT seeded(uint64_t seed, int embed_dim = kDefaultEmbedDim,
                               int styled_prefix = StylizationNetworkT<S>::kStyledLayerCount);
  void visit(const ParamVisitor<S>& fn);
  template <class S2>
  StyleTransferT<S2> cast() const;
};

using StyleExtractor = StyleExtractorT<float>;
using StylizationNetwork = StylizationNetworkT<float>;
using StyleTransfer = StyleTransferT<float>;

inline constexpr double kCinEps = 1e-5;

// --- module operations ---

template <class S>
StyleEmbeddingT<S> extract_style(StyleExtractorT<S>& extractor, const TensorT<S>& image);

/// Convex combination of two style codes: (1-alpha)*a + alpha*b.
Tensor blend_embeddings(const Tensor& content_code, const Tensor& style_code, double alpha);

/// One style code drawn from the diagonal Gaussian (mean, stddev).
Tensor draw_noise_style(const Tensor& mean, const Tensor& stddev, RngStream rng);

/// Elementwise convex combination of two same-shape images.
Tensor interpolate_pixels(const Tensor& content, const Tensor& stylized, double beta);

Tensor run_stylizer(StylizationNetwork& net, const Tensor& image, const StyleEmbedding& z);

/// Full augmentation block: with probability p (substream "style.apply"),
/// blend style codes with alpha ~ U(alpha_min, alpha_max) ("style.alpha"),
/// stylize, and interpolate pixels with beta ~ U(beta_min, beta_max)
/// ("style.beta"). Skipped samples are returned untouched without evaluating
/// the networks. `rng` is the per-(sample, view) stream.
Tensor style_augment(StyleTransfer& engine, const Tensor& content, const StyleRef& style,
                     const SasslParams& params, RngStream rng);

/// Overload that extracts the style code from a style image first.
Tensor style_augment(StyleTransfer& engine, const Tensor& content, const Tensor& style_image,
                     const SasslParams& params, RngStream rng);

/// Per-sample independent application over a [B,C,H,W] batch; sample b of
/// view `view_index` draws from rng.sub(b).sub(view_index).
Tensor style_augment_batch(StyleTransfer& engine, const Tensor& batch,
                           const std::vector<StyleRef>& styles, const SasslParams& params,
                           RngStream rng, uint64_t view_index = 0);

/// Differentiable path with the stochastic draws fixed: used to verify
/// gradients of the full augmentation block.
template <class S>
VarT<S> style_augment_graph(StyleTransferT<S>& engine, TapeT<S>& t, VarT<S> content,
                            VarT<S> style_code, double alpha, double beta);

}  // namespace stylab
