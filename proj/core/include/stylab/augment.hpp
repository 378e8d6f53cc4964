#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "stylab/nst.hpp"
#include "stylab/rng.hpp"
#include "stylab/stylebank.hpp"

namespace stylab {

enum class View : int { left = 0, right = 1 };

enum class SasslViews { none, left, right, both };

SasslViews sassl_views_from_string(const std::string& s);
std::string to_string(SasslViews v);

/// Two-view augmentation policy. Per-view asymmetry: blur is near-certain on
/// the left view and rare on the right, solarization hits only the right
/// view, and stylization defaults to the left view only.
struct AugPolicy {
  double crop_area_min = 0.08, crop_area_max = 1.0;
  double crop_aspect_min = 3.0 / 4.0, crop_aspect_max = 4.0 / 3.0;  // log-uniform
  int output_size = 32;

  double hflip_p = 0.5;

  double jitter_p = 0.8;
  double jitter_brightness = 0.4;
  double jitter_contrast = 0.4;
  double jitter_saturation = 0.4;
  double jitter_hue = 0.1;

  double grayscale_p = 0.2;

  double blur_p_left = 1.0, blur_p_right = 0.1;
  double blur_sigma_min = 0.1, blur_sigma_max = 2.0;

  double solarize_p_left = 0.0, solarize_p_right = 0.2;
  double solarize_threshold = 0.5;

  SasslParams sassl;
  SasslViews sassl_views = SasslViews::left;

  void validate() const;
  bool stylized(View v) const {
    if (sassl_views == SasslViews::both) return true;
    if (sassl_views == SasslViews::left) return v == View::left;
    if (sassl_views == SasslViews::right) return v == View::right;
    return false;
  }
};

// Each transform draws only from its own named substream of the per-(sample,
// view) stream it is handed, so adding or reconfiguring one transform never
// disturbs the draws of another.

/// Sample an area fraction and log-uniform aspect ratio (up to 10 attempts,
/// then a centered fallback crop of the largest region with an in-range
/// aspect), crop, and resize to output_size. Substream "crop".
Tensor random_resized_crop(const Tensor& image, const AugPolicy& policy, RngStream rng);

/// Mirror columns with probability p. Substream "flip".
Tensor hflip(const Tensor& image, double p, RngStream rng);

/// Brightness/contrast/saturation/hue in a random order, strengths sampled in
/// +-strength (hue shift in +-hue*0.5 turns), clamped back to [0,1].
/// Substream "jitter".
Tensor color_jitter(const Tensor& image, const AugPolicy& policy, RngStream rng);

/// Replace all channels by luma with probability p. Substream "gray".
Tensor grayscale(const Tensor& image, double p, RngStream rng);

/// Separable Gaussian with sigma ~ U(sigma_min, sigma_max), radius
/// ceil(2 sigma), edge clamped; probability depends on the view. Substream
/// "blur".
Tensor gaussian_blur(const Tensor& image, const AugPolicy& policy, View view, RngStream rng);

/// Invert pixels above the threshold; probability depends on the view.
/// Substream "solarize".
Tensor solarize(const Tensor& image, const AugPolicy& policy, View view, RngStream rng);

// Deterministic sub-transforms behind color_jitter, exposed for direct use.
Tensor adjust_brightness(const Tensor& image, double factor);
Tensor adjust_contrast(const Tensor& image, double factor);
Tensor adjust_saturation(const Tensor& image, double factor);
Tensor adjust_hue(const Tensor& image, double delta_turns);

/// One full view: crop, stylization (iff this view is configured for it and a
/// style reference is supplied), flip, jitter, grayscale, blur, solarize.
/// `trace`, when given, receives the intermediate image after every stage.
Tensor augment_view(StyleTransfer* engine, const Tensor& image, const AugPolicy& policy,
                    View view, int64_t sample_index, RngStream rng,
                    const StyleRef* style = nullptr, std::vector<Tensor>* trace = nullptr);

/// How make_views resolves per-sample style references.
struct StyleContext {
  const StyleBank* bank = nullptr;       // external_bank, gaussian_noise
  int64_t pairing_offset = kDefaultPairingOffset;  // in_batch
};

/// Two independently augmented views of every sample in a [B,C,H,W] batch.
std::pair<Tensor, Tensor> make_views(StyleTransfer* engine, const Tensor& batch,
                                     const AugPolicy& policy, const StyleContext& ctx,
                                     RngStream rng, int workers = 1);

}  // namespace stylab
