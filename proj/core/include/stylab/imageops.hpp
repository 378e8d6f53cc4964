#pragma once

#include "stylab/tensor.hpp"

namespace stylab {

// Plain (non-differentiable) helpers on [C,H,W] float images in [0,1].

/// Bilinear resize, half-pixel centers, edge clamped.
Tensor resize_image(const Tensor& img, int64_t out_h, int64_t out_w);

/// 0.299 R + 0.587 G + 0.114 B, shape [H,W].
Tensor luma(const Tensor& img);

void clamp01_inplace(Tensor& img);

Tensor rgb_to_hsv(const Tensor& img);
Tensor hsv_to_rgb(const Tensor& img);

Tensor crop_image(const Tensor& img, int64_t top, int64_t left, int64_t h, int64_t w);

}  // namespace stylab
