#pragma once

#include "psl/rng.hpp"
#include "psl/tensor.hpp"

namespace psl {

struct Sample;

enum class ResizeMode { bilinear, nearest };

/// Edge-preserving smoothing: per pixel, a Gaussian-in-space times
/// Gaussian-in-intensity weighted mean over a diameter window, applied per
/// channel with replicate borders and per-pixel weight normalization.
Tensor bilateral_filter(const Tensor& img, int diameter = 5, double sigma_color = 0.1,
                        double sigma_space = 2.0);

enum class MorphKind { dilate, erode };

/// Windowed max (dilate) / min (erode) filter with a 3x3 square structuring
/// element, replicate borders, applied `iterations` times in sequence.
Tensor morph(const Tensor& img, MorphKind kind, int iterations = 1);

/// Resize a CxHxW image (bilinear, half-pixel-centered) or an HxW class mask
/// (nearest, so no labels are invented). Rank-2 inputs stay rank-2.
Tensor resize(const Tensor& img, int out_h, int out_w, ResizeMode mode);

struct AugmentConfig {
    bool crop = true;
    double crop_min_scale = 0.8;
    bool hflip = true;
    bool vflip = true;
    bool shift = true;
    double shift_frac = 0.1;
    bool rotate = true;
    double rotate_deg = 15.0;
    bool scale = true;
    double scale_lo = 0.9;
    double scale_hi = 1.1;
    bool brightness_contrast = true;
    double brightness = 0.2;
    double contrast = 0.2;
    double prob = 0.5;  // per-transform application probability
};

/// Apply the enabled transforms in a fixed order, each with probability
/// `prob`. A mask, when present, receives the identical geometric transform
/// with nearest interpolation; labels pass through unchanged. Deterministic
/// given the rng state.
Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng);

/// The fixed segmentation image pipeline: bilateral filter, then two
/// dilation iterations, then one erosion, in that order.
Tensor segmentation_image_pipeline(const Tensor& img);

/// HxW class-index mask -> n_classes x H x W indicator channels.
Tensor one_hot(const Tensor& mask, int n_classes);

/// Inverse of one_hot: per-pixel channel argmax (ties -> lowest class index)
/// of a CxHxW or NxCxHxW tensor, flattened row-major.
std::vector<int> argmax_channels(const Tensor& probs);

}  // namespace psl
