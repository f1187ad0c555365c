#pragma once

#include "psl/tensor.hpp"

namespace psl {

// Elementwise. Binary ops require equal shapes; scalar variants are provided
// where the engine needs them. Every op installs the standard derivative as
// its backward rule.
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double s);
Tensor rsub(double s, const Tensor& a);  // s - a
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double s);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log. Inputs must be positive; clamp first where saturation is
/// possible.
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// NCHW -> [C]: per-channel sum over batch and space.
Tensor sum_channels(const Tensor& a);
/// NCHW -> [N, C]: per-channel spatial mean.
Tensor global_avg_pool(const Tensor& a);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// [N, M] + [M] with the vector added to every row.
Tensor add_rowvec(const Tensor& a, const Tensor& v);

// Spatial ops on NCHW tensors.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int pad);
/// 2x2 max pool, stride 2. H and W must be even. Gradient goes to the argmax
/// position; ties break to the first element in row-major scan order.
Tensor maxpool2d(const Tensor& input);
/// Nearest-neighbor upsampling by pixel replication.
Tensor upsample_nearest(const Tensor& input, int factor = 2);
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Per-pixel softmax across the channel dimension, stabilized by
/// max-subtraction.
Tensor softmax_channels(const Tensor& input);

}  // namespace psl
