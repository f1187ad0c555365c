#pragma once

#include "psl/tensor.hpp"

namespace psl {

struct LossWeights {
    double w_bce = 0.5;
    double w_dice = 0.5;
    double dice_smooth = 1e-6;
};

/// Mean binary cross-entropy of probabilities against {0,1} targets.
/// Predictions are clamped to [1e-12, 1-1e-12] so saturated probabilities
/// stay finite under the log.
Tensor bce(const Tensor& pred_prob, const Tensor& target);

/// 1 - mean over classes of (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth)
/// on NCHW probabilities against one-hot targets.
Tensor dice_loss(const Tensor& pred_prob, const Tensor& target_onehot, double smooth = 1e-6);

/// w_bce * BCE(sigmoid(logits), target) + w_dice * Dice(softmax(logits), target).
Tensor combined_seg_loss(const Tensor& pred_logits, const Tensor& target_onehot,
                         const LossWeights& weights);

/// sup_loss + alpha * pseudo_loss.
Tensor semi_supervised_loss(const Tensor& sup_loss, const Tensor& pseudo_loss, double alpha);

}  // namespace psl
