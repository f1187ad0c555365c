#include "psl/losses.hpp"

#include <stdexcept>

#include "psl/ops.hpp"

namespace psl {

namespace {
constexpr double kProbClamp = 1e-12;
}

Tensor bce(const Tensor& pred_prob, const Tensor& target) {
    if (pred_prob.shape() != target.shape()) {
        throw std::invalid_argument("bce: prediction and target shapes differ, " +
                                    shape_str(pred_prob.shape()) + " vs " + shape_str(target.shape()));
    }
    Tensor p = clamp(pred_prob, kProbClamp, 1.0 - kProbClamp);
    Tensor pos = mul(target, log(p));
    Tensor negt = mul(rsub(1.0, target), log(rsub(1.0, p)));
    return mean(neg(add(pos, negt)));
}

Tensor dice_loss(const Tensor& pred_prob, const Tensor& target_onehot, double smooth) {
    if (pred_prob.shape() != target_onehot.shape()) {
        throw std::invalid_argument("dice_loss: prediction and target shapes differ, " +
                                    shape_str(pred_prob.shape()) + " vs " + shape_str(target_onehot.shape()));
    }
    if (pred_prob.rank() != 4) {
        throw std::invalid_argument("dice_loss: expected NCHW tensors");
    }
    Tensor intersection = sum_channels(mul(pred_prob, target_onehot));  // [C]
    Tensor denom = add(sum_channels(pred_prob), sum_channels(target_onehot));
    Tensor dice = div(add(mul(intersection, 2.0), smooth), add(denom, smooth));
    return rsub(1.0, mean(dice));
}

Tensor combined_seg_loss(const Tensor& pred_logits, const Tensor& target_onehot,
                         const LossWeights& weights) {
    if (weights.w_bce < 0.0 || weights.w_dice < 0.0 || weights.w_bce + weights.w_dice <= 0.0) {
        throw std::invalid_argument("combined_seg_loss: weights must be nonnegative and not both zero");
    }
    Tensor bce_term = bce(sigmoid(pred_logits), target_onehot);
    Tensor dice_term = dice_loss(softmax_channels(pred_logits), target_onehot, weights.dice_smooth);
    return add(mul(bce_term, weights.w_bce), mul(dice_term, weights.w_dice));
}

Tensor semi_supervised_loss(const Tensor& sup_loss, const Tensor& pseudo_loss, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("semi_supervised_loss: alpha must be >= 0");
    return add(sup_loss, mul(pseudo_loss, alpha));
}

}  // namespace psl
