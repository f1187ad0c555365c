#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psl/losses.hpp"
#include "psl/ops.hpp"
#include "support/test_util.hpp"

using namespace psl;
using testutil::grad_rel_error;
using testutil::random_tensor;

TEST_CASE("bce hand values") {
    // p = 0.5, t = 1 -> ln 2
    CHECK(bce(Tensor::from_data({1}, {0.5}), Tensor::from_data({1}, {1.0})).item() ==
          doctest::Approx(0.6931471805599453).epsilon(1e-12));

    // perfect (saturated) prediction stays tiny under the clamp
    Tensor t = Tensor::from_data({4}, {1, 0, 1, 0});
    CHECK(bce(t, t).item() <= 1e-11);

    // p = [0.9, 0.1], t = [1, 0] -> -(ln 0.9 + ln 0.9)/2
    CHECK(bce(Tensor::from_data({2}, {0.9, 0.1}), Tensor::from_data({2}, {1.0, 0.0})).item() ==
          doctest::Approx(0.10536051565782628).epsilon(1e-12));

    CHECK_THROWS_AS(bce(Tensor::zeros({2}), Tensor::zeros({3})), std::invalid_argument);
}

TEST_CASE("bce is nonnegative and minimized at the target") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor t = Tensor::from_data({6}, {1, 0, 0, 1, 1, 0});
        Tensor p = random_tensor({6}, rng, 0.01, 0.99);
        const double at_p = bce(p, t).item();
        CHECK(at_p >= 0.0);
        CHECK(bce(t, t).item() <= at_p);
    }
}

TEST_CASE("dice hand values") {
    // exact one-hot match
    Tensor pred = Tensor::from_data({1, 2, 2, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
    CHECK(dice_loss(pred, pred).item() <= 1e-6);

    // disjoint hard masks
    Tensor a = Tensor::from_data({1, 2, 2, 2}, {1, 1, 1, 1, 0, 0, 0, 0});
    Tensor b = Tensor::from_data({1, 2, 2, 2}, {0, 0, 0, 0, 1, 1, 1, 1});
    CHECK(dice_loss(a, b).item() == doctest::Approx(1.0).epsilon(1e-6));

    // |A| = |B| = 4, |A and B| = 2 -> dice 0.5
    Tensor pa = Tensor::from_data({1, 1, 3, 3}, {1, 1, 1, 1, 0, 0, 0, 0, 0});
    Tensor ta = Tensor::from_data({1, 1, 3, 3}, {1, 1, 0, 0, 0, 1, 1, 0, 0});
    CHECK(dice_loss(pa, ta).item() == doctest::Approx(0.5).epsilon(1e-6));

    CHECK_THROWS_AS(dice_loss(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 2, 2, 2})),
                    std::invalid_argument);
}

TEST_CASE("dice stays in range") {
    Rng rng(9);
    for (int rep = 0; rep < 30; ++rep) {
        Tensor p = random_tensor({1, 3, 4, 4}, rng, 0.0, 1.0);
        Tensor t = Tensor::zeros({1, 3, 4, 4});
        // random one-hot target
        auto d = t.mutable_data();
        for (int pix = 0; pix < 16; ++pix) d[static_cast<size_t>(rng.uniform_int(3) * 16 + pix)] = 1.0;
        const double v = dice_loss(p, t).item();
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-9);
    }
}

TEST_CASE("combined loss composes its parts") {
    Rng rng(13);
    Tensor logits = random_tensor({2, 3, 4, 4}, rng);
    Tensor target = Tensor::zeros({2, 3, 4, 4});
    auto d = target.mutable_data();
    for (int n = 0; n < 2; ++n) {
        for (int pix = 0; pix < 16; ++pix) {
            d[static_cast<size_t>(n * 48 + rng.uniform_int(3) * 16 + pix)] = 1.0;
        }
    }

    const LossWeights w{0.5, 0.5, 1e-6};
    const double combined = combined_seg_loss(logits, target, w).item();
    const double bce_part = bce(sigmoid(logits), target).item();
    const double dice_part = dice_loss(softmax_channels(logits), target, w.dice_smooth).item();
    CHECK(combined == doctest::Approx(0.5 * bce_part + 0.5 * dice_part).epsilon(1e-12));

    // w_dice = 0 reduces to scaled BCE
    const LossWeights only_bce{0.7, 0.0, 1e-6};
    CHECK(combined_seg_loss(logits, target, only_bce).item() ==
          doctest::Approx(0.7 * bce_part).epsilon(1e-12));

    CHECK_THROWS_AS(combined_seg_loss(logits, target, LossWeights{0.0, 0.0, 1e-6}),
                    std::invalid_argument);
}

TEST_CASE("semi-supervised composite") {
    Tensor sup = Tensor::from_data({1}, {0.3});
    Tensor pseudo = Tensor::from_data({1}, {0.2});
    CHECK(semi_supervised_loss(sup, pseudo, 0.0).item() == 0.3);
    CHECK(semi_supervised_loss(sup, pseudo, 1.0).item() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(semi_supervised_loss(Tensor::from_data({1}, {1.0}), Tensor::from_data({1}, {1.0}), 0.496)
              .item() == doctest::Approx(1.496).epsilon(1e-15));
    CHECK_THROWS_AS(semi_supervised_loss(sup, pseudo, -0.1), std::invalid_argument);
}

TEST_CASE("semi-supervised loss is linear in alpha") {
    Tensor sup = Tensor::from_data({1}, {0.37});
    Tensor pseudo = Tensor::from_data({1}, {0.81});
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const double a1 = rng.uniform(0.0, 2.0), a2 = rng.uniform(0.0, 2.0);
        const double l1 = semi_supervised_loss(sup, pseudo, a1).item();
        const double l2 = semi_supervised_loss(sup, pseudo, a2).item();
        const double lm = semi_supervised_loss(sup, pseudo, (a1 + a2) / 2.0).item();
        CHECK(std::abs(l1 + l2 - 2.0 * lm) < 1e-12);
    }
}

TEST_CASE("loss gradients pass the finite-difference check") {
    Rng rng(31);
    Tensor target = Tensor::from_data({6}, {1, 0, 1, 1, 0, 0});
    CHECK(grad_rel_error([&](const Tensor& t) { return bce(t, target); },
                         random_tensor({6}, rng, 0.05, 0.95)) < 1e-4);

    Tensor seg_target = Tensor::zeros({1, 3, 4, 4});
    auto d = seg_target.mutable_data();
    for (int pix = 0; pix < 16; ++pix) d[static_cast<size_t>(rng.uniform_int(3) * 16 + pix)] = 1.0;

    CHECK(grad_rel_error([&](const Tensor& t) { return dice_loss(t, seg_target); },
                         random_tensor({1, 3, 4, 4}, rng, 0.05, 0.95)) < 1e-4);
    CHECK(grad_rel_error(
              [&](const Tensor& t) { return combined_seg_loss(t, seg_target, LossWeights{}); },
              random_tensor({1, 3, 4, 4}, rng)) < 1e-4);
    // through the sigmoid head, as the classification loop uses it
    Tensor cls_target = Tensor::from_data({4, 1}, {1, 0, 0, 1});
    CHECK(grad_rel_error([&](const Tensor& t) { return bce(sigmoid(t), cls_target); },
                         random_tensor({4, 1}, rng)) < 1e-4);
}
