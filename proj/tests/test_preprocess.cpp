#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psl/data.hpp"
#include "psl/preprocess.hpp"
#include "support/test_util.hpp"

using namespace psl;

namespace {

/// Random image quantized to binary fractions k/256 so complement identities
/// are exact in floating point (same quantization as 8-bit data).
Tensor random_quantized_image(Shape shape, Rng& rng) {
    std::vector<double> d(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : d) v = rng.uniform_int(257) / 256.0;
    return Tensor::from_data(std::move(shape), std::move(d));
}

/// Plain spatial Gaussian blur with replicate borders and per-pixel weight
/// normalization: the sigma_color -> infinity limit of the bilateral filter,
/// evaluated directly.
Tensor gaussian_blur_oracle(const Tensor& img, int diameter, double sigma_space) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int r = diameter / 2;
    std::vector<double> out(img.data().size());
    const auto x = img.data();
    for (int ic = 0; ic < c; ++ic) {
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                double acc = 0.0, norm = 0.0;
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sy = std::min(std::max(y + dy, 0), h - 1);
                        const int sx = std::min(std::max(xx + dx, 0), w - 1);
                        const double wgt =
                            std::exp(-(dy * dy + dx * dx) / (2.0 * sigma_space * sigma_space));
                        acc += wgt * x[(static_cast<size_t>(ic) * h + sy) * w + sx];
                        norm += wgt;
                    }
                }
                out[(static_cast<size_t>(ic) * h + y) * w + xx] = acc / norm;
            }
        }
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

}  // namespace

TEST_CASE("bilateral filter basics") {
    Tensor flat = Tensor::full({1, 6, 6}, 0.4);
    Tensor out = bilateral_filter(flat);
    for (double v : out.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-12));

    CHECK_THROWS_AS(bilateral_filter(flat, 4), std::invalid_argument);
    CHECK_THROWS_AS(bilateral_filter(flat, 5, -1.0), std::invalid_argument);
}

TEST_CASE("bilateral with huge sigma_color equals a gaussian blur") {
    Rng rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor img = random_quantized_image({1, 8, 8}, rng);
        Tensor a = bilateral_filter(img, 5, 1e9, 2.0);
        Tensor b = gaussian_blur_oracle(img, 5, 2.0);
        CHECK(testutil::max_abs_diff(a.data(), b.data()) < 1e-9);
    }
}

TEST_CASE("bilateral output lies within the window range") {
    Rng rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor img = random_quantized_image({1, 16, 16}, rng);
        Tensor out = bilateral_filter(img, 5, 0.1, 2.0);
        const auto x = img.data();
        const auto y = out.data();
        for (int py = 0; py < 16; ++py) {
            for (int px = 0; px < 16; ++px) {
                double lo = 1.0, hi = 0.0;
                for (int dy = -2; dy <= 2; ++dy) {
                    for (int dx = -2; dx <= 2; ++dx) {
                        const int sy = std::min(std::max(py + dy, 0), 15);
                        const int sx = std::min(std::max(px + dx, 0), 15);
                        lo = std::min(lo, x[static_cast<size_t>(sy) * 16 + sx]);
                        hi = std::max(hi, x[static_cast<size_t>(sy) * 16 + sx]);
                    }
                }
                const double v = y[static_cast<size_t>(py) * 16 + px];
                CHECK(v >= lo - 1e-12);
                CHECK(v <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("morphology hand cases") {
    // single bright pixel dilates into a 3x3 block
    Tensor img = Tensor::zeros({1, 5, 5});
    img.mutable_data()[2 * 5 + 2] = 1.0;
    Tensor d = morph(img, MorphKind::dilate, 1);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) {
            const bool inside = std::abs(y - 2) <= 1 && std::abs(x - 2) <= 1;
            CHECK(d[y * 5 + x] == (inside ? 1.0 : 0.0));
        }
    }

    Tensor flat = Tensor::full({1, 4, 4}, 0.7);
    Tensor e = morph(flat, MorphKind::erode, 3);
    for (double v : e.data()) CHECK(v == 0.7);

    CHECK_THROWS_AS(morph(flat, MorphKind::erode, 0), std::invalid_argument);
}

TEST_CASE("morphological duality is exact") {
    Rng rng(8);
    for (int rep = 0; rep < 100; ++rep) {
        Tensor img = random_quantized_image({1, 12, 12}, rng);
        Tensor eroded = morph(img, MorphKind::erode, 2);

        std::vector<double> inv(img.data().begin(), img.data().end());
        for (auto& v : inv) v = 1.0 - v;
        Tensor dilated = morph(Tensor::from_data(img.shape(), std::move(inv)), MorphKind::dilate, 2);
        for (size_t i = 0; i < eroded.data().size(); ++i) {
            CHECK(eroded.data()[i] == 1.0 - dilated.data()[i]);  // exact
        }
    }
}

TEST_CASE("morph extensivity") {
    Rng rng(12);
    Tensor img = random_quantized_image({1, 10, 10}, rng);
    Tensor d = morph(img, MorphKind::dilate, 1);
    Tensor e = morph(img, MorphKind::erode, 1);
    for (size_t i = 0; i < img.data().size(); ++i) {
        CHECK(d.data()[i] >= img.data()[i]);
        CHECK(e.data()[i] <= img.data()[i]);
        CHECK(d.data()[i] >= 0.0);
        CHECK(d.data()[i] <= 1.0);
    }
}

TEST_CASE("resize dimensions and identity") {
    // the 10x downscale keeps the aspect ratio
    Tensor big = Tensor::full({1, 3000, 4000}, 0.5);
    Tensor small = resize(big, 300, 400, ResizeMode::bilinear);
    CHECK(small.shape() == Shape{1, 300, 400});
    for (double v : small.data()) CHECK(v == 0.5);

    Rng rng(6);
    Tensor img = testutil::random_tensor({2, 7, 9}, rng, 0.0, 1.0);
    Tensor same_b = resize(img, 7, 9, ResizeMode::bilinear);
    Tensor same_n = resize(img, 7, 9, ResizeMode::nearest);
    for (size_t i = 0; i < img.data().size(); ++i) {
        CHECK(same_b.data()[i] == img.data()[i]);
        CHECK(same_n.data()[i] == img.data()[i]);
    }
}

TEST_CASE("nearest mask resize never invents classes") {
    Rng rng(10);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> m(64);
        std::vector<bool> present(7, false);
        for (auto& v : m) {
            const int c = rng.uniform_int(7);
            v = c;
            present[static_cast<size_t>(c)] = true;
        }
        Tensor mask = Tensor::from_data({8, 8}, std::move(m));
        for (const auto [oh, ow] : {std::pair{5, 13}, std::pair{16, 3}, std::pair{11, 11}}) {
            Tensor r = resize(mask, oh, ow, ResizeMode::nearest);
            for (double v : r.data()) {
                CHECK(v == std::floor(v));
                CHECK(present[static_cast<size_t>(v)]);
            }
        }
    }
}

TEST_CASE("one_hot") {
    Tensor mask = Tensor::from_data({2, 2}, {3, 0, 9, 3});
    Tensor oh = one_hot(mask, 10);
    CHECK(oh.shape() == Shape{10, 2, 2});
    CHECK(oh[3 * 4 + 0] == 1.0);
    CHECK(oh[0 * 4 + 1] == 1.0);
    CHECK(oh[9 * 4 + 2] == 1.0);
    CHECK(oh[3 * 4 + 3] == 1.0);

    // channel sums are the all-ones map; argmax inverts exactly
    Rng rng(14);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> m(36);
        for (auto& v : m) v = rng.uniform_int(10);
        Tensor rnd = Tensor::from_data({6, 6}, m);
        Tensor enc = one_hot(rnd, 10);
        for (int p = 0; p < 36; ++p) {
            double s = 0.0;
            for (int c = 0; c < 10; ++c) s += enc[c * 36 + p];
            CHECK(s == 1.0);
        }
        const auto inv = argmax_channels(enc);
        for (int p = 0; p < 36; ++p) CHECK(static_cast<double>(inv[static_cast<size_t>(p)]) == m[static_cast<size_t>(p)]);
    }

    CHECK_THROWS_AS(one_hot(Tensor::from_data({1, 1}, {10}), 10), std::invalid_argument);
    CHECK_THROWS_AS(one_hot(Tensor::from_data({1, 1}, {0.5}), 10), std::invalid_argument);
}

TEST_CASE("argmax tie goes to the lowest class") {
    Tensor logits = Tensor::zeros({6, 1, 1});
    auto d = logits.mutable_data();
    d[2] = 5.0;
    d[5] = 5.0;
    CHECK(argmax_channels(logits)[0] == 2);
}

TEST_CASE("augment identity and involution") {
    Rng gen(21);
    Sample s;
    s.id = "t";
    s.image = testutil::random_tensor({3, 8, 8}, gen, 0.0, 1.0);
    s.label = 1;
    s.labeled = true;

    AugmentConfig off;
    off.crop = off.hflip = off.vflip = off.shift = off.rotate = off.scale = off.brightness_contrast = false;
    Rng rng(1);
    Sample same = augment(s, off, rng);
    CHECK(testutil::max_abs_diff(same.image.data(), s.image.data()) == 0.0);
    CHECK(same.label == s.label);

    // horizontal flip applied twice restores the image
    AugmentConfig flip_only = off;
    flip_only.hflip = true;
    flip_only.prob = 1.0;
    Rng rng2(2);
    Sample once = augment(s, flip_only, rng2);
    CHECK(testutil::max_abs_diff(once.image.data(), s.image.data()) > 0.0);
    Sample twice = augment(once, flip_only, rng2);
    CHECK(testutil::max_abs_diff(twice.image.data(), s.image.data()) == 0.0);
}

TEST_CASE("augment is reproducible from the rng seed") {
    Rng gen(22);
    Sample s;
    s.image = testutil::random_tensor({3, 12, 12}, gen, 0.0, 1.0);
    std::vector<double> mask(144);
    for (auto& v : mask) v = gen.uniform_int(4);
    s.mask = Tensor::from_data({12, 12}, std::move(mask));
    s.labeled = true;

    AugmentConfig cfg;
    Rng r1(99), r2(99);
    Sample a = augment(s, cfg, r1);
    Sample b = augment(s, cfg, r2);
    CHECK(testutil::max_abs_diff(a.image.data(), b.image.data()) == 0.0);
    CHECK(testutil::max_abs_diff(a.mask->data(), b.mask->data()) == 0.0);
}

TEST_CASE("rotation roughly preserves central shape pixel counts") {
    // 10x10 central square of class 1 on a 32x32 background
    std::vector<double> mask(32 * 32, 0.0);
    std::vector<double> img(3 * 32 * 32, 0.2);
    for (int y = 11; y < 21; ++y) {
        for (int x = 11; x < 21; ++x) mask[static_cast<size_t>(y) * 32 + x] = 1.0;
    }
    Sample s;
    s.image = Tensor::from_data({3, 32, 32}, std::move(img));
    s.mask = Tensor::from_data({32, 32}, std::move(mask));
    s.labeled = true;

    AugmentConfig rot;
    rot.crop = rot.hflip = rot.vflip = rot.shift = rot.scale = rot.brightness_contrast = false;
    rot.rotate = true;
    rot.prob = 1.0;

    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        Sample r = augment(s, rot, rng);
        int count = 0;
        for (double v : r.mask->data()) count += v == 1.0;
        CHECK(count >= 95);   // 100 +/- 5%
        CHECK(count <= 105);
    }
}

TEST_CASE("augmented masks keep identical geometry to their images") {
    // paint the image with the mask's class so any geometric mismatch shows
    std::vector<double> mask(64);
    std::vector<double> img(3 * 64);
    Rng gen(33);
    for (int i = 0; i < 64; ++i) {
        mask[static_cast<size_t>(i)] = gen.uniform_int(2);
        for (int c = 0; c < 3; ++c) img[static_cast<size_t>(c * 64 + i)] = mask[static_cast<size_t>(i)];
    }
    Sample s;
    s.image = Tensor::from_data({3, 8, 8}, std::move(img));
    s.mask = Tensor::from_data({8, 8}, std::move(mask));
    s.labeled = true;

    AugmentConfig flips;
    flips.crop = flips.shift = flips.rotate = flips.scale = flips.brightness_contrast = false;
    flips.prob = 1.0;
    Rng rng(3);
    Sample out = augment(s, flips, rng);
    for (int i = 0; i < 64; ++i) {
        CHECK(out.image.data()[static_cast<size_t>(i)] == out.mask->data()[static_cast<size_t>(i)]);
    }
}
