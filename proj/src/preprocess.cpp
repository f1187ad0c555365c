#include "psl/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "psl/data.hpp"

namespace psl {

namespace {

int clamp_idx(int i, int n) { return std::min(std::max(i, 0), n - 1); }

void require_image(const Tensor& img, const char* op) {
    if (img.rank() != 3) {
        throw std::invalid_argument(std::string(op) + ": expected CxHxW image, got " +
                                    shape_str(img.shape()));
    }
}

}  // namespace

Tensor bilateral_filter(const Tensor& img, int diameter, double sigma_color, double sigma_space) {
    require_image(img, "bilateral_filter");
    if (diameter < 1 || diameter % 2 == 0) {
        throw std::invalid_argument("bilateral_filter: diameter must be odd and >= 1");
    }
    if (sigma_color <= 0.0 || sigma_space <= 0.0) {
        throw std::invalid_argument("bilateral_filter: sigmas must be positive");
    }
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int r = diameter / 2;
    const double inv2ss = 1.0 / (2.0 * sigma_space * sigma_space);
    const double inv2sc = 1.0 / (2.0 * sigma_color * sigma_color);

    std::vector<double> spatial(static_cast<size_t>(diameter) * diameter);
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            spatial[static_cast<size_t>(dy + r) * diameter + (dx + r)] =
                std::exp(-(dy * dy + dx * dx) * inv2ss);
        }
    }

    std::vector<double> out(img.data().begin(), img.data().end());
    const auto x = img.data();
    for (int ic = 0; ic < c; ++ic) {
        const double* plane = x.data() + static_cast<size_t>(ic) * h * w;
        double* oplane = out.data() + static_cast<size_t>(ic) * h * w;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                const double center = plane[static_cast<size_t>(y) * w + xx];
                double acc = 0.0, norm = 0.0;
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = clamp_idx(y + dy, h);
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = clamp_idx(xx + dx, w);
                        const double v = plane[static_cast<size_t>(sy) * w + sx];
                        const double d = v - center;
                        const double wgt = spatial[static_cast<size_t>(dy + r) * diameter + (dx + r)] *
                                           std::exp(-d * d * inv2sc);
                        acc += wgt * v;
                        norm += wgt;
                    }
                }
                oplane[static_cast<size_t>(y) * w + xx] = acc / norm;
            }
        }
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

Tensor morph(const Tensor& img, MorphKind kind, int iterations) {
    require_image(img, "morph");
    if (iterations < 1) throw std::invalid_argument("morph: iterations must be >= 1");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<double> cur(img.data().begin(), img.data().end());
    std::vector<double> next(cur.size());
    const bool is_dilate = kind == MorphKind::dilate;
    for (int it = 0; it < iterations; ++it) {
        for (int ic = 0; ic < c; ++ic) {
            const double* plane = cur.data() + static_cast<size_t>(ic) * h * w;
            double* oplane = next.data() + static_cast<size_t>(ic) * h * w;
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < w; ++xx) {
                    double best = plane[static_cast<size_t>(clamp_idx(y - 1, h)) * w + clamp_idx(xx - 1, w)];
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int sy = clamp_idx(y + dy, h);
                        for (int dx = -1; dx <= 1; ++dx) {
                            const double v = plane[static_cast<size_t>(sy) * w + clamp_idx(xx + dx, w)];
                            best = is_dilate ? std::max(best, v) : std::min(best, v);
                        }
                    }
                    oplane[static_cast<size_t>(y) * w + xx] = best;
                }
            }
        }
        std::swap(cur, next);
    }
    return Tensor::from_data(img.shape(), std::move(cur));
}

namespace {

/// Shared resampler: maps each output pixel through `src_of` (returning
/// fractional source coordinates) and samples with clamp-to-edge.
template <typename SrcOf>
Tensor resample(const Tensor& img, int out_h, int out_w, ResizeMode mode, SrcOf src_of) {
    const bool is_mask = img.rank() == 2;
    const int c = is_mask ? 1 : img.dim(0);
    const int h = is_mask ? img.dim(0) : img.dim(1);
    const int w = is_mask ? img.dim(1) : img.dim(2);
    std::vector<double> out(static_cast<size_t>(c) * out_h * out_w);
    const auto x = img.data();
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const auto [sy, sx] = src_of(oy, ox);
            for (int ic = 0; ic < c; ++ic) {
                const double* plane = x.data() + static_cast<size_t>(ic) * h * w;
                double v;
                if (mode == ResizeMode::nearest) {
                    const int iy = clamp_idx(static_cast<int>(std::floor(sy + 0.5)), h);
                    const int ix = clamp_idx(static_cast<int>(std::floor(sx + 0.5)), w);
                    v = plane[static_cast<size_t>(iy) * w + ix];
                } else {
                    const double cy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
                    const double cx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
                    const int y0 = static_cast<int>(std::floor(cy));
                    const int x0 = static_cast<int>(std::floor(cx));
                    const int y1 = std::min(y0 + 1, h - 1);
                    const int x1 = std::min(x0 + 1, w - 1);
                    const double fy = cy - y0, fx = cx - x0;
                    const double v00 = plane[static_cast<size_t>(y0) * w + x0];
                    const double v01 = plane[static_cast<size_t>(y0) * w + x1];
                    const double v10 = plane[static_cast<size_t>(y1) * w + x0];
                    const double v11 = plane[static_cast<size_t>(y1) * w + x1];
                    v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
                }
                out[(static_cast<size_t>(ic) * out_h + oy) * out_w + ox] = v;
            }
        }
    }
    Shape shape = is_mask ? Shape{out_h, out_w} : Shape{c, out_h, out_w};
    return Tensor::from_data(std::move(shape), std::move(out));
}

}  // namespace

Tensor resize(const Tensor& img, int out_h, int out_w, ResizeMode mode) {
    if (img.rank() != 2 && img.rank() != 3) {
        throw std::invalid_argument("resize: expected CxHxW image or HxW mask");
    }
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: output extents must be >= 1");
    const int h = img.rank() == 2 ? img.dim(0) : img.dim(1);
    const int w = img.rank() == 2 ? img.dim(1) : img.dim(2);
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    // half-pixel-centered: src = (dst + 0.5)*scale - 0.5
    return resample(img, out_h, out_w, mode, [sy, sx](int oy, int ox) {
        return std::pair<double, double>((oy + 0.5) * sy - 0.5, (ox + 0.5) * sx - 0.5);
    });
}

namespace {

Tensor flip_h(const Tensor& img) {
    const bool is_mask = img.rank() == 2;
    const int c = is_mask ? 1 : img.dim(0);
    const int h = is_mask ? img.dim(0) : img.dim(1);
    const int w = is_mask ? img.dim(1) : img.dim(2);
    std::vector<double> out(img.data().size());
    const auto x = img.data();
    for (int ic = 0; ic < c; ++ic) {
        for (int y = 0; y < h; ++y) {
            const double* row = x.data() + (static_cast<size_t>(ic) * h + y) * w;
            double* orow = out.data() + (static_cast<size_t>(ic) * h + y) * w;
            for (int xx = 0; xx < w; ++xx) orow[xx] = row[w - 1 - xx];
        }
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

Tensor flip_v(const Tensor& img) {
    const bool is_mask = img.rank() == 2;
    const int c = is_mask ? 1 : img.dim(0);
    const int h = is_mask ? img.dim(0) : img.dim(1);
    const int w = is_mask ? img.dim(1) : img.dim(2);
    std::vector<double> out(img.data().size());
    const auto x = img.data();
    for (int ic = 0; ic < c; ++ic) {
        for (int y = 0; y < h; ++y) {
            const double* row = x.data() + (static_cast<size_t>(ic) * h + (h - 1 - y)) * w;
            double* orow = out.data() + (static_cast<size_t>(ic) * h + y) * w;
            std::copy_n(row, w, orow);
        }
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

Tensor crop_resize(const Tensor& img, int top, int left, int ch, int cw, int out_h, int out_w,
                   ResizeMode mode) {
    const double sy = static_cast<double>(ch) / out_h;
    const double sx = static_cast<double>(cw) / out_w;
    return resample(img, out_h, out_w, mode, [=](int oy, int ox) {
        return std::pair<double, double>(top + (oy + 0.5) * sy - 0.5, left + (ox + 0.5) * sx - 0.5);
    });
}

/// Inverse-mapped affine about the image center: rotate by -deg, scale by
/// 1/s, translate by (-dy, -dx).
Tensor affine(const Tensor& img, double deg, double scale, double dy, double dx, ResizeMode mode) {
    const int h = img.rank() == 2 ? img.dim(0) : img.dim(1);
    const int w = img.rank() == 2 ? img.dim(1) : img.dim(2);
    const double rad = deg * std::numbers::pi / 180.0;
    const double cosr = std::cos(rad), sinr = std::sin(rad);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double inv_s = 1.0 / scale;
    return resample(img, h, w, mode, [=](int oy, int ox) {
        const double py = oy - cy - dy;
        const double px = ox - cx - dx;
        const double sy = (cosr * py + sinr * px) * inv_s + cy;
        const double sx = (-sinr * py + cosr * px) * inv_s + cx;
        return std::pair<double, double>(sy, sx);
    });
}

Tensor brightness_contrast(const Tensor& img, double brightness, double contrast) {
    std::vector<double> out(img.data().begin(), img.data().end());
    for (auto& v : out) {
        v = std::min(1.0, std::max(0.0, (v - 0.5) * (1.0 + contrast) + 0.5 + brightness));
    }
    return Tensor::from_data(img.shape(), std::move(out));
}

}  // namespace

Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng) {
    if (!sample.image.defined()) throw std::invalid_argument("augment: sample has no image");
    Sample out = sample;
    Tensor img = sample.image;
    std::optional<Tensor> mask = sample.mask;
    const int h = img.dim(1), w = img.dim(2);

    auto both = [&](auto&& f) {
        img = f(img, ResizeMode::bilinear);
        if (mask) mask = f(*mask, ResizeMode::nearest);
    };

    if (config.crop && rng.coin(config.prob)) {
        const double s = rng.uniform(config.crop_min_scale, 1.0);
        const int ch = std::max(1, static_cast<int>(std::lround(s * h)));
        const int cw = std::max(1, static_cast<int>(std::lround(s * w)));
        const int top = rng.uniform_int(h - ch + 1);
        const int left = rng.uniform_int(w - cw + 1);
        both([&](const Tensor& t, ResizeMode m) { return crop_resize(t, top, left, ch, cw, h, w, m); });
    }
    if (config.hflip && rng.coin(config.prob)) {
        img = flip_h(img);
        if (mask) mask = flip_h(*mask);
    }
    if (config.vflip && rng.coin(config.prob)) {
        img = flip_v(img);
        if (mask) mask = flip_v(*mask);
    }
    double deg = 0.0, scale = 1.0, dy = 0.0, dx = 0.0;
    bool affine_active = false;
    if (config.shift && rng.coin(config.prob)) {
        dy = rng.uniform(-config.shift_frac, config.shift_frac) * h;
        dx = rng.uniform(-config.shift_frac, config.shift_frac) * w;
        affine_active = true;
    }
    if (config.rotate && rng.coin(config.prob)) {
        deg = rng.uniform(-config.rotate_deg, config.rotate_deg);
        affine_active = true;
    }
    if (config.scale && rng.coin(config.prob)) {
        scale = rng.uniform(config.scale_lo, config.scale_hi);
        affine_active = true;
    }
    if (affine_active) {
        both([&](const Tensor& t, ResizeMode m) { return affine(t, deg, scale, dy, dx, m); });
    }
    if (config.brightness_contrast && rng.coin(config.prob)) {
        const double b = rng.uniform(-config.brightness, config.brightness);
        const double c = rng.uniform(-config.contrast, config.contrast);
        img = brightness_contrast(img, b, c);
    }

    out.image = img;
    out.mask = mask;
    return out;
}

Tensor segmentation_image_pipeline(const Tensor& img) {
    return morph(morph(bilateral_filter(img), MorphKind::dilate, 2), MorphKind::erode, 1);
}

Tensor one_hot(const Tensor& mask, int n_classes) {
    if (mask.rank() != 2) throw std::invalid_argument("one_hot: expected HxW mask");
    if (n_classes < 1) throw std::invalid_argument("one_hot: n_classes must be >= 1");
    const int h = mask.dim(0), w = mask.dim(1);
    const size_t hw = static_cast<size_t>(h) * w;
    std::vector<double> out(static_cast<size_t>(n_classes) * hw, 0.0);
    const auto x = mask.data();
    for (size_t i = 0; i < hw; ++i) {
        const double v = x[i];
        if (v != std::floor(v) || v < 0.0 || v >= static_cast<double>(n_classes)) {
            throw std::invalid_argument("one_hot: mask value " + std::to_string(v) +
                                        " outside [0, " + std::to_string(n_classes) + ")");
        }
        out[static_cast<size_t>(v) * hw + i] = 1.0;
    }
    return Tensor::from_data({n_classes, h, w}, std::move(out));
}

std::vector<int> argmax_channels(const Tensor& probs) {
    if (probs.rank() != 3 && probs.rank() != 4) {
        throw std::invalid_argument("argmax_channels: expected CxHxW or NxCxHxW");
    }
    const bool batched = probs.rank() == 4;
    const int n = batched ? probs.dim(0) : 1;
    const int c = batched ? probs.dim(1) : probs.dim(0);
    const int64_t hw = batched ? static_cast<int64_t>(probs.dim(2)) * probs.dim(3)
                               : static_cast<int64_t>(probs.dim(1)) * probs.dim(2);
    std::vector<int> out(static_cast<size_t>(n) * hw);
    const auto x = probs.data();
    for (int in = 0; in < n; ++in) {
        const double* base = x.data() + static_cast<int64_t>(in) * c * hw;
        for (int64_t p = 0; p < hw; ++p) {
            int best = 0;
            double bv = base[p];
            for (int ic = 1; ic < c; ++ic) {
                const double v = base[static_cast<int64_t>(ic) * hw + p];
                if (v > bv) {
                    bv = v;
                    best = ic;
                }
            }
            out[static_cast<size_t>(in * hw + p)] = best;
        }
    }
    return out;
}

}  // namespace psl
