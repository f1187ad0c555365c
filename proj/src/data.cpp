#include "psl/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "psl/errors.hpp"
#include "psl/pnm.hpp"

namespace fs = std::filesystem;

namespace psl {

std::string task_name(Task task) {
    return task == Task::classification ? "classification" : "segmentation";
}

std::string split_name(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

std::vector<int> Dataset::labeled_indices() const {
    std::vector<int> idx;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].labeled) idx.push_back(static_cast<int>(i));
    }
    return idx;
}

std::vector<int> Dataset::unlabeled_indices() const {
    std::vector<int> idx;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (!samples[i].labeled) idx.push_back(static_cast<int>(i));
    }
    return idx;
}

namespace {

constexpr const char* kManifestHeader = "id,split,image,label,mask,labeled";

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

[[noreturn]] void row_error(const std::string& path, int line_no, const std::string& msg) {
    throw IoError("manifest " + path + " row " + std::to_string(line_no) + ": " + msg);
}

}  // namespace

DataBundle load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();

    std::string line;
    if (!std::getline(in, line)) throw IoError("manifest is empty (missing header): " + path);
    if (strip_cr(line) != kManifestHeader) {
        throw IoError("manifest " + path + ": bad header, expected '" + kManifestHeader + "'");
    }

    DataBundle bundle;
    bundle.train.split = Split::train;
    bundle.val.split = Split::val;
    bundle.test.split = Split::test;

    std::vector<std::string> seen_ids;
    bool any_label = false, any_mask = false;
    int max_mask_value = -1;
    Shape image_shape;
    int line_no = 1;

    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 6) row_error(path, line_no, "expected 6 fields, got " + std::to_string(f.size()));
        const std::string& id = f[0];
        const std::string& split_s = f[1];
        const std::string& image_rel = f[2];
        const std::string& label_s = f[3];
        const std::string& mask_rel = f[4];
        const std::string& labeled_s = f[5];

        if (id.empty()) row_error(path, line_no, "empty id");
        if (std::find(seen_ids.begin(), seen_ids.end(), id) != seen_ids.end()) {
            row_error(path, line_no, "duplicate id '" + id + "'");
        }
        seen_ids.push_back(id);

        Dataset* ds = nullptr;
        if (split_s == "train") ds = &bundle.train;
        else if (split_s == "val") ds = &bundle.val;
        else if (split_s == "test") ds = &bundle.test;
        else row_error(path, line_no, "unknown split '" + split_s + "'");

        if (labeled_s != "0" && labeled_s != "1") {
            row_error(path, line_no, "labeled flag must be 0 or 1, got '" + labeled_s + "'");
        }
        const bool labeled = labeled_s == "1";
        if (labeled == (label_s.empty() && mask_rel.empty())) {
            row_error(path, line_no, labeled ? "labeled row needs a label or a mask"
                                             : "unlabeled row must have empty label and mask");
        }
        if (!label_s.empty() && !mask_rel.empty()) {
            row_error(path, line_no, "row has both a label and a mask");
        }
        if (!labeled && ds->split != Split::train) {
            row_error(path, line_no, "val/test splits may contain only labeled samples");
        }
        if (image_rel.empty()) row_error(path, line_no, "empty image path");

        Sample s;
        s.id = id;
        s.labeled = labeled;
        try {
            s.image = read_pnm((base / image_rel).string());
        } catch (const IoError& e) {
            row_error(path, line_no, e.what());
        }
        if (image_shape.empty()) {
            image_shape = s.image.shape();
        } else if (s.image.shape() != image_shape) {
            row_error(path, line_no, "image shape " + shape_str(s.image.shape()) +
                                         " differs from the rest of the dataset " + shape_str(image_shape));
        }
        if (!label_s.empty()) {
            try {
                size_t used = 0;
                const int v = std::stoi(label_s, &used);
                if (used != label_s.size() || v < 0) throw std::invalid_argument(label_s);
                s.label = v;
            } catch (const std::exception&) {
                row_error(path, line_no, "bad label '" + label_s + "'");
            }
            if (*s.label > 1) row_error(path, line_no, "classification labels must be 0 or 1");
            any_label = true;
        }
        if (!mask_rel.empty()) {
            Tensor mask;
            try {
                mask = read_mask_pgm((base / mask_rel).string());
            } catch (const IoError& e) {
                row_error(path, line_no, e.what());
            }
            if (mask.dim(0) != s.image.dim(1) || mask.dim(1) != s.image.dim(2)) {
                row_error(path, line_no, "mask extents do not match the image");
            }
            for (double v : mask.data()) max_mask_value = std::max(max_mask_value, static_cast<int>(v));
            s.mask = std::move(mask);
            any_mask = true;
        }
        ds->samples.push_back(std::move(s));
    }

    if (any_label && any_mask) {
        throw IoError("manifest " + path + ": mixes classification labels and segmentation masks");
    }
    bundle.task = any_mask ? Task::segmentation : Task::classification;
    bundle.n_classes = any_mask ? std::max(2, max_mask_value + 1) : 2;
    for (Dataset* ds : {&bundle.train, &bundle.val, &bundle.test}) {
        ds->task = bundle.task;
        ds->n_classes = bundle.n_classes;
    }
    return bundle;
}

std::string save_dataset(const DataBundle& bundle, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "images", ec);
    if (ec) throw IoError("cannot create dataset directory: " + dir);
    const bool any_mask = bundle.task == Task::segmentation;
    if (any_mask) {
        fs::create_directories(fs::path(dir) / "masks", ec);
        if (ec) throw IoError("cannot create dataset directory: " + dir);
    }

    std::ostringstream manifest;
    manifest << kManifestHeader << "\n";
    for (const Dataset* ds : {&bundle.train, &bundle.val, &bundle.test}) {
        for (const Sample& s : ds->samples) {
            const std::string ext = s.image.dim(0) == 3 ? ".ppm" : ".pgm";
            const std::string image_rel = "images/" + s.id + ext;
            write_pnm((fs::path(dir) / image_rel).string(), s.image);
            std::string mask_rel;
            if (s.mask) {
                mask_rel = "masks/" + s.id + ".pgm";
                write_mask_pgm((fs::path(dir) / mask_rel).string(), *s.mask);
            }
            manifest << s.id << ',' << split_name(ds->split) << ',' << image_rel << ','
                     << (s.label ? std::to_string(*s.label) : "") << ',' << mask_rel << ','
                     << (s.labeled ? '1' : '0') << "\n";
        }
    }

    const std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
    std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + manifest_path);
    out << manifest.str();
    if (!out) throw IoError("short write on manifest: " + manifest_path);
    return manifest_path;
}

namespace {

/// Smooth low-frequency field in [-1, 1]: two random-phase sinusoids.
struct LowFreqField {
    double fy1, fx1, p1, fy2, fx2, p2;

    static LowFreqField make(Rng& rng) {
        auto f = [&] { return rng.uniform(0.5, 2.5); };
        auto p = [&] { return rng.uniform(0.0, 2.0 * std::numbers::pi); };
        return {f(), f(), p(), f(), f(), p()};
    }

    double at(double y, double x) const {
        const double twopi = 2.0 * std::numbers::pi;
        return 0.5 * (std::sin(twopi * (fy1 * y + fx1 * x) + p1) +
                      std::sin(twopi * (fy2 * y + fx2 * x) + p2));
    }
};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void hsv_to_rgb(double h_deg, double s, double v, double rgb[3]) {
    const double h = std::fmod(h_deg, 360.0) / 60.0;
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (i) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

std::string pad_id(const std::string& prefix, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", i);
    return prefix + "-" + buf;
}

}  // namespace

Dataset gen_synthetic_classification(int n, double positive_fraction, int image_size,
                                     uint64_t seed, bool labeled, const std::string& id_prefix) {
    if (n < 0) throw std::invalid_argument("gen_synthetic_classification: n must be >= 0");
    if (positive_fraction <= 0.0 || positive_fraction >= 1.0) {
        throw std::invalid_argument("gen_synthetic_classification: positive_fraction must be in (0,1)");
    }
    Dataset ds;
    ds.task = Task::classification;
    ds.n_classes = 2;
    Rng rng(seed);
    const int n_pos = static_cast<int>(std::lround(positive_fraction * n));
    const int s = image_size;
    const size_t hw = static_cast<size_t>(s) * s;

    for (int i = 0; i < n; ++i) {
        const bool positive = i < n_pos;
        const LowFreqField bg_field = LowFreqField::make(rng);
        const LowFreqField blob_field = LowFreqField::make(rng);

        // background base colors, dim blue channel
        const double base[3] = {rng.uniform(0.36, 0.44), rng.uniform(0.38, 0.46), rng.uniform(0.30, 0.38)};

        // blob geometry: kept fully inside the frame and covering > 40% of
        // the pixels (pi * 0.41^2 > 0.5)
        const double cy = (0.5 + rng.uniform(-0.02, 0.02)) * s;
        const double cx = (0.5 + rng.uniform(-0.02, 0.02)) * s;
        const double ry = rng.uniform(0.41, 0.46) * s;
        const double rx = rng.uniform(0.41, 0.46) * s;

        std::vector<double> img(3 * hw);
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                const double fy = (y + 0.5) / s, fx = (x + 0.5) / s;
                const double lf = bg_field.at(fy, fx);
                const size_t p = static_cast<size_t>(y) * s + x;
                double rgbv[3];
                for (int c = 0; c < 3; ++c) rgbv[c] = base[c] + 0.06 * lf + rng.uniform(-0.03, 0.03);
                if (positive) {
                    const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
                    if (dy * dy + dx * dx <= 1.0) {
                        const double lf2 = blob_field.at(fy, fx);
                        rgbv[0] = 0.26 + 0.05 * lf2 + rng.uniform(-0.03, 0.03);
                        rgbv[1] = 0.30 + 0.05 * lf2 + rng.uniform(-0.03, 0.03);
                        rgbv[2] = 0.72 + 0.08 * lf2 + rng.uniform(-0.03, 0.03);
                    }
                }
                for (int c = 0; c < 3; ++c) img[static_cast<size_t>(c) * hw + p] = clamp01(rgbv[c]);
            }
        }

        Sample sample;
        sample.id = pad_id(id_prefix, i);
        sample.image = Tensor::from_data({3, s, s}, std::move(img));
        sample.labeled = labeled;
        if (labeled) sample.label = positive ? 1 : 0;
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

Dataset gen_synthetic_segmentation(int n, int n_classes, int image_size, uint64_t seed,
                                   bool labeled, const std::string& id_prefix) {
    if (n < 0) throw std::invalid_argument("gen_synthetic_segmentation: n must be >= 0");
    if (n_classes < 2) throw std::invalid_argument("gen_synthetic_segmentation: n_classes must be >= 2");
    Dataset ds;
    ds.task = Task::segmentation;
    ds.n_classes = n_classes;
    Rng rng(seed);
    const int s = image_size;
    const size_t hw = static_cast<size_t>(s) * s;

    struct Shape2d {
        int kind;  // 0 ellipse, 1 rect, 2 diamond
        int cls;
        double cy, cx, ry, rx;

        bool contains(double y, double x) const {
            const double dy = std::abs(y - cy) / ry, dx = std::abs(x - cx) / rx;
            switch (kind) {
                case 0: return dy * dy + dx * dx <= 1.0;
                case 1: return dy <= 1.0 && dx <= 1.0;
                default: return dy + dx <= 1.0;
            }
        }
    };

    for (int i = 0; i < n; ++i) {
        const LowFreqField bg_field = LowFreqField::make(rng);

        std::vector<Shape2d> shapes;
        const int n_extra = rng.uniform_int(3);  // 0..2 small shapes
        for (int k = 0; k < n_extra; ++k) {
            Shape2d sh;
            sh.kind = rng.uniform_int(3);
            sh.cls = 1 + rng.uniform_int(n_classes - 1);
            sh.cy = rng.uniform(0.25, 0.75) * s;
            sh.cx = rng.uniform(0.25, 0.75) * s;
            sh.ry = rng.uniform(0.10, 0.20) * s;
            sh.rx = rng.uniform(0.10, 0.20) * s;
            shapes.push_back(sh);
        }
        // The coverage shape is painted last so it is never occluded; its
        // class cycles through 1..n_classes-1, guaranteeing every class a
        // regular, sizable appearance.
        {
            Shape2d sh;
            sh.kind = rng.uniform_int(2);  // ellipse or rect only (larger minimum area)
            sh.cls = 1 + (i % (n_classes - 1));
            sh.cy = rng.uniform(0.35, 0.65) * s;
            sh.cx = rng.uniform(0.35, 0.65) * s;
            sh.ry = rng.uniform(0.17, 0.22) * s;
            sh.rx = rng.uniform(0.17, 0.22) * s;
            shapes.push_back(sh);
        }

        std::vector<double> palette(static_cast<size_t>(n_classes) * 3);
        for (int c = 1; c < n_classes; ++c) {
            hsv_to_rgb(300.0 * (c - 1) / std::max(1, n_classes - 1), 0.65, 0.8,
                       &palette[static_cast<size_t>(c) * 3]);
        }

        std::vector<double> img(3 * hw);
        std::vector<double> mask(hw, 0.0);
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                const size_t p = static_cast<size_t>(y) * s + x;
                int cls = 0;
                for (const auto& sh : shapes) {
                    if (sh.contains(y + 0.5, x + 0.5)) cls = sh.cls;
                }
                double rgbv[3];
                if (cls == 0) {
                    const double lf = bg_field.at((y + 0.5) / s, (x + 0.5) / s);
                    rgbv[0] = 0.18 + 0.05 * lf;
                    rgbv[1] = 0.18 + 0.05 * lf;
                    rgbv[2] = 0.21 + 0.05 * lf;
                } else {
                    for (int c = 0; c < 3; ++c) rgbv[c] = palette[static_cast<size_t>(cls) * 3 + c];
                }
                for (int c = 0; c < 3; ++c) {
                    img[static_cast<size_t>(c) * hw + p] = clamp01(rgbv[c] + rng.uniform(-0.02, 0.02));
                }
                mask[p] = static_cast<double>(cls);
            }
        }

        Sample sample;
        sample.id = pad_id(id_prefix, i);
        sample.image = Tensor::from_data({3, s, s}, std::move(img));
        sample.labeled = labeled;
        if (labeled) sample.mask = Tensor::from_data({s, s}, std::move(mask));
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

WeightedSampler::WeightedSampler(std::vector<double> weights, uint64_t seed) : rng_(seed) {
    if (weights.empty()) throw std::invalid_argument("sampler: weights must be nonempty");
    double total = 0.0;
    cumulative_.resize(weights.size());
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0) throw std::invalid_argument("sampler: weights must be >= 0");
        total += weights[i];
        cumulative_[i] = total;
    }
    if (total <= 0.0) throw std::invalid_argument("sampler: weights must not all be zero");
}

WeightedSampler WeightedSampler::balanced_by_class(const Dataset& train, int n_classes,
                                                   uint64_t seed) {
    std::vector<int64_t> counts(static_cast<size_t>(n_classes), 0);
    for (const Sample& s : train.samples) {
        if (!s.labeled) continue;
        if (!s.label || *s.label < 0 || *s.label >= n_classes) {
            throw std::invalid_argument("sampler: labeled sample without a valid class label");
        }
        ++counts[static_cast<size_t>(*s.label)];
    }
    for (int c = 0; c < n_classes; ++c) {
        if (counts[static_cast<size_t>(c)] == 0) {
            throw std::invalid_argument("sampler: class " + std::to_string(c) +
                                        " has no labeled samples");
        }
    }
    std::vector<double> weights(train.samples.size(), 0.0);
    for (size_t i = 0; i < train.samples.size(); ++i) {
        const Sample& s = train.samples[i];
        if (s.labeled) weights[i] = 1.0 / static_cast<double>(counts[static_cast<size_t>(*s.label)]);
    }
    return WeightedSampler(std::move(weights), seed);
}

WeightedSampler WeightedSampler::labeled_uniform(const Dataset& train, uint64_t seed) {
    std::vector<double> weights(train.samples.size(), 0.0);
    for (size_t i = 0; i < train.samples.size(); ++i) {
        if (train.samples[i].labeled) weights[i] = 1.0;
    }
    return WeightedSampler(std::move(weights), seed);
}

std::vector<int> WeightedSampler::sample_batch(int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("sampler: batch size must be >= 1");
    std::vector<int> out(static_cast<size_t>(batch_size));
    const double total = cumulative_.back();
    for (int i = 0; i < batch_size; ++i) {
        const double u = rng_.uniform(0.0, total);
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        out[static_cast<size_t>(i)] =
            static_cast<int>(std::min<size_t>(cumulative_.size() - 1,
                                              static_cast<size_t>(it - cumulative_.begin())));
    }
    return out;
}

std::vector<int> subsample_unlabeled(int pool_size, int ratio_denominator, uint64_t epoch_seed) {
    if (pool_size < 1) throw std::invalid_argument("subsample_unlabeled: pool must be nonempty");
    if (ratio_denominator < 1) throw std::invalid_argument("subsample_unlabeled: ratio must be >= 1");
    const int k = (pool_size + ratio_denominator - 1) / ratio_denominator;
    Rng rng(epoch_seed);
    auto idx = sample_without_replacement(pool_size, k, rng);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace psl
