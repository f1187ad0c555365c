#include "psl/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "psl/errors.hpp"
#include "psl/ops.hpp"

namespace psl {

namespace {

constexpr char kMagic[8] = {'P', 'S', 'L', 'C', 'K', 'P', 'T', '1'};

void validate_config(const ModelConfig& c, bool classifier) {
    if (c.in_channels < 1) throw std::invalid_argument("model config: in_channels must be >= 1");
    if (c.base_width < 1) throw std::invalid_argument("model config: base_width must be >= 1");
    if (classifier) {
        if (c.n_classes != 2) throw std::invalid_argument("classifier requires n_classes == 2");
    } else {
        if (c.n_classes < 2) throw std::invalid_argument("segmenter requires n_classes >= 2");
    }
}

/// Seeded scaled-uniform init, bound sqrt(6 / fan_in); biases start at zero.
Tensor init_weight(Shape shape, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t = Tensor::uniform(std::move(shape), -bound, bound, rng);
    t.set_requires_grad(true);
    return t;
}

Tensor init_bias(int n) {
    Tensor t = Tensor::zeros({n});
    t.set_requires_grad(true);
    return t;
}

void check_batch(const Tensor& batch, int in_channels) {
    if (batch.rank() != 4) throw std::invalid_argument("model forward: batch must be NCHW");
    if (batch.dim(1) != in_channels) {
        throw std::invalid_argument("model forward: expected " + std::to_string(in_channels) +
                                    " input channels, got " + std::to_string(batch.dim(1)));
    }
    if (batch.dim(2) % 4 != 0 || batch.dim(3) % 4 != 0) {
        throw std::invalid_argument("model forward: H and W must be divisible by 4, got " +
                                    shape_str(batch.shape()));
    }
}

}  // namespace

ClassifierModel::ClassifierModel(const ModelConfig& config) : config_(config) {
    validate_config(config, true);
    Rng rng(config.seed);
    const int w = config.base_width;
    params_.resize(kNumParams);
    params_[kConv1W] = init_weight({w, config.in_channels, 3, 3}, config.in_channels * 9, rng);
    params_[kConv1B] = init_bias(w);
    params_[kConv2aW] = init_weight({2 * w, w, 3, 3}, w * 9, rng);
    params_[kConv2aB] = init_bias(2 * w);
    params_[kConv2bW] = init_weight({2 * w, 2 * w, 3, 3}, 2 * w * 9, rng);
    params_[kConv2bB] = init_bias(2 * w);
    params_[kDenseW] = init_weight({2 * w, 1}, 2 * w, rng);
    params_[kDenseB] = init_bias(1);
}

Tensor ClassifierModel::forward(const Tensor& batch) const {
    check_batch(batch, config_.in_channels);
    // stage 1
    Tensor x = maxpool2d(relu(conv2d(batch, params_[kConv1W], params_[kConv1B], 1, 1)));
    // stage 2 with additive residual skip
    Tensor t = relu(conv2d(x, params_[kConv2aW], params_[kConv2aB], 1, 1));
    Tensor y = relu(add(conv2d(t, params_[kConv2bW], params_[kConv2bB], 1, 1), t));
    Tensor pooled = global_avg_pool(maxpool2d(y));  // [N, 2w]
    return add_rowvec(matmul(pooled, params_[kDenseW]), params_[kDenseB]);
}

int64_t ClassifierModel::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
}

void ClassifierModel::zero_grads() {
    for (auto& p : params_) p.zero_grad();
}

SegmenterModel::SegmenterModel(const ModelConfig& config) : config_(config) {
    validate_config(config, false);
    Rng rng(config.seed);
    const int w = config.base_width;
    params_.resize(kNumParams);
    params_[kEnc1W] = init_weight({w, config.in_channels, 3, 3}, config.in_channels * 9, rng);
    params_[kEnc1B] = init_bias(w);
    params_[kEnc2W] = init_weight({2 * w, w, 3, 3}, w * 9, rng);
    params_[kEnc2B] = init_bias(2 * w);
    params_[kBottW] = init_weight({4 * w, 2 * w, 3, 3}, 2 * w * 9, rng);
    params_[kBottB] = init_bias(4 * w);
    params_[kDec1W] = init_weight({2 * w, 6 * w, 3, 3}, 6 * w * 9, rng);
    params_[kDec1B] = init_bias(2 * w);
    params_[kDec2W] = init_weight({w, 3 * w, 3, 3}, 3 * w * 9, rng);
    params_[kDec2B] = init_bias(w);
    params_[kHeadW] = init_weight({config.n_classes, w, 1, 1}, w, rng);
    params_[kHeadB] = init_bias(config.n_classes);
}

Tensor SegmenterModel::forward(const Tensor& batch) const {
    check_batch(batch, config_.in_channels);
    Tensor e1 = relu(conv2d(batch, params_[kEnc1W], params_[kEnc1B], 1, 1));        // [N, w, H, W]
    Tensor e2 = relu(conv2d(maxpool2d(e1), params_[kEnc2W], params_[kEnc2B], 1, 1)); // [N, 2w, H/2, W/2]
    Tensor b = relu(conv2d(maxpool2d(e2), params_[kBottW], params_[kBottB], 1, 1));  // [N, 4w, H/4, W/4]
    Tensor d1 = relu(conv2d(concat_channels(upsample_nearest(b), e2),
                            params_[kDec1W], params_[kDec1B], 1, 1));                // [N, 2w, H/2, W/2]
    Tensor d2 = relu(conv2d(concat_channels(upsample_nearest(d1), e1),
                            params_[kDec2W], params_[kDec2B], 1, 1));                // [N, w, H, W]
    return conv2d(d2, params_[kHeadW], params_[kHeadB], 1, 0);                       // [N, n_classes, H, W]
}

int64_t SegmenterModel::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
}

void SegmenterModel::zero_grads() {
    for (auto& p : params_) p.zero_grad();
}

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

struct Reader {
    std::string bytes;
    size_t pos = 0;
    explicit Reader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint: " + path);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    void need(size_t n, const char* what) {
        if (pos + n > bytes.size()) throw IoError(std::string("truncated checkpoint while reading ") + what);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

std::string serialize(ModelKind kind, const ModelConfig& c, const std::vector<Tensor>& params) {
    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, kind == ModelKind::classifier ? 0u : 1u);
    put_u32(out, static_cast<uint32_t>(c.in_channels));
    put_u32(out, static_cast<uint32_t>(c.n_classes));
    put_u32(out, static_cast<uint32_t>(c.base_width));
    put_u64(out, c.seed);
    int64_t total = 0;
    for (const auto& p : params) total += p.numel();
    put_u64(out, static_cast<uint64_t>(total));
    for (const auto& p : params) {
        for (double v : p.data()) put_f64(out, v);
    }
    return out;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on checkpoint: " + path);
}

struct Header {
    ModelKind kind;
    ModelConfig config;
    uint64_t total;
};

Header read_header(Reader& r, const std::string& path) {
    r.need(sizeof(kMagic), "magic");
    if (std::memcmp(r.bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IoError("not a model checkpoint (bad magic): " + path);
    }
    r.pos = sizeof(kMagic);
    const uint32_t kind = r.u32("kind");
    if (kind > 1) throw IoError("unknown model kind in checkpoint: " + path);
    Header h;
    h.kind = kind == 0 ? ModelKind::classifier : ModelKind::segmenter;
    h.config.in_channels = static_cast<int>(r.u32("in_channels"));
    h.config.n_classes = static_cast<int>(r.u32("n_classes"));
    h.config.base_width = static_cast<int>(r.u32("base_width"));
    h.config.seed = r.u64("seed");
    h.total = r.u64("param count");
    return h;
}

template <typename Model>
Model load_model(const std::string& path, ModelKind expect) {
    Reader r(path);
    const Header h = read_header(r, path);
    if (h.kind != expect) {
        throw IoError("checkpoint holds a " +
                      std::string(h.kind == ModelKind::classifier ? "classifier" : "segmenter") +
                      ", which does not match the requested model: " + path);
    }
    Model model{h.config};
    if (static_cast<int64_t>(h.total) != model.parameter_count()) {
        throw IoError("checkpoint parameter count does not match its config: " + path);
    }
    for (auto& p : model.parameters()) {
        auto d = p.mutable_data();
        for (auto& v : d) v = r.f64("parameters");
    }
    if (r.pos != r.bytes.size()) throw IoError("trailing bytes in checkpoint: " + path);
    return model;
}

}  // namespace

void save_checkpoint(const std::string& path, const ClassifierModel& model) {
    write_file(path, serialize(ModelKind::classifier, model.config(), model.parameters()));
}

void save_checkpoint(const std::string& path, const SegmenterModel& model) {
    write_file(path, serialize(ModelKind::segmenter, model.config(), model.parameters()));
}

ModelKind peek_checkpoint_kind(const std::string& path) {
    Reader r(path);
    return read_header(r, path).kind;
}

ClassifierModel load_classifier_checkpoint(const std::string& path) {
    return load_model<ClassifierModel>(path, ModelKind::classifier);
}

SegmenterModel load_segmenter_checkpoint(const std::string& path) {
    return load_model<SegmenterModel>(path, ModelKind::segmenter);
}

}  // namespace psl
