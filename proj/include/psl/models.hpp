#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psl/tensor.hpp"

namespace psl {

struct ModelConfig {
    int in_channels = 3;
    int n_classes = 2;
    int base_width = 8;
    uint64_t seed = 0;

    bool operator==(const ModelConfig&) const = default;
};

/// Small residual CNN for binary classification: two conv-relu-pool stages
/// (in -> w -> 2w channels) with an additive skip inside stage 2, global
/// average pooling and a dense head producing one logit per sample. The
/// sigmoid is applied by the caller. Input H and W must be divisible by 4.
class ClassifierModel {
public:
    explicit ClassifierModel(const ModelConfig& config);

    Tensor forward(const Tensor& batch) const;  // NCHW -> [N, 1] logits

    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    int64_t parameter_count() const;
    const ModelConfig& config() const { return config_; }
    void zero_grads();

private:
    ModelConfig config_;
    std::vector<Tensor> params_;
    // indices into params_: conv1 w/b, conv2a w/b, conv2b w/b, dense w/b
    enum { kConv1W, kConv1B, kConv2aW, kConv2aB, kConv2bW, kConv2bB, kDenseW, kDenseB, kNumParams };
};

/// Two-level UNet-style segmenter: encoder in -> w -> 2w with max pools,
/// bottleneck 4w, decoder with nearest upsampling and skip concats back to
/// 2w -> w, and a 1x1 head to n_classes channels. Output keeps the input
/// spatial size; H and W must be divisible by 4.
class SegmenterModel {
public:
    explicit SegmenterModel(const ModelConfig& config);

    Tensor forward(const Tensor& batch) const;  // NCHW -> [N, n_classes, H, W] logits

    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    int64_t parameter_count() const;
    const ModelConfig& config() const { return config_; }
    void zero_grads();

private:
    ModelConfig config_;
    std::vector<Tensor> params_;
    enum { kEnc1W, kEnc1B, kEnc2W, kEnc2B, kBottW, kBottB, kDec1W, kDec1B, kDec2W, kDec2B, kHeadW, kHeadB, kNumParams };
};

enum class ModelKind { classifier, segmenter };

/// Flat binary checkpoint: magic, kind, config fields, then the parameter
/// arrays in declaration order as little-endian 64-bit floats.
void save_checkpoint(const std::string& path, const ClassifierModel& model);
void save_checkpoint(const std::string& path, const SegmenterModel& model);
ModelKind peek_checkpoint_kind(const std::string& path);
ClassifierModel load_classifier_checkpoint(const std::string& path);
SegmenterModel load_segmenter_checkpoint(const std::string& path);

}  // namespace psl
