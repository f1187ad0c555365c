#pragma once

#include <string>
#include <utility>
#include <vector>

#include "psl/data.hpp"
#include "psl/losses.hpp"
#include "psl/metrics.hpp"
#include "psl/models.hpp"
#include "psl/optim.hpp"
#include "psl/preprocess.hpp"

namespace psl {

/// Linear ramp of the pseudo-loss weight: alpha_i below e_i, alpha_f from
/// e_f on, and (alpha_f-alpha_i)/(e_f-e_i)*(epoch-e_i)+alpha_i in between.
struct AlphaSchedule {
    double alpha_i = 0.0;
    double alpha_f = 1.0;
    int e_i = 10;
    int e_f = 135;
};

double alpha_at(const AlphaSchedule& schedule, int epoch);

/// Hard predictions for a subsample of the unlabeled pool, produced by the
/// model state at the end of the previous epoch. Entries are replaced
/// wholesale on every regeneration.
struct PseudoLabelStore {
    struct Entry {
        std::string id;
        int sample_index;  // index into the train dataset
        int label = -1;    // classification target
        Tensor mask;       // segmentation target (HxW class indices)
    };
    std::vector<Entry> entries;

    bool empty() const { return entries.empty(); }
    size_t size() const { return entries.size(); }
};

PseudoLabelStore generate_pseudo_labels(const ClassifierModel& model, const Dataset& train,
                                        const std::vector<int>& indices, int batch_size);
PseudoLabelStore generate_pseudo_labels(const SegmenterModel& model, const Dataset& train,
                                        const std::vector<int>& indices, int batch_size);

struct ExperimentConfig {
    Task task = Task::classification;
    int epochs = 150;
    AlphaSchedule alpha;
    int batch_size = 64;
    OptimizerKind optimizer = OptimizerKind::sgd;  // supervised-phase optimizer
    double lr = 0.01;
    double momentum = 0.9;
    std::vector<int> lr_milestones;
    double lr_gamma = 0.1;
    double pseudo_lr = 0.01;  // fixed SGD rate after the segmentation phase switch
    LossWeights loss_weights;
    int unlabeled_ratio = 10;
    int steps_per_epoch = 0;  // 0 = ceil(labeled / batch_size)
    bool augment = true;
    bool ssl = true;  // false runs the plain supervised loop
    int positive_class = 1;
    uint64_t seed = 0;
    int n_classes = 0;  // 0 = infer from the dataset
    int base_width = 8;
    int resize_to = 0;       // ingestion-time square resize; 0 keeps native size
    bool preprocess = false;  // bilateral -> dilate x2 -> erode x1 at ingestion
    std::string data_manifest;
    // synthetic dataset used when no manifest is given
    int synth_labeled = 398;
    int synth_unlabeled = 1047;
    int synth_val = 450;
    int synth_test = 448;
    int synth_image_size = 32;
    double synth_positive_fraction = 51.0 / 398.0;
    int synth_classes = 10;
    std::string outdir;
};

struct EpochRecord {
    int epoch = 0;
    double alpha = 0.0;
    double lr = 0.0;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double sup_loss = 0.0;
    double pseudo_loss = 0.0;  // mean raw pseudo BCE/combined term, before alpha
    double total_loss = 0.0;   // sup_loss + alpha * pseudo_loss
    std::vector<std::pair<std::string, double>> metrics;  // validation metrics
};

struct MetricsLog {
    Task task = Task::classification;
    std::vector<EpochRecord> records;
    std::vector<std::string> notes;
    int best_epoch = -1;  // epoch of the best primary validation metric
};

struct ClassificationEval {
    ConfusionMatrix cm;
    ClassificationMetrics metrics;
};

struct SegmentationEval {
    ConfusionMatrix cm;
    SegmentationMetrics metrics;
};

/// Score a fully labeled split without updating parameters.
ClassificationEval evaluate_classifier(const ClassifierModel& model, const Dataset& split,
                                       int positive_class, int batch_size = 64);
SegmentationEval evaluate_segmenter(const SegmenterModel& model, const Dataset& split,
                                    int batch_size = 24);

struct ClassificationResult {
    ClassifierModel final_model;
    ClassifierModel best_model;
    MetricsLog log;
};

struct SegmentationResult {
    SegmenterModel final_model;
    SegmenterModel best_model;
    MetricsLog log;
};

/// Semi-supervised classification loop: per epoch, class-balanced labeled
/// batches plus (once alpha > 0) pseudo-label batches against the previous
/// epoch's stored predictions, then pseudo-label regeneration on a fresh
/// 1:ratio subsample of the unlabeled pool and a validation pass. Fully
/// deterministic given the seed.
ClassificationResult train_classification(const ExperimentConfig& config, const DataBundle& data);

/// Same loop over combined BCE+Dice losses and pseudo masks. The supervised
/// phase runs the configured optimizer (Adam by default) under the step-LR
/// schedule; at the first epoch with alpha > 0 it is replaced by a fresh
/// SGD at pseudo_lr.
SegmentationResult train_segmentation(const ExperimentConfig& config, const DataBundle& data);

}  // namespace psl
