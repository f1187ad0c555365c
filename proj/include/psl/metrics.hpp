#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace psl {

/// Square count grid, rows = true class, cols = predicted class. Supports
/// accumulation across batches and element-wise merging of matrices built in
/// parallel.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int n_classes);

    void add(int truth, int pred);
    void add_batch(std::span<const int> pred, std::span<const int> truth);
    void merge(const ConfusionMatrix& other);

    int n_classes() const { return n_classes_; }
    int64_t at(int truth, int pred) const;
    int64_t total() const;
    int64_t diagonal() const;
    int64_t row_sum(int truth) const;
    int64_t col_sum(int pred) const;

private:
    int n_classes_;
    std::vector<int64_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth, int n_classes);

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // 0/0 ratios are reported as 0 with the matching flag cleared
    bool precision_defined = true;
    bool recall_defined = true;
    bool f1_defined = true;
};

/// Standard binary metrics from a 2x2 matrix with a designated positive class.
ClassificationMetrics classification_metrics(const ConfusionMatrix& cm, int positive_class);

struct SegmentationMetrics {
    std::vector<double> per_class_iou;
    std::vector<bool> iou_defined;  // false where the union was empty
    double miou = 0.0;              // unweighted mean over ALL classes
    double pixel_accuracy = 0.0;
};

SegmentationMetrics segmentation_metrics(const ConfusionMatrix& cm);

/// Class-column labels for reports: the 10-class layout uses the fixed
/// domain names, any other count falls back to class_0..class_{n-1}.
std::vector<std::string> class_column_names(int n_classes);

}  // namespace psl
