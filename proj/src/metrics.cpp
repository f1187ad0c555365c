#include "psl/metrics.hpp"

#include <stdexcept>

namespace psl {

ConfusionMatrix::ConfusionMatrix(int n_classes) : n_classes_(n_classes) {
    if (n_classes < 1) throw std::invalid_argument("confusion matrix needs n_classes >= 1");
    counts_.assign(static_cast<size_t>(n_classes) * n_classes, 0);
}

void ConfusionMatrix::add(int truth, int pred) {
    if (truth < 0 || truth >= n_classes_ || pred < 0 || pred >= n_classes_) {
        throw std::invalid_argument("confusion matrix: class index out of range");
    }
    ++counts_[static_cast<size_t>(truth) * n_classes_ + pred];
}

void ConfusionMatrix::add_batch(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) {
        throw std::invalid_argument("confusion matrix: prediction and truth lengths differ");
    }
    for (size_t i = 0; i < pred.size(); ++i) add(truth[i], pred[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.n_classes_ != n_classes_) {
        throw std::invalid_argument("confusion matrix: merging different class counts");
    }
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

int64_t ConfusionMatrix::at(int truth, int pred) const {
    return counts_[static_cast<size_t>(truth) * n_classes_ + pred];
}

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (int64_t c : counts_) t += c;
    return t;
}

int64_t ConfusionMatrix::diagonal() const {
    int64_t t = 0;
    for (int i = 0; i < n_classes_; ++i) t += at(i, i);
    return t;
}

int64_t ConfusionMatrix::row_sum(int truth) const {
    int64_t t = 0;
    for (int p = 0; p < n_classes_; ++p) t += at(truth, p);
    return t;
}

int64_t ConfusionMatrix::col_sum(int pred) const {
    int64_t t = 0;
    for (int r = 0; r < n_classes_; ++r) t += at(r, pred);
    return t;
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth, int n_classes) {
    ConfusionMatrix cm(n_classes);
    cm.add_batch(pred, truth);
    return cm;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm, int positive_class) {
    if (cm.n_classes() != 2) throw std::invalid_argument("classification_metrics: needs a 2x2 matrix");
    if (positive_class != 0 && positive_class != 1) {
        throw std::invalid_argument("classification_metrics: positive class must be 0 or 1");
    }
    const int pos = positive_class, neg = 1 - positive_class;
    const double tp = static_cast<double>(cm.at(pos, pos));
    const double fp = static_cast<double>(cm.at(neg, pos));
    const double fn = static_cast<double>(cm.at(pos, neg));

    ClassificationMetrics m;
    const int64_t total = cm.total();
    m.accuracy = total > 0 ? static_cast<double>(cm.diagonal()) / static_cast<double>(total) : 0.0;
    if (tp + fp > 0) {
        m.precision = tp / (tp + fp);
    } else {
        m.precision_defined = false;
    }
    if (tp + fn > 0) {
        m.recall = tp / (tp + fn);
    } else {
        m.recall_defined = false;
    }
    if (2 * tp + fp + fn > 0) {
        m.f1 = 2 * tp / (2 * tp + fp + fn);
    } else {
        m.f1_defined = false;
    }
    return m;
}

SegmentationMetrics segmentation_metrics(const ConfusionMatrix& cm) {
    const int n = cm.n_classes();
    SegmentationMetrics m;
    m.per_class_iou.resize(static_cast<size_t>(n), 0.0);
    m.iou_defined.assign(static_cast<size_t>(n), true);
    double acc = 0.0;
    for (int c = 0; c < n; ++c) {
        const int64_t inter = cm.at(c, c);
        const int64_t uni = cm.row_sum(c) + cm.col_sum(c) - inter;
        if (uni > 0) {
            m.per_class_iou[static_cast<size_t>(c)] = static_cast<double>(inter) / static_cast<double>(uni);
        } else {
            m.iou_defined[static_cast<size_t>(c)] = false;
        }
        acc += m.per_class_iou[static_cast<size_t>(c)];
    }
    m.miou = acc / static_cast<double>(n);
    const int64_t total = cm.total();
    m.pixel_accuracy = total > 0 ? static_cast<double>(cm.diagonal()) / static_cast<double>(total) : 0.0;
    return m;
}

std::vector<std::string> class_column_names(int n_classes) {
    if (n_classes == 10) {
        return {"Background",        "Building Flooded", "Building Non-Flooded", "Road Flooded",
                "Road Non-Flooded",  "Water",            "Tree",                 "Vehicle",
                "Pool",              "Grass"};
    }
    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) names.push_back("class_" + std::to_string(c));
    return names;
}

}  // namespace psl
