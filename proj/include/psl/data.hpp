#pragma once

#include <optional>
#include <string>
#include <vector>

#include "psl/rng.hpp"
#include "psl/tensor.hpp"

namespace psl {

enum class Task { classification, segmentation };
enum class Split { train, val, test };

std::string task_name(Task task);
std::string split_name(Split split);

struct Sample {
    std::string id;
    Tensor image;                 // CxHxW in [0,1]
    std::optional<int> label;     // classification class index
    std::optional<Tensor> mask;   // HxW class-index map
    bool labeled = false;
};

struct Dataset {
    std::vector<Sample> samples;
    Split split = Split::train;
    int n_classes = 2;
    Task task = Task::classification;

    size_t size() const { return samples.size(); }
    std::vector<int> labeled_indices() const;
    std::vector<int> unlabeled_indices() const;
};

/// One manifest covers all three splits; each split is its own Dataset.
struct DataBundle {
    Dataset train;
    Dataset val;
    Dataset test;
    int n_classes = 2;
    Task task = Task::classification;
};

/// Manifest format: UTF-8 CSV, header `id,split,image,label,mask,labeled`,
/// image/mask paths relative to the manifest directory. Unlabeled rows have
/// empty label and mask and are only allowed in the train split.
DataBundle load_manifest(const std::string& path);

/// Write a bundle as manifest + P6 images (+ P5 class masks) under `dir`.
/// Returns the manifest path. Deterministic byte-for-byte.
std::string save_dataset(const DataBundle& bundle, const std::string& dir);

/// Binary classification analog of an imbalanced aerial dataset: class-1
/// ("flooded") images carry a large low-frequency blob with a distinct
/// channel signature, class-0 images are background only. Exactly
/// round(n * positive_fraction) positives. When `labeled` is false the true
/// labels are dropped and samples form an unlabeled pool.
Dataset gen_synthetic_classification(int n, double positive_fraction, int image_size,
                                     uint64_t seed, bool labeled = true,
                                     const std::string& id_prefix = "cls");

/// Multi-class shapes on a dark background; masks hold the exact per-pixel
/// region class. Pixel frequencies are intentionally background-dominant and
/// every shape class is guaranteed to appear regularly.
Dataset gen_synthetic_segmentation(int n, int n_classes, int image_size, uint64_t seed,
                                   bool labeled = true, const std::string& id_prefix = "seg");

/// Draws with replacement, probability proportional to the per-sample
/// weight. For class-balanced batches, weights are 1/(class count).
class WeightedSampler {
public:
    WeightedSampler(std::vector<double> weights, uint64_t seed);

    /// Weights 1/(class count) for labeled samples, 0 for unlabeled, so the
    /// expected per-class frequency is uniform; every class in
    /// [0, n_classes) must have at least one labeled sample.
    static WeightedSampler balanced_by_class(const Dataset& train, int n_classes, uint64_t seed);
    /// Weight 1 for labeled samples, 0 for unlabeled (segmentation batches).
    static WeightedSampler labeled_uniform(const Dataset& train, uint64_t seed);

    /// Dataset indices drawn with replacement.
    std::vector<int> sample_batch(int batch_size);

private:
    std::vector<double> cumulative_;
    Rng rng_;
};

/// ceil(pool_size / ratio_denominator) distinct indices, uniformly without
/// replacement, reproducible from the epoch seed.
std::vector<int> subsample_unlabeled(int pool_size, int ratio_denominator, uint64_t epoch_seed);

}  // namespace psl
