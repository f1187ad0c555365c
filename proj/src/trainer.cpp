#include "psl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "psl/errors.hpp"
#include "psl/ops.hpp"

namespace psl {

double alpha_at(const AlphaSchedule& s, int epoch) {
    if (epoch < 0) throw std::invalid_argument("alpha_at: epoch must be >= 0");
    if (s.e_i >= s.e_f) throw std::invalid_argument("alpha_at: e_i < e_f violated");
    if (s.alpha_i < 0.0 || s.alpha_i > s.alpha_f) {
        throw std::invalid_argument("alpha_at: 0 <= alpha_i <= alpha_f violated");
    }
    if (epoch < s.e_i) return s.alpha_i;
    if (epoch >= s.e_f) return s.alpha_f;
    return (s.alpha_f - s.alpha_i) / static_cast<double>(s.e_f - s.e_i) *
               static_cast<double>(epoch - s.e_i) +
           s.alpha_i;
}

namespace {

/// NCHW batch assembly from dataset samples, optionally augmenting each
/// sample together with its (possibly pseudo) target.
struct BatchBuilder {
    const Dataset& train;
    const AugmentConfig* aug = nullptr;  // null disables augmentation
    Rng* aug_rng = nullptr;

    Sample prepared(const Sample& original, std::optional<int> label_override,
                    const Tensor* mask_override) const {
        Sample s = original;
        if (label_override) s.label = *label_override;
        if (mask_override) s.mask = *mask_override;
        if (aug) return augment(s, *aug, *aug_rng);
        return s;
    }
};

Tensor stack_images(const std::vector<Sample>& samples) {
    const Shape& img = samples.front().image.shape();
    const int64_t per = shape_numel(img);
    std::vector<double> data(static_cast<size_t>(per) * samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto src = samples[i].image.data();
        std::copy(src.begin(), src.end(), data.begin() + static_cast<int64_t>(i) * per);
    }
    return Tensor::from_data({static_cast<int>(samples.size()), img[0], img[1], img[2]},
                             std::move(data));
}

Tensor stack_onehot_masks(const std::vector<Sample>& samples, int n_classes) {
    const int h = samples.front().image.dim(1), w = samples.front().image.dim(2);
    const int64_t per = static_cast<int64_t>(n_classes) * h * w;
    std::vector<double> data(static_cast<size_t>(per) * samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        const Tensor oh = one_hot(*samples[i].mask, n_classes);
        const auto src = oh.data();
        std::copy(src.begin(), src.end(), data.begin() + static_cast<int64_t>(i) * per);
    }
    return Tensor::from_data({static_cast<int>(samples.size()), n_classes, h, w}, std::move(data));
}

Tensor stack_labels(const std::vector<Sample>& samples) {
    std::vector<double> data(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) data[i] = static_cast<double>(*samples[i].label);
    return Tensor::from_data({static_cast<int>(samples.size()), 1}, std::move(data));
}

std::vector<std::pair<int, int>> chunks(int n, int batch) {
    std::vector<std::pair<int, int>> out;
    for (int b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
    return out;
}

double finite_or_throw(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw DivergenceError(std::string("non-finite ") + what + " encountered during training");
    }
    return v;
}

template <typename Model>
std::vector<std::vector<double>> snapshot_params(const Model& model) {
    std::vector<std::vector<double>> out;
    for (const auto& p : model.parameters()) out.emplace_back(p.data().begin(), p.data().end());
    return out;
}

template <typename Model>
void restore_params(Model& model, const std::vector<std::vector<double>>& snap) {
    auto& params = model.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
        auto d = params[i].mutable_data();
        std::copy(snap[i].begin(), snap[i].end(), d.begin());
    }
}

void require_fully_labeled(const Dataset& split) {
    for (const Sample& s : split.samples) {
        if (!s.labeled) {
            throw std::invalid_argument("evaluate: split contains unlabeled sample '" + s.id + "'");
        }
    }
}

/// Alternating step order (labeled first) with the leftover tail appended.
std::vector<bool> interleave_order(int n_labeled, int n_pseudo) {
    std::vector<bool> out;  // true = labeled step
    int l = 0, p = 0;
    while (l < n_labeled || p < n_pseudo) {
        const bool labeled_turn = static_cast<int>(out.size()) % 2 == 0;
        if ((labeled_turn && l < n_labeled) || p >= n_pseudo) {
            out.push_back(true);
            ++l;
        } else {
            out.push_back(false);
            ++p;
        }
    }
    return out;
}

int resolve_steps(const ExperimentConfig& config, int n_labeled) {
    if (config.steps_per_epoch > 0) return config.steps_per_epoch;
    return (n_labeled + config.batch_size - 1) / config.batch_size;
}

void common_preflight(const ExperimentConfig& config, const DataBundle& data, MetricsLog& log) {
    if (config.epochs < 1) throw ConfigError("epochs must be > 0");
    if (config.batch_size < 1) throw ConfigError("batch size must be > 0");
    if (data.train.labeled_indices().empty()) {
        throw ConfigError("training requires labeled train samples");
    }
    if (data.val.samples.empty()) {
        throw ConfigError("training requires a labeled validation split");
    }
    if (config.ssl && data.train.unlabeled_indices().empty()) {
        log.notes.push_back("unlabeled pool is empty; run degrades to supervised training");
    }
}

}  // namespace

PseudoLabelStore generate_pseudo_labels(const ClassifierModel& model, const Dataset& train,
                                        const std::vector<int>& indices, int batch_size) {
    NoGradGuard no_grad;
    PseudoLabelStore store;
    for (const auto& [lo, hi] : chunks(static_cast<int>(indices.size()), batch_size)) {
        std::vector<Sample> batch;
        for (int i = lo; i < hi; ++i) {
            batch.push_back(train.samples[static_cast<size_t>(indices[static_cast<size_t>(i)])]);
        }
        const Tensor logits = model.forward(stack_images(batch));
        for (int i = 0; i < hi - lo; ++i) {
            PseudoLabelStore::Entry e;
            e.sample_index = indices[static_cast<size_t>(lo + i)];
            e.id = batch[static_cast<size_t>(i)].id;
            // sigmoid(logit) > 0.5 <=> logit > 0; an exact tie goes to class 0
            e.label = logits[i] > 0.0 ? 1 : 0;
            store.entries.push_back(std::move(e));
        }
    }
    return store;
}

PseudoLabelStore generate_pseudo_labels(const SegmenterModel& model, const Dataset& train,
                                        const std::vector<int>& indices, int batch_size) {
    NoGradGuard no_grad;
    PseudoLabelStore store;
    for (const auto& [lo, hi] : chunks(static_cast<int>(indices.size()), batch_size)) {
        std::vector<Sample> batch;
        for (int i = lo; i < hi; ++i) {
            batch.push_back(train.samples[static_cast<size_t>(indices[static_cast<size_t>(i)])]);
        }
        const Tensor logits = model.forward(stack_images(batch));
        const std::vector<int> pred = argmax_channels(logits);
        const int h = logits.dim(2), w = logits.dim(3);
        const int64_t hw = static_cast<int64_t>(h) * w;
        for (int i = 0; i < hi - lo; ++i) {
            std::vector<double> mask(static_cast<size_t>(hw));
            for (int64_t p = 0; p < hw; ++p) {
                mask[static_cast<size_t>(p)] = static_cast<double>(pred[static_cast<size_t>(i * hw + p)]);
            }
            PseudoLabelStore::Entry e;
            e.sample_index = indices[static_cast<size_t>(lo + i)];
            e.id = batch[static_cast<size_t>(i)].id;
            e.mask = Tensor::from_data({h, w}, std::move(mask));
            store.entries.push_back(std::move(e));
        }
    }
    return store;
}

ClassificationEval evaluate_classifier(const ClassifierModel& model, const Dataset& split,
                                       int positive_class, int batch_size) {
    require_fully_labeled(split);
    NoGradGuard no_grad;
    ConfusionMatrix cm(2);
    for (const auto& [lo, hi] : chunks(static_cast<int>(split.size()), batch_size)) {
        std::vector<Sample> batch(split.samples.begin() + lo, split.samples.begin() + hi);
        const Tensor logits = model.forward(stack_images(batch));
        for (int i = 0; i < hi - lo; ++i) {
            cm.add(*batch[static_cast<size_t>(i)].label, logits[i] > 0.0 ? 1 : 0);
        }
    }
    return {cm, classification_metrics(cm, positive_class)};
}

SegmentationEval evaluate_segmenter(const SegmenterModel& model, const Dataset& split,
                                    int batch_size) {
    require_fully_labeled(split);
    NoGradGuard no_grad;
    ConfusionMatrix cm(split.n_classes);
    for (const auto& [lo, hi] : chunks(static_cast<int>(split.size()), batch_size)) {
        std::vector<Sample> batch(split.samples.begin() + lo, split.samples.begin() + hi);
        const Tensor logits = model.forward(stack_images(batch));
        const std::vector<int> pred = argmax_channels(logits);
        const int64_t hw = static_cast<int64_t>(logits.dim(2)) * logits.dim(3);
        for (int i = 0; i < hi - lo; ++i) {
            const auto truth = batch[static_cast<size_t>(i)].mask->data();
            for (int64_t p = 0; p < hw; ++p) {
                cm.add(static_cast<int>(truth[static_cast<size_t>(p)]),
                       pred[static_cast<size_t>(i * hw + p)]);
            }
        }
    }
    return {cm, segmentation_metrics(cm)};
}

namespace {

struct LoopState {
    std::unique_ptr<Optimizer> optimizer;
    PseudoLabelStore store;
    bool switched_to_pseudo_sgd = false;
    std::vector<std::vector<double>> best_params;
    double best_metric = -1.0;
    int best_epoch = -1;
};

}  // namespace

ClassificationResult train_classification(const ExperimentConfig& config, const DataBundle& data) {
    MetricsLog log;
    log.task = Task::classification;
    common_preflight(config, data, log);

    ModelConfig mc{data.train.samples.front().image.dim(0), 2, config.base_width, config.seed};
    ClassifierModel model(mc);

    WeightedSampler sampler =
        WeightedSampler::balanced_by_class(data.train, 2, Rng::mix(config.seed, 1));
    Rng aug_rng(Rng::mix(config.seed, 2));
    const std::vector<int> pool = data.train.unlabeled_indices();
    const StepLrSchedule lr_schedule{config.lr, config.lr_milestones, config.lr_gamma};
    const AugmentConfig aug_cfg;

    LoopState st;
    st.optimizer = make_optimizer(config.optimizer, config.lr, config.momentum);

    const BatchBuilder builder{data.train, config.augment ? &aug_cfg : nullptr, &aug_rng};
    const int labeled_steps =
        resolve_steps(config, static_cast<int>(data.train.labeled_indices().size()));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double alpha = config.ssl ? alpha_at(config.alpha, epoch) : 0.0;
        const double lr = step_lr(lr_schedule, epoch);
        st.optimizer->set_lr(lr);

        const auto pseudo_chunks = chunks(static_cast<int>(st.store.size()), config.batch_size);
        const int pseudo_steps =
            (config.ssl && alpha > 0.0) ? static_cast<int>(pseudo_chunks.size()) : 0;

        double sup_sum = 0.0, pseudo_sum = 0.0;
        int sup_count = 0, pseudo_count = 0;
        for (bool labeled_step : interleave_order(labeled_steps, pseudo_steps)) {
            if (labeled_step) {
                const std::vector<int> idx = sampler.sample_batch(config.batch_size);
                std::vector<Sample> batch;
                for (int i : idx) {
                    batch.push_back(builder.prepared(data.train.samples[static_cast<size_t>(i)], {}, nullptr));
                }
                const Tensor loss = bce(sigmoid(model.forward(stack_images(batch))), stack_labels(batch));
                sup_sum += finite_or_throw(loss.item(), "supervised loss");
                ++sup_count;
                model.zero_grads();
                backward(loss);
                st.optimizer->step(model.parameters());
            } else {
                const auto [lo, hi] = pseudo_chunks[static_cast<size_t>(pseudo_count)];
                std::vector<Sample> batch;
                for (int i = lo; i < hi; ++i) {
                    const auto& entry = st.store.entries[static_cast<size_t>(i)];
                    batch.push_back(builder.prepared(
                        data.train.samples[static_cast<size_t>(entry.sample_index)], entry.label, nullptr));
                }
                const Tensor raw = bce(sigmoid(model.forward(stack_images(batch))), stack_labels(batch));
                pseudo_sum += finite_or_throw(raw.item(), "pseudo loss");
                ++pseudo_count;
                model.zero_grads();
                backward(mul(raw, alpha));
                st.optimizer->step(model.parameters());
            }
        }

        // Alg. 1 line 11: regenerate the store from the current model so the
        // next epoch trains against u_{epoch-1}.
        if (config.ssl && !pool.empty() && epoch >= config.alpha.e_i) {
            const auto sub = subsample_unlabeled(
                static_cast<int>(pool.size()), config.unlabeled_ratio,
                Rng::mix(Rng::mix(config.seed, 3), static_cast<uint64_t>(epoch)));
            std::vector<int> chosen;
            for (int i : sub) chosen.push_back(pool[static_cast<size_t>(i)]);
            st.store = generate_pseudo_labels(model, data.train, chosen, config.batch_size);
        }

        const ClassificationEval eval =
            evaluate_classifier(model, data.val, config.positive_class, config.batch_size);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.alpha = alpha;
        rec.lr = lr;
        rec.optimizer = st.optimizer->kind();
        rec.sup_loss = sup_count > 0 ? sup_sum / sup_count : 0.0;
        rec.pseudo_loss = pseudo_count > 0 ? pseudo_sum / pseudo_count : 0.0;
        rec.total_loss = rec.sup_loss + alpha * rec.pseudo_loss;
        rec.metrics = {{"accuracy", eval.metrics.accuracy},
                       {"precision", eval.metrics.precision},
                       {"recall", eval.metrics.recall},
                       {"f1", eval.metrics.f1}};
        log.records.push_back(std::move(rec));

        if (eval.metrics.f1 > st.best_metric) {
            st.best_metric = eval.metrics.f1;
            st.best_epoch = epoch;
            st.best_params = snapshot_params(model);
        }
    }

    log.best_epoch = st.best_epoch;
    ClassificationResult result{model, ClassifierModel(mc), std::move(log)};
    restore_params(result.best_model, st.best_params);
    return result;
}

SegmentationResult train_segmentation(const ExperimentConfig& config, const DataBundle& data) {
    MetricsLog log;
    log.task = Task::segmentation;
    common_preflight(config, data, log);

    int n_classes = data.n_classes;
    if (config.n_classes > 0) {
        if (config.n_classes < data.n_classes) {
            throw ConfigError("n_classes is smaller than the classes present in the dataset");
        }
        n_classes = config.n_classes;
    }

    ModelConfig mc{data.train.samples.front().image.dim(0), n_classes, config.base_width, config.seed};
    SegmenterModel model(mc);

    WeightedSampler sampler = WeightedSampler::labeled_uniform(data.train, Rng::mix(config.seed, 1));
    Rng aug_rng(Rng::mix(config.seed, 2));
    const std::vector<int> pool = data.train.unlabeled_indices();
    const StepLrSchedule lr_schedule{config.lr, config.lr_milestones, config.lr_gamma};
    const AugmentConfig aug_cfg;

    LoopState st;
    st.optimizer = make_optimizer(config.optimizer, config.lr, config.momentum);

    const BatchBuilder builder{data.train, config.augment ? &aug_cfg : nullptr, &aug_rng};
    const int labeled_steps =
        resolve_steps(config, static_cast<int>(data.train.labeled_indices().size()));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double alpha = config.ssl ? alpha_at(config.alpha, epoch) : 0.0;

        // Pseudo-mask phase: a fresh SGD replaces the supervised optimizer at
        // the first epoch where alpha > 0; moment buffers are not carried over.
        if (alpha > 0.0 && !st.switched_to_pseudo_sgd) {
            st.optimizer = std::make_unique<Sgd>(config.pseudo_lr, config.momentum);
            st.switched_to_pseudo_sgd = true;
        }
        const double lr = st.switched_to_pseudo_sgd ? config.pseudo_lr : step_lr(lr_schedule, epoch);
        st.optimizer->set_lr(lr);

        const auto pseudo_chunks = chunks(static_cast<int>(st.store.size()), config.batch_size);
        const int pseudo_steps =
            (config.ssl && alpha > 0.0) ? static_cast<int>(pseudo_chunks.size()) : 0;

        double sup_sum = 0.0, pseudo_sum = 0.0;
        int sup_count = 0, pseudo_count = 0;
        for (bool labeled_step : interleave_order(labeled_steps, pseudo_steps)) {
            if (labeled_step) {
                const std::vector<int> idx = sampler.sample_batch(config.batch_size);
                std::vector<Sample> batch;
                for (int i : idx) {
                    batch.push_back(builder.prepared(data.train.samples[static_cast<size_t>(i)], {}, nullptr));
                }
                const Tensor loss = combined_seg_loss(model.forward(stack_images(batch)),
                                                      stack_onehot_masks(batch, n_classes),
                                                      config.loss_weights);
                sup_sum += finite_or_throw(loss.item(), "supervised loss");
                ++sup_count;
                model.zero_grads();
                backward(loss);
                st.optimizer->step(model.parameters());
            } else {
                const auto [lo, hi] = pseudo_chunks[static_cast<size_t>(pseudo_count)];
                std::vector<Sample> batch;
                for (int i = lo; i < hi; ++i) {
                    const auto& entry = st.store.entries[static_cast<size_t>(i)];
                    batch.push_back(builder.prepared(
                        data.train.samples[static_cast<size_t>(entry.sample_index)], {}, &entry.mask));
                }
                const Tensor raw = combined_seg_loss(model.forward(stack_images(batch)),
                                                     stack_onehot_masks(batch, n_classes),
                                                     config.loss_weights);
                pseudo_sum += finite_or_throw(raw.item(), "pseudo loss");
                ++pseudo_count;
                model.zero_grads();
                backward(mul(raw, alpha));
                st.optimizer->step(model.parameters());
            }
        }

        if (config.ssl && !pool.empty() && epoch >= config.alpha.e_i) {
            const auto sub = subsample_unlabeled(
                static_cast<int>(pool.size()), config.unlabeled_ratio,
                Rng::mix(Rng::mix(config.seed, 3), static_cast<uint64_t>(epoch)));
            std::vector<int> chosen;
            for (int i : sub) chosen.push_back(pool[static_cast<size_t>(i)]);
            st.store = generate_pseudo_labels(model, data.train, chosen, config.batch_size);
        }

        const SegmentationEval eval = evaluate_segmenter(model, data.val, config.batch_size);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.alpha = alpha;
        rec.lr = lr;
        rec.optimizer = st.optimizer->kind();
        rec.sup_loss = sup_count > 0 ? sup_sum / sup_count : 0.0;
        rec.pseudo_loss = pseudo_count > 0 ? pseudo_sum / pseudo_count : 0.0;
        rec.total_loss = rec.sup_loss + alpha * rec.pseudo_loss;
        rec.metrics = {{"pixel_acc", eval.metrics.pixel_accuracy}, {"miou", eval.metrics.miou}};
        log.records.push_back(std::move(rec));

        if (eval.metrics.miou > st.best_metric) {
            st.best_metric = eval.metrics.miou;
            st.best_epoch = epoch;
            st.best_params = snapshot_params(model);
        }
    }

    log.best_epoch = st.best_epoch;
    SegmentationResult result{model, SegmenterModel(mc), std::move(log)};
    restore_params(result.best_model, st.best_params);
    return result;
}

}  // namespace psl
