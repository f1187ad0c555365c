#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psl/errors.hpp"
#include "psl/experiment.hpp"
#include "psl/report.hpp"
#include "psl/trainer.hpp"

using namespace psl;

namespace {

/// Tiny in-memory classification bundle for fast loop tests.
DataBundle tiny_cls_bundle(int labeled, int unlabeled, int val, uint64_t seed) {
    ExperimentConfig gen = default_config(Task::classification);
    gen.seed = seed;
    gen.synth_labeled = labeled;
    gen.synth_unlabeled = unlabeled;
    gen.synth_val = val;
    gen.synth_test = 0;
    gen.synth_image_size = 8;
    gen.synth_positive_fraction = 0.5;
    return load_experiment_data(gen);
}

DataBundle tiny_seg_bundle(int labeled, int unlabeled, int val, uint64_t seed) {
    ExperimentConfig gen = default_config(Task::segmentation);
    gen.seed = seed;
    gen.synth_labeled = labeled;
    gen.synth_unlabeled = unlabeled;
    gen.synth_val = val;
    gen.synth_test = 0;
    gen.synth_image_size = 8;
    gen.synth_classes = 3;
    return load_experiment_data(gen);
}

ExperimentConfig tiny_cls_config() {
    ExperimentConfig c = default_config(Task::classification);
    c.epochs = 4;
    c.alpha = {0.0, 1.0, 1, 3};
    c.batch_size = 4;
    c.steps_per_epoch = 2;
    c.augment = false;
    c.unlabeled_ratio = 2;
    c.seed = 5;
    return c;
}

ExperimentConfig tiny_seg_config() {
    ExperimentConfig c = default_config(Task::segmentation);
    c.epochs = 4;
    c.alpha = {0.0, 1.0, 1, 3};
    c.batch_size = 4;
    c.steps_per_epoch = 2;
    c.augment = false;
    c.unlabeled_ratio = 2;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("alpha schedule values") {
    const AlphaSchedule s{0.0, 1.0, 10, 135};
    CHECK(alpha_at(s, 5) == 0.0);
    CHECK(alpha_at(s, 10) == 0.0);  // continuous at the ramp start
    CHECK(std::abs(alpha_at(s, 72) - 62.0 / 125.0) < 1e-12);
    CHECK(alpha_at(s, 135) == 1.0);
    CHECK(alpha_at(s, 200) == 1.0);
    CHECK_THROWS_AS(alpha_at(s, -1), std::invalid_argument);
    CHECK_THROWS_AS(alpha_at(AlphaSchedule{0.0, 1.0, 135, 10}, 0), std::invalid_argument);
    CHECK_THROWS_AS(alpha_at(AlphaSchedule{2.0, 1.0, 10, 135}, 0), std::invalid_argument);
}

TEST_CASE("alpha schedule is continuous and non-decreasing") {
    const AlphaSchedule s{0.2, 0.9, 3, 40};
    double prev = alpha_at(s, 0);
    CHECK(prev == 0.2);
    for (int e = 1; e <= 60; ++e) {
        const double a = alpha_at(s, e);
        CHECK(a >= prev);
        CHECK(a - prev <= (0.9 - 0.2) / 37.0 + 1e-12);  // no jumps beyond one ramp step
        prev = a;
    }
    CHECK(prev == 0.9);
}

TEST_CASE("pseudo-label generation basics") {
    DataBundle data = tiny_cls_bundle(4, 6, 2, 11);
    ClassifierModel model({3, 2, 8, 3});
    const auto pool = data.train.unlabeled_indices();
    PseudoLabelStore store = generate_pseudo_labels(model, data.train, pool, 4);
    CHECK(store.size() == pool.size());
    for (size_t i = 0; i < store.entries.size(); ++i) {
        const auto& e = store.entries[i];
        CHECK(e.sample_index == pool[i]);
        CHECK((e.label == 0 || e.label == 1));
        CHECK(e.id == data.train.samples[static_cast<size_t>(e.sample_index)].id);
    }

    // no gradients recorded during generation
    for (const auto& p : model.parameters()) CHECK_FALSE(p.has_grad());

    DataBundle seg = tiny_seg_bundle(4, 6, 2, 12);
    SegmenterModel smodel({3, 3, 8, 3});
    PseudoLabelStore sstore = generate_pseudo_labels(smodel, seg.train, seg.train.unlabeled_indices(), 4);
    CHECK(sstore.size() == 6);
    for (const auto& e : sstore.entries) {
        CHECK(e.mask.shape() == Shape{8, 8});
        for (double v : e.mask.data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 2.0);
        }
    }
}

TEST_CASE("classification training loop structure") {
    DataBundle data = tiny_cls_bundle(8, 6, 4, 31);
    ExperimentConfig cfg = tiny_cls_config();
    ClassificationResult result = train_classification(cfg, data);

    REQUIRE(result.log.records.size() == 4);
    for (int e = 0; e < 4; ++e) {
        const EpochRecord& r = result.log.records[static_cast<size_t>(e)];
        CHECK(r.epoch == e);
        CHECK(r.alpha == alpha_at(cfg.alpha, e));
        CHECK(r.optimizer == OptimizerKind::sgd);
        // composite identity at every epoch
        CHECK(std::abs(r.total_loss - (r.sup_loss + r.alpha * r.pseudo_loss)) < 1e-12);
    }
    // alpha == 0 before the ramp: no pseudo loss; ramp active afterwards
    CHECK(result.log.records[0].pseudo_loss == 0.0);
    CHECK(result.log.records[1].pseudo_loss == 0.0);  // alpha_at(1) == alpha_i == 0
    CHECK(result.log.records[2].pseudo_loss > 0.0);   // store filled at end of epoch 1
    CHECK(result.log.best_epoch >= 0);
}

TEST_CASE("forcing alpha to zero reproduces the supervised run bit for bit") {
    DataBundle data = tiny_cls_bundle(8, 6, 4, 77);
    ExperimentConfig ssl_arm = tiny_cls_config();
    ssl_arm.alpha = {0.0, 0.0, 1, 3};  // alpha forced to zero for every epoch
    ssl_arm.ssl = true;
    ExperimentConfig sup_arm = ssl_arm;
    sup_arm.ssl = false;

    ClassificationResult a = train_classification(ssl_arm, data);
    ClassificationResult b = train_classification(sup_arm, data);
    CHECK(metrics_csv_text(a.log) == metrics_csv_text(b.log));

    // segmentation path
    DataBundle seg = tiny_seg_bundle(6, 4, 3, 78);
    ExperimentConfig sseg = tiny_seg_config();
    sseg.alpha.alpha_f = 0.0;
    sseg.ssl = true;
    ExperimentConfig sseg_sup = sseg;
    sseg_sup.ssl = false;
    SegmentationResult sa = train_segmentation(sseg, seg);
    SegmentationResult sb = train_segmentation(sseg_sup, seg);
    CHECK(metrics_csv_text(sa.log) == metrics_csv_text(sb.log));
}

TEST_CASE("training twice with the same seed is identical") {
    DataBundle data = tiny_cls_bundle(8, 6, 4, 13);
    ExperimentConfig cfg = tiny_cls_config();
    ClassificationResult a = train_classification(cfg, data);
    ClassificationResult b = train_classification(cfg, data);
    CHECK(metrics_csv_text(a.log) == metrics_csv_text(b.log));
    for (size_t i = 0; i < a.final_model.parameters().size(); ++i) {
        const auto pa = a.final_model.parameters()[i].data();
        const auto pb = b.final_model.parameters()[i].data();
        for (size_t j = 0; j < pa.size(); ++j) CHECK(pa[j] == pb[j]);
    }
}

TEST_CASE("segmentation optimizer switches to sgd at the first positive alpha") {
    DataBundle data = tiny_seg_bundle(6, 4, 3, 41);
    ExperimentConfig cfg = tiny_seg_config();
    cfg.epochs = 5;
    cfg.alpha = {0.0, 1.0, 2, 4};
    SegmentationResult result = train_segmentation(cfg, data);

    REQUIRE(result.log.records.size() == 5);
    for (const EpochRecord& r : result.log.records) {
        if (r.alpha == 0.0) {
            CHECK(r.optimizer == OptimizerKind::adam);
        } else {
            CHECK(r.optimizer == OptimizerKind::sgd);
            CHECK(r.lr == 0.01);
        }
    }
    // alpha_at(2) == 0, so the switch lands exactly at epoch 3
    CHECK(result.log.records[2].optimizer == OptimizerKind::adam);
    CHECK(result.log.records[3].optimizer == OptimizerKind::sgd);
}

TEST_CASE("adam phase follows the step-lr schedule") {
    DataBundle data = tiny_seg_bundle(6, 0, 3, 43);
    ExperimentConfig cfg = tiny_seg_config();
    cfg.ssl = false;
    cfg.epochs = 4;
    cfg.lr = 0.01;
    cfg.lr_milestones = {2};
    cfg.lr_gamma = 0.1;
    SegmentationResult result = train_segmentation(cfg, data);
    CHECK(result.log.records[0].lr == 0.01);
    CHECK(result.log.records[1].lr == 0.01);
    CHECK(result.log.records[2].lr == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(result.log.records[3].lr == doctest::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("empty unlabeled pool degrades to supervised training with a note") {
    DataBundle data = tiny_cls_bundle(8, 0, 4, 15);
    ExperimentConfig cfg = tiny_cls_config();
    ClassificationResult result = train_classification(cfg, data);
    REQUIRE(result.log.notes.size() == 1);
    CHECK(result.log.notes[0].find("unlabeled pool is empty") != std::string::npos);
    for (const EpochRecord& r : result.log.records) CHECK(r.pseudo_loss == 0.0);
}

TEST_CASE("training preconditions") {
    ExperimentConfig cfg = tiny_cls_config();
    // single-class labeled data trips the sampler
    DataBundle data = tiny_cls_bundle(8, 2, 4, 17);
    for (auto& s : data.train.samples) {
        if (s.labeled) s.label = 0;
    }
    CHECK_THROWS_AS(train_classification(cfg, data), std::invalid_argument);

    DataBundle noval = tiny_cls_bundle(8, 2, 1, 19);
    noval.val.samples.clear();
    CHECK_THROWS_AS(train_classification(cfg, noval), ConfigError);
}

TEST_CASE("evaluate is deterministic and rejects unlabeled samples") {
    DataBundle data = tiny_cls_bundle(4, 2, 4, 23);
    ClassifierModel model({3, 2, 8, 2});
    const ClassificationEval a = evaluate_classifier(model, data.val, 1);
    const ClassificationEval b = evaluate_classifier(model, data.val, 1);
    CHECK(a.metrics.accuracy == b.metrics.accuracy);
    CHECK(a.cm.total() == static_cast<int64_t>(data.val.size()));

    Dataset bad = data.val;
    bad.samples.front().labeled = false;
    CHECK_THROWS_AS(evaluate_classifier(model, bad, 1), std::invalid_argument);
}

TEST_CASE("perfect model evaluates to perfect metrics") {
    // a mask-echo check through the segmentation metrics path: evaluate the
    // model against its own argmax predictions used as ground truth
    DataBundle data = tiny_seg_bundle(2, 0, 2, 29);
    SegmenterModel model({3, 3, 8, 4});
    PseudoLabelStore store = generate_pseudo_labels(model, data.val, {0, 1}, 2);
    Dataset echo = data.val;
    for (size_t i = 0; i < echo.samples.size(); ++i) echo.samples[i].mask = store.entries[i].mask;
    const SegmentationEval eval = evaluate_segmenter(model, echo);
    CHECK(eval.metrics.pixel_accuracy == 1.0);
    for (int c = 0; c < 3; ++c) {
        // every class present in the echo masks must score IoU 1
        if (eval.metrics.iou_defined[static_cast<size_t>(c)]) {
            CHECK(eval.metrics.per_class_iou[static_cast<size_t>(c)] == 1.0);
        }
    }
    CHECK(eval.metrics.miou > 0.0);
}
