#pragma once

#include <optional>
#include <string>

#include "psl/experiment.hpp"
#include "psl/metrics.hpp"
#include "psl/trainer.hpp"

namespace psl {

/// Shortest round-trip decimal form; identical runs produce identical bytes.
std::string fmt_double(double v);

struct RunOutputs {
    ExperimentConfig config;
    MetricsLog log;
    // test-split metrics of the final / best checkpoints (absent when the
    // dataset has no test split)
    std::optional<std::vector<std::pair<std::string, double>>> test_final;
    std::optional<std::vector<std::pair<std::string, double>>> test_best;
    // segmentation per-class IoU rows
    std::optional<SegmentationMetrics> seg_final;
    std::optional<SegmentationMetrics> seg_best;
};

/// Write metrics.csv, summary.json, resolved_config.cfg and (segmentation)
/// per_class_iou.csv into `dir`. Throws on an empty log; never leaves empty
/// files behind.
void write_outputs(const RunOutputs& outputs, const std::string& dir);

std::string metrics_csv_text(const MetricsLog& log);

/// Human-readable rendering of a run directory written by write_outputs.
std::string render_report(const std::string& run_dir);

}  // namespace psl
