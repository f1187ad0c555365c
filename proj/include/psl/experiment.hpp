#pragma once

#include <string>
#include <utility>
#include <vector>

#include "psl/trainer.hpp"

namespace psl {

/// Per-task defaults: classification runs SGD at batch 64 with no LR decay;
/// segmentation runs Adam at batch 24 with milestones {10,30,50}, gamma 0.1,
/// and switches to SGD(0.01) for the pseudo-mask phase. Everything else is
/// shared: alpha ramp (0 -> 1 over epochs 10..135), BCE/Dice weights 0.5/0.5,
/// unlabeled ratio 1:10.
ExperimentConfig default_config(Task task);

/// Apply one `key = value` setting; unknown keys and unparsable values throw
/// ConfigError naming the key.
void apply_config_kv(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` config file plus ordered overrides (later wins).
/// Missing keys keep the task defaults. The result is validated.
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

void validate_config(const ExperimentConfig& config);

/// Full key = value text of a resolved config, fixed key order; parsing it
/// back reproduces the config exactly.
std::string serialize_config(const ExperimentConfig& config);

/// All keys and values as ordered pairs (used for the JSON echo).
std::vector<std::pair<std::string, std::string>> config_kv(const ExperimentConfig& config);

/// The dataset named by the config: a manifest when given, otherwise the
/// synthetic bundle described by the synth_* keys (split seeds derived from
/// the config seed).
DataBundle load_experiment_data(const ExperimentConfig& config);

}  // namespace psl
