#include "psl/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "psl/errors.hpp"
#include "psl/preprocess.hpp"

namespace psl {

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
}

int parse_int(const std::string& key, const std::string& value) {
    int v = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size()) bad_key(key, "expected an integer, got '" + value + "'");
    return v;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    uint64_t v = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size()) bad_key(key, "expected an unsigned integer, got '" + value + "'");
    return v;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        bad_key(key, "expected a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "on" || value == "1") return true;
    if (value == "false" || value == "off" || value == "0") return false;
    bad_key(key, "expected true/false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    if (value.empty()) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig default_config(Task task) {
    ExperimentConfig c;
    c.task = task;
    if (task == Task::segmentation) {
        c.batch_size = 24;
        c.optimizer = OptimizerKind::adam;
        c.lr_milestones = {10, 30, 50};
    }
    return c;
}

void apply_config_kv(ExperimentConfig& c, const std::string& key, const std::string& value) {
    if (key == "task") {
        if (value == "classification") c.task = Task::classification;
        else if (value == "segmentation") c.task = Task::segmentation;
        else bad_key(key, "expected classification or segmentation, got '" + value + "'");
    } else if (key == "epochs") c.epochs = parse_int(key, value);
    else if (key == "alpha_i") c.alpha.alpha_i = parse_double(key, value);
    else if (key == "alpha_f") c.alpha.alpha_f = parse_double(key, value);
    else if (key == "e_i") c.alpha.e_i = parse_int(key, value);
    else if (key == "e_f") c.alpha.e_f = parse_int(key, value);
    else if (key == "batch_size") c.batch_size = parse_int(key, value);
    else if (key == "optimizer") {
        if (value == "sgd") c.optimizer = OptimizerKind::sgd;
        else if (value == "adam") c.optimizer = OptimizerKind::adam;
        else bad_key(key, "expected sgd or adam, got '" + value + "'");
    } else if (key == "lr") c.lr = parse_double(key, value);
    else if (key == "momentum") c.momentum = parse_double(key, value);
    else if (key == "lr_milestones") c.lr_milestones = parse_int_list(key, value);
    else if (key == "lr_gamma") c.lr_gamma = parse_double(key, value);
    else if (key == "pseudo_lr") c.pseudo_lr = parse_double(key, value);
    else if (key == "w_bce") c.loss_weights.w_bce = parse_double(key, value);
    else if (key == "w_dice") c.loss_weights.w_dice = parse_double(key, value);
    else if (key == "dice_smooth") c.loss_weights.dice_smooth = parse_double(key, value);
    else if (key == "unlabeled_ratio") c.unlabeled_ratio = parse_int(key, value);
    else if (key == "steps_per_epoch") c.steps_per_epoch = parse_int(key, value);
    else if (key == "augment") c.augment = parse_bool(key, value);
    else if (key == "ssl") c.ssl = parse_bool(key, value);
    else if (key == "positive_class") c.positive_class = parse_int(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else if (key == "n_classes") c.n_classes = parse_int(key, value);
    else if (key == "base_width") c.base_width = parse_int(key, value);
    else if (key == "resize_to") c.resize_to = parse_int(key, value);
    else if (key == "preprocess") c.preprocess = parse_bool(key, value);
    else if (key == "data_manifest") c.data_manifest = value;
    else if (key == "synth_labeled") c.synth_labeled = parse_int(key, value);
    else if (key == "synth_unlabeled") c.synth_unlabeled = parse_int(key, value);
    else if (key == "synth_val") c.synth_val = parse_int(key, value);
    else if (key == "synth_test") c.synth_test = parse_int(key, value);
    else if (key == "synth_image_size") c.synth_image_size = parse_int(key, value);
    else if (key == "synth_positive_fraction") c.synth_positive_fraction = parse_double(key, value);
    else if (key == "synth_classes") c.synth_classes = parse_int(key, value);
    else if (key == "outdir") c.outdir = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

namespace {

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config " + path + " line " + std::to_string(line_no) +
                              ": expected 'key = value'");
        }
        kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return kv;
}

}  // namespace

ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::vector<std::pair<std::string, std::string>> kv;
    if (!path.empty()) kv = read_config_file(path);
    kv.insert(kv.end(), overrides.begin(), overrides.end());

    // The task decides the defaults, so resolve it first (last setting wins).
    Task task = Task::classification;
    for (const auto& [k, v] : kv) {
        if (k == "task") {
            ExperimentConfig probe;
            apply_config_kv(probe, k, v);
            task = probe.task;
        }
    }
    ExperimentConfig c = default_config(task);
    for (const auto& [k, v] : kv) apply_config_kv(c, k, v);
    validate_config(c);
    return c;
}

void validate_config(const ExperimentConfig& c) {
    if (c.epochs < 1) throw ConfigError("epochs must be > 0");
    if (c.batch_size < 1) throw ConfigError("batch_size must be > 0");
    if (c.alpha.e_i >= c.alpha.e_f) throw ConfigError("e_i < e_f violated");
    if (c.alpha.alpha_i < 0.0 || c.alpha.alpha_i > c.alpha.alpha_f) {
        throw ConfigError("0 <= alpha_i <= alpha_f violated");
    }
    if (c.lr <= 0.0) throw ConfigError("lr must be > 0");
    if (c.pseudo_lr <= 0.0) throw ConfigError("pseudo_lr must be > 0");
    if (c.momentum < 0.0 || c.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (c.lr_gamma <= 0.0 || c.lr_gamma > 1.0) throw ConfigError("lr_gamma must be in (0, 1]");
    for (size_t i = 1; i < c.lr_milestones.size(); ++i) {
        if (c.lr_milestones[i] <= c.lr_milestones[i - 1]) {
            throw ConfigError("lr_milestones must be strictly ascending");
        }
    }
    if (c.loss_weights.w_bce < 0.0 || c.loss_weights.w_dice < 0.0 ||
        c.loss_weights.w_bce + c.loss_weights.w_dice <= 0.0) {
        throw ConfigError("w_bce + w_dice must be > 0 with nonnegative weights");
    }
    if (c.loss_weights.dice_smooth <= 0.0) throw ConfigError("dice_smooth must be > 0");
    if (c.unlabeled_ratio < 1) throw ConfigError("unlabeled_ratio must be >= 1");
    if (c.steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
    if (c.positive_class != 0 && c.positive_class != 1) throw ConfigError("positive_class must be 0 or 1");
    if (c.n_classes < 0) throw ConfigError("n_classes must be >= 0");
    if (c.base_width < 1) throw ConfigError("base_width must be >= 1");
    if (c.resize_to != 0 && (c.resize_to < 4 || c.resize_to % 4 != 0)) {
        throw ConfigError("resize_to must be 0 or a positive multiple of 4");
    }
    if (c.data_manifest.empty()) {
        if (c.synth_labeled < 1 || c.synth_val < 1) {
            throw ConfigError("synthetic data needs synth_labeled >= 1 and synth_val >= 1");
        }
        if (c.synth_unlabeled < 0 || c.synth_test < 0) {
            throw ConfigError("synth_unlabeled and synth_test must be >= 0");
        }
        if (c.synth_image_size < 4 || c.synth_image_size % 4 != 0) {
            throw ConfigError("synth_image_size must be a positive multiple of 4");
        }
        if (c.synth_positive_fraction <= 0.0 || c.synth_positive_fraction >= 1.0) {
            throw ConfigError("synth_positive_fraction must be in (0, 1)");
        }
        if (c.synth_classes < 2) throw ConfigError("synth_classes must be >= 2");
    }
}

std::vector<std::pair<std::string, std::string>> config_kv(const ExperimentConfig& c) {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("task", task_name(c.task));
    kv.emplace_back("epochs", std::to_string(c.epochs));
    kv.emplace_back("alpha_i", fmt_double(c.alpha.alpha_i));
    kv.emplace_back("alpha_f", fmt_double(c.alpha.alpha_f));
    kv.emplace_back("e_i", std::to_string(c.alpha.e_i));
    kv.emplace_back("e_f", std::to_string(c.alpha.e_f));
    kv.emplace_back("batch_size", std::to_string(c.batch_size));
    kv.emplace_back("optimizer", optimizer_kind_name(c.optimizer));
    kv.emplace_back("lr", fmt_double(c.lr));
    kv.emplace_back("momentum", fmt_double(c.momentum));
    kv.emplace_back("lr_milestones", fmt_int_list(c.lr_milestones));
    kv.emplace_back("lr_gamma", fmt_double(c.lr_gamma));
    kv.emplace_back("pseudo_lr", fmt_double(c.pseudo_lr));
    kv.emplace_back("w_bce", fmt_double(c.loss_weights.w_bce));
    kv.emplace_back("w_dice", fmt_double(c.loss_weights.w_dice));
    kv.emplace_back("dice_smooth", fmt_double(c.loss_weights.dice_smooth));
    kv.emplace_back("unlabeled_ratio", std::to_string(c.unlabeled_ratio));
    kv.emplace_back("steps_per_epoch", std::to_string(c.steps_per_epoch));
    kv.emplace_back("augment", c.augment ? "true" : "false");
    kv.emplace_back("ssl", c.ssl ? "true" : "false");
    kv.emplace_back("positive_class", std::to_string(c.positive_class));
    kv.emplace_back("seed", std::to_string(c.seed));
    kv.emplace_back("n_classes", std::to_string(c.n_classes));
    kv.emplace_back("base_width", std::to_string(c.base_width));
    kv.emplace_back("resize_to", std::to_string(c.resize_to));
    kv.emplace_back("preprocess", c.preprocess ? "true" : "false");
    kv.emplace_back("data_manifest", c.data_manifest);
    kv.emplace_back("synth_labeled", std::to_string(c.synth_labeled));
    kv.emplace_back("synth_unlabeled", std::to_string(c.synth_unlabeled));
    kv.emplace_back("synth_val", std::to_string(c.synth_val));
    kv.emplace_back("synth_test", std::to_string(c.synth_test));
    kv.emplace_back("synth_image_size", std::to_string(c.synth_image_size));
    kv.emplace_back("synth_positive_fraction", fmt_double(c.synth_positive_fraction));
    kv.emplace_back("synth_classes", std::to_string(c.synth_classes));
    kv.emplace_back("outdir", c.outdir);
    return kv;
}

std::string serialize_config(const ExperimentConfig& c) {
    std::string out;
    for (const auto& [k, v] : config_kv(c)) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

namespace {

/// Ingestion-time transforms: optional fixed square resize (nearest for
/// masks, so no classes are invented) and the optional segmentation image
/// pipeline. Applied once per sample at load.
void apply_ingestion(DataBundle& bundle, const ExperimentConfig& c) {
    if (c.resize_to == 0 && !c.preprocess) return;
    const bool pipeline = c.preprocess && c.task == Task::segmentation;
    for (Dataset* ds : {&bundle.train, &bundle.val, &bundle.test}) {
        for (Sample& s : ds->samples) {
            if (c.resize_to != 0) {
                s.image = resize(s.image, c.resize_to, c.resize_to, ResizeMode::bilinear);
                if (s.mask) s.mask = resize(*s.mask, c.resize_to, c.resize_to, ResizeMode::nearest);
            }
            if (pipeline) s.image = segmentation_image_pipeline(s.image);
        }
    }
}

}  // namespace

DataBundle load_experiment_data(const ExperimentConfig& c) {
    if (!c.data_manifest.empty()) {
        DataBundle bundle = load_manifest(c.data_manifest);
        if (bundle.task != c.task) {
            throw ConfigError("manifest task (" + task_name(bundle.task) +
                              ") does not match the configured task (" + task_name(c.task) + ")");
        }
        apply_ingestion(bundle, c);
        return bundle;
    }

    DataBundle bundle;
    bundle.task = c.task;
    const int s = c.synth_image_size;
    if (c.task == Task::classification) {
        bundle.n_classes = 2;
        bundle.train = gen_synthetic_classification(c.synth_labeled, c.synth_positive_fraction, s,
                                                    Rng::mix(c.seed, 10), true, "train");
        if (c.synth_unlabeled > 0) {
            Dataset unl = gen_synthetic_classification(c.synth_unlabeled, c.synth_positive_fraction,
                                                       s, Rng::mix(c.seed, 11), false, "unl");
            for (auto& smp : unl.samples) bundle.train.samples.push_back(std::move(smp));
        }
        bundle.val = gen_synthetic_classification(c.synth_val, c.synth_positive_fraction, s,
                                                  Rng::mix(c.seed, 12), true, "val");
        if (c.synth_test > 0) {
            bundle.test = gen_synthetic_classification(c.synth_test, c.synth_positive_fraction, s,
                                                       Rng::mix(c.seed, 13), true, "test");
        }
    } else {
        bundle.n_classes = c.synth_classes;
        bundle.train = gen_synthetic_segmentation(c.synth_labeled, c.synth_classes, s,
                                                  Rng::mix(c.seed, 10), true, "train");
        if (c.synth_unlabeled > 0) {
            Dataset unl = gen_synthetic_segmentation(c.synth_unlabeled, c.synth_classes, s,
                                                     Rng::mix(c.seed, 11), false, "unl");
            for (auto& smp : unl.samples) bundle.train.samples.push_back(std::move(smp));
        }
        bundle.val = gen_synthetic_segmentation(c.synth_val, c.synth_classes, s,
                                                Rng::mix(c.seed, 12), true, "val");
        if (c.synth_test > 0) {
            bundle.test = gen_synthetic_segmentation(c.synth_test, c.synth_classes, s,
                                                     Rng::mix(c.seed, 13), true, "test");
        }
    }
    for (Dataset* ds : {&bundle.train, &bundle.val, &bundle.test}) {
        ds->task = bundle.task;
        ds->n_classes = bundle.n_classes;
    }
    bundle.val.split = Split::val;
    bundle.test.split = Split::test;
    apply_ingestion(bundle, c);
    return bundle;
}

}  // namespace psl
