#include "psl/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "psl/errors.hpp"
#include "psl/experiment.hpp"
#include "psl/report.hpp"

namespace fs = std::filesystem;

namespace psl {

namespace {

std::vector<std::pair<std::string, std::string>> parse_set_flags(const std::vector<std::string>& sets) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const std::string& s : sets) {
        const size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return out;
}

struct TrainFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<uint64_t> seed;
    std::optional<std::string> outdir;
    std::optional<std::string> data;
    std::optional<double> alpha_i, alpha_f;
    std::optional<int> e_i, e_f, epochs, batch_size;
    std::optional<double> lr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key = value config file");
        cmd->add_option("--set", sets, "override a config key (key=value, repeatable)");
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_option("--outdir", outdir, "output directory");
        cmd->add_option("--data", data, "dataset manifest path");
        cmd->add_option("--alpha-i", alpha_i, "initial pseudo-loss weight");
        cmd->add_option("--alpha-f", alpha_f, "final pseudo-loss weight");
        cmd->add_option("--e-i", e_i, "ramp start epoch");
        cmd->add_option("--e-f", e_f, "ramp end epoch");
        cmd->add_option("--epochs", epochs, "total training epochs");
        cmd->add_option("--batch-size", batch_size, "batch size");
        cmd->add_option("--lr", lr, "base learning rate");
    }

    std::vector<std::pair<std::string, std::string>> overrides(Task task) const {
        auto out = parse_set_flags(sets);
        // named flags win over --set
        out.emplace_back("task", task_name(task));
        if (seed) out.emplace_back("seed", std::to_string(*seed));
        if (outdir) out.emplace_back("outdir", *outdir);
        if (data) out.emplace_back("data_manifest", *data);
        if (alpha_i) out.emplace_back("alpha_i", fmt_double(*alpha_i));
        if (alpha_f) out.emplace_back("alpha_f", fmt_double(*alpha_f));
        if (e_i) out.emplace_back("e_i", std::to_string(*e_i));
        if (e_f) out.emplace_back("e_f", std::to_string(*e_f));
        if (epochs) out.emplace_back("epochs", std::to_string(*epochs));
        if (batch_size) out.emplace_back("batch_size", std::to_string(*batch_size));
        if (lr) out.emplace_back("lr", fmt_double(*lr));
        return out;
    }
};

std::vector<std::pair<std::string, double>> cls_metric_pairs(const ClassificationMetrics& m) {
    return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

std::vector<std::pair<std::string, double>> seg_metric_pairs(const SegmentationMetrics& m) {
    return {{"pixel_acc", m.pixel_accuracy}, {"miou", m.miou}};
}

int run_training(Task task, const TrainFlags& flags) {
    ExperimentConfig config = parse_config(flags.config_path, flags.overrides(task));
    if (config.task != task) throw ConfigError("config task conflicts with the chosen subcommand");
    if (config.outdir.empty()) {
        config.outdir = task == Task::classification ? "out-train-cls" : "out-train-seg";
    }

    const DataBundle data = load_experiment_data(config);

    RunOutputs out;
    out.config = config;
    if (task == Task::classification) {
        ClassificationResult result = train_classification(config, data);
        out.log = result.log;
        if (!data.test.samples.empty()) {
            out.test_final = cls_metric_pairs(
                evaluate_classifier(result.final_model, data.test, config.positive_class, config.batch_size).metrics);
            out.test_best = cls_metric_pairs(
                evaluate_classifier(result.best_model, data.test, config.positive_class, config.batch_size).metrics);
        }
        write_outputs(out, config.outdir);
        save_checkpoint((fs::path(config.outdir) / "ckpt_final").string(), result.final_model);
        save_checkpoint((fs::path(config.outdir) / "ckpt_best").string(), result.best_model);
    } else {
        SegmentationResult result = train_segmentation(config, data);
        out.log = result.log;
        const Dataset& score_split = data.test.samples.empty() ? data.val : data.test;
        const SegmentationEval final_eval = evaluate_segmenter(result.final_model, score_split, config.batch_size);
        const SegmentationEval best_eval = evaluate_segmenter(result.best_model, score_split, config.batch_size);
        out.seg_final = final_eval.metrics;
        out.seg_best = best_eval.metrics;
        if (!data.test.samples.empty()) {
            out.test_final = seg_metric_pairs(final_eval.metrics);
            out.test_best = seg_metric_pairs(best_eval.metrics);
        }
        write_outputs(out, config.outdir);
        save_checkpoint((fs::path(config.outdir) / "ckpt_final").string(), result.final_model);
        save_checkpoint((fs::path(config.outdir) / "ckpt_best").string(), result.best_model);
    }

    const EpochRecord& last = out.log.records.back();
    std::cout << "run complete: " << config.outdir << "\n";
    for (const auto& [k, v] : last.metrics) std::cout << "  val " << k << " = " << fmt_double(v) << "\n";
    return 0;
}

int run_gen_data(const std::string& task_s, const std::string& outdir, int n, int unlabeled,
                 int val, int test, int classes, int size, double positive_fraction,
                 uint64_t seed) {
    if (task_s != "cls" && task_s != "seg") throw ConfigError("gen-data --task must be cls or seg");
    const Task task = task_s == "cls" ? Task::classification : Task::segmentation;

    ExperimentConfig gen = default_config(task);
    gen.seed = seed;
    gen.synth_labeled = n;
    gen.synth_unlabeled = unlabeled;
    gen.synth_val = val > 0 ? val : 1;  // loader requires >= 1 labeled val only for training
    gen.synth_test = test;
    gen.synth_image_size = size;
    gen.synth_positive_fraction = positive_fraction;
    gen.synth_classes = classes;
    DataBundle bundle = load_experiment_data(gen);
    if (val == 0) bundle.val.samples.clear();

    const std::string manifest = save_dataset(bundle, outdir);
    std::cout << "wrote " << manifest << "\n";
    return 0;
}

int run_eval(const std::string& task_s, const std::string& data_path, const std::string& split_s,
             const std::string& checkpoint, std::optional<uint64_t> fresh_seed, int positive_class,
             const std::string& outdir) {
    if (task_s != "cls" && task_s != "seg") throw ConfigError("eval --task must be cls or seg");
    const Task task = task_s == "cls" ? Task::classification : Task::segmentation;
    if (checkpoint.empty() == !fresh_seed) {
        throw ConfigError("eval needs exactly one of --checkpoint or --fresh-seed");
    }

    const DataBundle bundle = load_manifest(data_path);
    if (bundle.task != task) throw ConfigError("manifest task does not match eval --task");
    const Dataset* split = nullptr;
    if (split_s == "train") split = &bundle.train;
    else if (split_s == "val") split = &bundle.val;
    else if (split_s == "test") split = &bundle.test;
    else throw ConfigError("eval --split must be train, val or test");
    if (split->samples.empty()) throw ConfigError("split '" + split_s + "' is empty");

    std::cout << "split: " << split_s << " (" << split->samples.size() << " samples)\n";
    if (task == Task::classification) {
        ClassifierModel model = checkpoint.empty()
            ? ClassifierModel({split->samples.front().image.dim(0), 2, 8, *fresh_seed})
            : load_classifier_checkpoint(checkpoint);
        const ClassificationEval eval = evaluate_classifier(model, *split, positive_class);
        for (const auto& [k, v] : cls_metric_pairs(eval.metrics)) {
            std::cout << k << " = " << fmt_double(v) << "\n";
        }
        if (!outdir.empty()) {
            RunOutputs out;
            // one-record pseudo-log so eval reuses the run writers
            EpochRecord rec;
            rec.metrics = cls_metric_pairs(eval.metrics);
            out.log.task = task;
            out.log.records.push_back(rec);
            out.log.best_epoch = 0;
            out.config = default_config(task);
            out.config.data_manifest = data_path;
            out.config.outdir = outdir;
            write_outputs(out, outdir);
        }
    } else {
        SegmenterModel model = checkpoint.empty()
            ? SegmenterModel({split->samples.front().image.dim(0), bundle.n_classes, 8, *fresh_seed})
            : load_segmenter_checkpoint(checkpoint);
        const SegmentationEval eval = evaluate_segmenter(model, *split);
        for (const auto& [k, v] : seg_metric_pairs(eval.metrics)) {
            std::cout << k << " = " << fmt_double(v) << "\n";
        }
        const auto names = class_column_names(split->n_classes);
        for (size_t c = 0; c < names.size(); ++c) {
            std::cout << "iou " << names[c] << " = " << fmt_double(eval.metrics.per_class_iou[c]) << "\n";
        }
        if (!outdir.empty()) {
            RunOutputs out;
            EpochRecord rec;
            rec.metrics = seg_metric_pairs(eval.metrics);
            out.log.task = task;
            out.log.records.push_back(rec);
            out.log.best_epoch = 0;
            out.config = default_config(task);
            out.config.data_manifest = data_path;
            out.config.outdir = outdir;
            out.seg_final = eval.metrics;
            write_outputs(out, outdir);
        }
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"semi-supervised pseudo-label training engine"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic PNM dataset");
    std::string gen_task = "cls", gen_out = "dataset";
    int gen_n = 64, gen_unlabeled = 0, gen_val = 0, gen_test = 0, gen_classes = 10, gen_size = 32;
    double gen_posfrac = 51.0 / 398.0;
    uint64_t gen_seed = 0;
    gen->add_option("--task", gen_task, "cls or seg")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n", gen_n, "labeled train samples");
    gen->add_option("--unlabeled", gen_unlabeled, "unlabeled train samples");
    gen->add_option("--val", gen_val, "validation samples");
    gen->add_option("--test", gen_test, "test samples");
    gen->add_option("--classes", gen_classes, "segmentation classes");
    gen->add_option("--size", gen_size, "square image size");
    gen->add_option("--positive-fraction", gen_posfrac, "classification positive fraction");
    gen->add_option("--seed", gen_seed, "generator seed");

    // train-cls / train-seg
    auto* train_cls = app.add_subcommand("train-cls", "semi-supervised classification training");
    TrainFlags cls_flags;
    cls_flags.attach(train_cls);
    auto* train_seg = app.add_subcommand("train-seg", "semi-supervised segmentation training");
    TrainFlags seg_flags;
    seg_flags.attach(train_seg);

    // eval
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset split");
    std::string eval_task, eval_data, eval_split = "test", eval_ckpt, eval_out;
    std::optional<uint64_t> eval_fresh;
    int eval_pos = 1;
    eval->add_option("--task", eval_task, "cls or seg")->required();
    eval->add_option("--data", eval_data, "dataset manifest")->required();
    eval->add_option("--split", eval_split, "train, val or test");
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint path");
    eval->add_option("--fresh-seed", eval_fresh, "evaluate an untrained seeded model instead");
    eval->add_option("--positive-class", eval_pos, "positive class for F1");
    eval->add_option("--outdir", eval_out, "also write the report files here");

    // report
    auto* report = app.add_subcommand("report", "render a run directory as a table");
    std::string report_run;
    report->add_option("--run", report_run, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            return run_gen_data(gen_task, gen_out, gen_n, gen_unlabeled, gen_val, gen_test,
                                gen_classes, gen_size, gen_posfrac, gen_seed);
        }
        if (train_cls->parsed()) return run_training(Task::classification, cls_flags);
        if (train_seg->parsed()) return run_training(Task::segmentation, seg_flags);
        if (eval->parsed()) {
            return run_eval(eval_task, eval_data, eval_split, eval_ckpt, eval_fresh, eval_pos, eval_out);
        }
        if (report->parsed()) {
            std::cout << render_report(report_run);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace psl
