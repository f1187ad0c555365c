#include "psl/report.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "psl/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace psl {

std::string fmt_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

namespace {

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("short write on " + path);
}

json metrics_to_json(const std::vector<std::pair<std::string, double>>& metrics) {
    json j = json::object();
    for (const auto& [k, v] : metrics) j[k] = v;
    return j;
}

std::string per_class_iou_csv(const SegmentationMetrics& final_m,
                              const SegmentationMetrics* best_m, int n_classes) {
    std::ostringstream os;
    os << "checkpoint";
    for (const auto& name : class_column_names(n_classes)) os << ',' << name;
    os << ",miou\n";
    auto row = [&](const char* tag, const SegmentationMetrics& m) {
        os << tag;
        for (double v : m.per_class_iou) os << ',' << fmt_double(v);
        os << ',' << fmt_double(m.miou) << "\n";
    };
    row("final", final_m);
    if (best_m) row("best", *best_m);
    return os.str();
}

}  // namespace

std::string metrics_csv_text(const MetricsLog& log) {
    if (log.records.empty()) throw ConfigError("metrics log is empty (no completed epochs)");
    std::ostringstream os;
    os << "epoch,alpha,lr,optimizer,sup_loss,pseudo_loss,total_loss";
    for (const auto& [name, _] : log.records.front().metrics) os << ',' << name;
    os << "\n";
    for (const EpochRecord& r : log.records) {
        os << r.epoch << ',' << fmt_double(r.alpha) << ',' << fmt_double(r.lr) << ','
           << optimizer_kind_name(r.optimizer) << ',' << fmt_double(r.sup_loss) << ','
           << fmt_double(r.pseudo_loss) << ',' << fmt_double(r.total_loss);
        for (const auto& [_, v] : r.metrics) os << ',' << fmt_double(v);
        os << "\n";
    }
    return os.str();
}

void write_outputs(const RunOutputs& outputs, const std::string& dir) {
    if (outputs.log.records.empty()) {
        throw ConfigError("refusing to write outputs for an empty metrics log");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);

    write_text_file((fs::path(dir) / "metrics.csv").string(), metrics_csv_text(outputs.log));
    write_text_file((fs::path(dir) / "resolved_config.cfg").string(),
                    serialize_config(outputs.config));

    const EpochRecord& final_rec = outputs.log.records.back();
    const int best_epoch = outputs.log.best_epoch;

    json j;
    j["task"] = task_name(outputs.log.task);
    json cfg = json::object();
    for (const auto& [k, v] : config_kv(outputs.config)) cfg[k] = v;
    j["config"] = cfg;
    j["epochs_completed"] = outputs.log.records.size();
    j["final"] = {{"epoch", final_rec.epoch}, {"val", metrics_to_json(final_rec.metrics)}};
    if (best_epoch >= 0) {
        j["best"] = {{"epoch", best_epoch},
                     {"val", metrics_to_json(outputs.log.records[static_cast<size_t>(best_epoch)].metrics)}};
    }
    if (outputs.test_final) j["final"]["test"] = metrics_to_json(*outputs.test_final);
    if (outputs.test_best) j["best"]["test"] = metrics_to_json(*outputs.test_best);
    j["notes"] = outputs.log.notes;
    write_text_file((fs::path(dir) / "summary.json").string(), j.dump(2) + "\n");

    if (outputs.seg_final) {
        const int n = static_cast<int>(outputs.seg_final->per_class_iou.size());
        write_text_file((fs::path(dir) / "per_class_iou.csv").string(),
                        per_class_iou_csv(*outputs.seg_final,
                                          outputs.seg_best ? &*outputs.seg_best : nullptr, n));
    }
}

namespace {

std::string render_metric_block(const json& j) {
    std::ostringstream os;
    for (auto it = j.begin(); it != j.end(); ++it) {
        os << "  " << std::left << std::setw(12) << it.key() << " "
           << fmt_double(it.value().get<double>()) << "\n";
    }
    return os.str();
}

}  // namespace

std::string render_report(const std::string& run_dir) {
    const fs::path summary_path = fs::path(run_dir) / "summary.json";
    std::ifstream in(summary_path);
    if (!in) throw IoError("no summary.json under " + run_dir);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("cannot parse " + summary_path.string() + ": " + e.what());
    }

    std::ostringstream os;
    os << "run: " << run_dir << "\n";
    os << "task: " << j.value("task", "?") << "\n";
    os << "epochs: " << j.value("epochs_completed", 0) << "\n\n";
    if (j.contains("final")) {
        os << "final (epoch " << j["final"].value("epoch", -1) << ") validation:\n"
           << render_metric_block(j["final"]["val"]);
        if (j["final"].contains("test")) os << "final test:\n" << render_metric_block(j["final"]["test"]);
    }
    if (j.contains("best")) {
        os << "best (epoch " << j["best"].value("epoch", -1) << ") validation:\n"
           << render_metric_block(j["best"]["val"]);
        if (j["best"].contains("test")) os << "best test:\n" << render_metric_block(j["best"]["test"]);
    }

    const fs::path iou_path = fs::path(run_dir) / "per_class_iou.csv";
    if (fs::exists(iou_path)) {
        std::ifstream iou(iou_path);
        std::string header, line;
        std::getline(iou, header);
        os << "\nper-class IoU:\n";
        std::vector<std::string> cols;
        {
            std::stringstream ss(header);
            std::string c;
            while (std::getline(ss, c, ',')) cols.push_back(c);
        }
        while (std::getline(iou, line)) {
            std::stringstream ss(line);
            std::string c;
            size_t i = 0;
            while (std::getline(ss, c, ',')) {
                if (i < cols.size()) os << "  " << std::left << std::setw(22) << cols[i] << " " << c << "\n";
                ++i;
            }
            os << "\n";
        }
    }
    if (j.contains("notes")) {
        for (const auto& n : j["notes"]) os << "note: " << n.get<std::string>() << "\n";
    }
    return os.str();
}

}  // namespace psl
