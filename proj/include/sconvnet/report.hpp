#pragma once

// On-disk reports: per-fold confusion CSVs, per-subject JSON summaries, fold
// splits, cross-subject aggregates, an SVG bar chart and the parameter-count
// table.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include <json.hpp>

#include "sconvnet/cv.hpp"
#include "sconvnet/models.hpp"

namespace sconvnet::report {

using json = nlohmann::ordered_json;

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw DataError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

[[nodiscard]] inline std::string fold_csv_name(std::size_t held_out_trial) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "fold_%02zu_confusion.csv", held_out_trial + 1);
    return buf;
}

/// Rows are true gestures, columns predictions, both 1-based.
[[nodiscard]] inline std::string confusion_csv(std::size_t classes, const std::vector<std::uint64_t>& m) {
    std::ostringstream ss;
    ss << "true\\predicted";
    for (std::size_t j = 0; j < classes; ++j) ss << ',' << j + 1;
    ss << '\n';
    for (std::size_t i = 0; i < classes; ++i) {
        ss << i + 1;
        for (std::size_t j = 0; j < classes; ++j) ss << ',' << m[i * classes + j];
        ss << '\n';
    }
    return ss.str();
}

struct Confusion {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;
};

[[nodiscard]] inline Confusion parse_confusion_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("confusion csv: empty");
    Confusion c;
    c.classes = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    for (std::size_t i = 0; i < c.classes; ++i) {
        if (!std::getline(in, line)) throw FormatError("confusion csv: missing row " + std::to_string(i + 1));
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        for (std::size_t j = 0; j < c.classes; ++j) {
            if (!std::getline(row, cell, ',')) throw FormatError("confusion csv: short row " + std::to_string(i + 1));
            try {
                c.counts.push_back(std::stoull(cell));
            } catch (const std::exception&) {
                throw FormatError("confusion csv: bad count '" + cell + "' in row " + std::to_string(i + 1));
            }
        }
    }
    return c;
}

[[nodiscard]] inline json fold_json(const cv::FoldResult& f) {
    json j;
    j["held_out_trial"] = f.held_out_trial + 1;
    j["accuracy"] = f.accuracy;
    j["correct"] = f.correct;
    j["total"] = f.total;
    j["epochs"] = f.epochs;
    j["best_epoch"] = f.best_epoch;
    j["best_validation_loss"] = f.best_validation_loss;
    j["confusion"] = f.confusion;
    return j;
}

/// Everything here is a deterministic function of the data and the
/// experiment settings; timing lives in a separate file.
[[nodiscard]] inline json summary_json(const cv::SubjectReport& s, const std::vector<cv::FoldResult>& folds,
                                       const models::ModelSpec& spec, std::size_t parameter_count,
                                       const json& experiment) {
    json j;
    j["subject"] = s.subject_id;
    j["model"] = spec.name;
    j["classes"] = s.classes;
    j["parameter_count"] = parameter_count;
    j["config"] = experiment;
    j["fold_accuracies"] = s.fold_accuracies;
    j["mean_accuracy"] = s.mean_accuracy;
    j["confusion"] = s.confusion;
    json fj = json::array();
    for (const auto& f : folds) fj.push_back(fold_json(f));
    j["folds"] = fj;
    return j;
}

[[nodiscard]] inline json splits_json(const std::vector<cv::FoldPlan>& plans) {
    json j = json::array();
    for (const auto& p : plans)
        j.push_back({{"held_out_trial", p.held_out_trial + 1},
                     {"test", p.test},
                     {"validation", p.validation},
                     {"train", p.train}});
    return j;
}

struct SummaryRow {
    std::uint32_t subject = 0;
    std::string model;
    double mean_accuracy = 0.0;
    std::vector<double> fold_accuracies;
    std::size_t parameter_count = 0;
};

[[nodiscard]] inline SummaryRow summary_row(const json& j) {
    try {
        return {j.at("subject").get<std::uint32_t>(), j.at("model").get<std::string>(),
                j.at("mean_accuracy").get<double>(), j.at("fold_accuracies").get<std::vector<double>>(),
                j.at("parameter_count").get<std::size_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("summary: ") + e.what());
    }
}

/// Per-model mean of the subjects' mean accuracies.
[[nodiscard]] inline std::map<std::string, double> model_means(const std::vector<SummaryRow>& rows) {
    std::map<std::string, std::vector<double>> by;
    for (const auto& r : rows) by[r.model].push_back(r.mean_accuracy);
    std::map<std::string, double> out;
    for (const auto& [m, v] : by) out[m] = cv::mean_of(v);
    return out;
}

[[nodiscard]] inline std::string aggregate_csv(const std::vector<SummaryRow>& rows) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "model,subject,mean_accuracy,folds\n";
    for (const auto& r : rows) ss << r.model << ',' << r.subject << ',' << r.mean_accuracy << ',' << r.fold_accuracies.size() << '\n';
    for (const auto& [m, v] : model_means(rows)) ss << m << ",all," << v << ",\n";
    return ss.str();
}

/// Grouped bars: one group per subject, one bar per model within it.
[[nodiscard]] inline std::string bar_chart_svg(std::vector<SummaryRow> rows) {
    std::sort(rows.begin(), rows.end(),
              [](const SummaryRow& a, const SummaryRow& b) { return std::tie(a.subject, a.model) < std::tie(b.subject, b.model); });
    std::vector<std::string> model_list;
    std::vector<std::uint32_t> subjects;
    for (const auto& r : rows) {
        if (std::find(model_list.begin(), model_list.end(), r.model) == model_list.end()) model_list.push_back(r.model);
        if (std::find(subjects.begin(), subjects.end(), r.subject) == subjects.end()) subjects.push_back(r.subject);
    }
    std::sort(model_list.begin(), model_list.end());
    static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
    const double bar = 14.0, gap = 12.0, left = 50.0, top = 20.0, height = 200.0;
    const double group = bar * static_cast<double>(model_list.size()) + gap;
    const double width = left + group * static_cast<double>(subjects.size()) + 20.0 + 110.0;
    std::ostringstream ss;
    ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + height + 50
       << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    ss << "<line x1=\"" << left << "\" y1=\"" << top + height << "\" x2=\"" << width - 110 << "\" y2=\"" << top + height
       << "\" stroke=\"black\"/>\n";
    for (int pct = 0; pct <= 100; pct += 25) {
        const double y = top + height * (1.0 - pct / 100.0);
        ss << "<text x=\"" << left - 6 << "\" y=\"" << y + 3 << "\" text-anchor=\"end\">" << pct << "%</text>\n";
    }
    for (std::size_t si = 0; si < subjects.size(); ++si) {
        const double gx = left + gap / 2 + group * static_cast<double>(si);
        for (const auto& r : rows) {
            if (r.subject != subjects[si]) continue;
            const auto mi = static_cast<std::size_t>(
                std::find(model_list.begin(), model_list.end(), r.model) - model_list.begin());
            const double h = height * std::clamp(r.mean_accuracy, 0.0, 1.0);
            ss << "<rect class=\"bar\" data-subject=\"" << r.subject << "\" data-model=\"" << r.model << "\" x=\""
               << gx + bar * static_cast<double>(mi) << "\" y=\"" << top + height - h << "\" width=\"" << bar - 2
               << "\" height=\"" << h << "\" fill=\"" << palette[mi % 6] << "\"><title>subject " << r.subject << ", "
               << r.model << ": " << r.mean_accuracy * 100.0 << "%</title></rect>\n";
        }
        ss << "<text x=\"" << gx + (group - gap) / 2 << "\" y=\"" << top + height + 14 << "\" text-anchor=\"middle\">"
           << subjects[si] << "</text>\n";
    }
    ss << "<text x=\"" << left + (width - 110 - left) / 2 << "\" y=\"" << top + height + 32
       << "\" text-anchor=\"middle\">subject</text>\n";
    for (std::size_t mi = 0; mi < model_list.size(); ++mi) {
        const double y = top + 12.0 * static_cast<double>(mi);
        ss << "<rect class=\"legend\" x=\"" << width - 100 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
           << palette[mi % 6] << "\"/><text x=\"" << width - 86 << "\" y=\"" << y + 9 << "\">" << model_list[mi]
           << "</text>\n";
    }
    ss << "</svg>\n";
    return ss.str();
}

/// Parameter counts usually quoted for these architectures, in millions.
[[nodiscard]] inline double reference_millions(const std::string& model) {
    if (model == "A") return 2.09;
    if (model == "B") return 2.12;
    if (model == "C-s2") return 0.14;
    if (model == "C-s1") return 2.10;
    if (model == "AllConv") return 0.008;
    return 0.0;
}

struct ParamRow {
    std::string model;
    models::ParamCount with_bn;
    std::size_t without_bn = 0;
    double reference_millions = 0.0;
};

[[nodiscard]] inline std::vector<ParamRow> param_rows(std::size_t classes = 8) {
    std::vector<ParamRow> rows;
    for (const auto& name : models::model_names()) {
        models::ModelOptions on, off;
        on.classes = off.classes = classes;
        off.batch_norm = false;
        rows.push_back({name, models::param_count(models::model_spec(name, on)),
                        models::param_count(models::model_spec(name, off)).total, reference_millions(name)});
    }
    return rows;
}

[[nodiscard]] inline json param_json(const std::vector<ParamRow>& rows) {
    json j = json::array();
    for (const auto& r : rows) {
        json layers = json::array();
        for (const auto& l : r.with_bn.layers) layers.push_back({{"layer", l.description}, {"count", l.count}});
        j.push_back({{"model", r.model},
                     {"total", r.with_bn.total},
                     {"total_without_batch_norm", r.without_bn},
                     {"reference_millions", r.reference_millions},
                     {"layers", layers}});
    }
    return j;
}

/// Markdown table plus a note for every model whose count strays from the
/// reference by more than 10 %.
[[nodiscard]] inline std::string param_markdown(const std::vector<ParamRow>& rows) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss << "| model | parameters | without BN | reference (M) | ratio |\n|---|---:|---:|---:|---:|\n";
    for (const auto& r : rows) {
        ss.precision(3);
        const double ratio = r.reference_millions > 0 ? r.with_bn.total / (r.reference_millions * 1e6) : 0.0;
        ss << "| " << r.model << " | " << r.with_bn.total << " | " << r.without_bn << " | " << r.reference_millions
           << " | " << ratio << " |\n";
    }
    std::size_t a = 0;
    for (const auto& r : rows)
        if (r.model == "A") a = r.with_bn.total;
    ss << "\nDiscrepancies:\n";
    for (const auto& r : rows) {
        const double ratio = r.with_bn.total / (r.reference_millions * 1e6);
        if (ratio > 1.1 || ratio < 0.9) {
            ss.precision(3);
            ss << "- " << r.model << ": " << r.with_bn.total << " counted vs about " << r.reference_millions
               << " M quoted (x" << ratio << ").";
            if (r.model == "C-s2")
                ss << " With 'same' padding the stride-2 layers leave a 4x2x64 map, so the dense layer alone holds "
                      "512*256+256 weights; the quoted figure needs a smaller map or a narrower dense layer.";
            if (r.model == "AllConv")
                ss << " The quoted figure is below the weights of a single 3x3 64->64 layer (36,928), so it cannot "
                      "count the listed stack.";
            ss << '\n';
        }
    }
    if (a) {
        for (const auto& r : rows)
            if (r.model == "C-s2") {
                ss.precision(2);
                ss << "- C-s2 / A = " << 100.0 * static_cast<double>(r.with_bn.total) / static_cast<double>(a)
                   << " % (quoted ratio about " << 100.0 * 0.14 / 2.09 << " %).\n";
            }
    }
    return ss.str();
}

}  // namespace sconvnet::report
