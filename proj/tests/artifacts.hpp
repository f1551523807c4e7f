#pragma once

// Checks a train output directory (out/subject_<id>/) against the accuracy
// identity and the fold-partition invariants. Returns one message per
// violation; an empty list means the artifacts are consistent.

#include <set>
#include <string>
#include <vector>

#include "support.hpp"

namespace sct {

inline std::vector<std::string> check_artifacts(const fs::path& dir) {
    std::vector<std::string> bad;
    const auto fail = [&](std::string m) { bad.push_back(std::move(m)); };
    report::json summary, splits;
    try {
        summary = report::read_json(dir / "summary.json");
        splits = report::read_json(dir / "splits.json");
    } catch (const std::exception& e) {
        fail(e.what());
        return bad;
    }
    const std::size_t classes = summary.at("classes").get<std::size_t>();
    const auto& folds = summary.at("folds");
    const auto accs = summary.at("fold_accuracies").get<std::vector<double>>();
    if (folds.size() != splits.size()) fail("fold count differs between summary and splits");
    if (accs.size() != folds.size()) fail("fold_accuracies length differs from folds");

    std::vector<std::uint64_t> summed(classes * classes, 0);
    double mean = 0.0;
    std::size_t n_images = 0;
    std::vector<int> tested;
    for (std::size_t k = 0; k < folds.size(); ++k) {
        const auto& f = folds[k];
        const std::size_t trial = f.at("held_out_trial").get<std::size_t>();
        const auto name = report::fold_csv_name(trial - 1);
        report::Confusion csv;
        try {
            csv = report::parse_confusion_csv(report::read_text(dir / name));
        } catch (const std::exception& e) {
            fail(name + ": " + e.what());
            continue;
        }
        const auto json_conf = f.at("confusion").get<std::vector<std::uint64_t>>();
        if (csv.classes != classes || csv.counts != json_conf) fail(name + " disagrees with summary.json");
        std::uint64_t trace = 0, total = 0;
        for (std::size_t i = 0; i < classes; ++i)
            for (std::size_t j = 0; j < classes; ++j) {
                total += json_conf[i * classes + j];
                if (i == j) trace += json_conf[i * classes + j];
            }
        const auto correct = f.at("correct").get<std::vector<std::uint64_t>>();
        std::uint64_t csum = 0;
        for (std::size_t i = 0; i < correct.size(); ++i) {
            csum += correct[i];
            if (correct[i] != json_conf[i * classes + i]) fail(name + ": per-class correct count off the diagonal");
        }
        const double acc = f.at("accuracy").get<double>();
        if (total == 0 || acc != static_cast<double>(trace) / static_cast<double>(total))
            fail(name + ": accuracy is not trace/sum");
        if (csum != trace) fail(name + ": sum of correct counts is not the trace");
        if (f.at("total").get<std::uint64_t>() != total) fail(name + ": total is not the matrix sum");
        if (k < accs.size() && accs[k] != acc) fail(name + ": fold_accuracies entry differs");
        for (std::size_t i = 0; i < summed.size(); ++i) summed[i] += json_conf[i];
        mean += acc;

        if (k >= splits.size()) continue;
        const auto& s = splits[k];
        if (s.at("held_out_trial").get<std::size_t>() != trial) fail(name + ": splits order differs");
        const auto test = s.at("test").get<std::vector<std::size_t>>();
        const auto val = s.at("validation").get<std::vector<std::size_t>>();
        const auto train = s.at("train").get<std::vector<std::size_t>>();
        if (test.size() != total) fail(name + ": test split size is not the matrix sum");
        const std::size_t n = test.size() + val.size() + train.size();
        if (n_images == 0) {
            n_images = n;
            tested.assign(n, 0);
        }
        if (n != n_images) fail(name + ": splits cover a different number of images");
        std::set<std::size_t> seen;
        for (const auto* part : {&test, &val, &train})
            for (auto i : *part)
                if (i >= n || !seen.insert(i).second) fail(name + ": split index repeated or out of range");
        for (auto i : test)
            if (i < tested.size()) ++tested[i];
        if (val.size() != (n - test.size() + 4) / 8) fail(name + ": validation size is not one eighth of the rest");
    }
    for (std::size_t i = 0; i < tested.size(); ++i)
        if (tested[i] != 1) {
            fail("image " + std::to_string(i) + " is tested " + std::to_string(tested[i]) + " times");
            break;
        }
    if (!folds.empty()) {
        mean /= static_cast<double>(folds.size());
        if (std::abs(mean - summary.at("mean_accuracy").get<double>()) > 1e-12) fail("mean_accuracy is not the fold mean");
    }
    if (summary.at("confusion").get<std::vector<std::uint64_t>>() != summed) fail("summed confusion differs");
    return bad;
}

}  // namespace sct
