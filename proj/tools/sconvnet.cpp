// sconvnet command-line frontend: synth, preprocess, train, evaluate, report.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sconvnet/sconvnet.hpp"

namespace fs = std::filesystem;
using namespace sconvnet;
using ojson = nlohmann::ordered_json;

namespace {

imaging::GridLayout load_layout(const std::string& path) {
    return path.empty() ? imaging::GridLayout{} : imaging::GridLayout::from_file(path);
}

// Accepts raw EMGB recordings or already-preprocessed SIMG image files.
dataio::ImageSet load_subject(const std::string& path, const RunConfig& cfg) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    char magic[4] = {};
    f.read(magic, 4);
    f.close();
    if (std::string(magic, 4) == "SIMG") return dataio::read_images(path);
    const auto rec = dataio::read_emgb(path);
    return dataio::preprocess(rec, cfg.filter, load_layout(cfg.layout));
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

void write_json(const fs::path& p, const ojson& j) { report::write_text(p, j.dump(2) + "\n"); }

int run_synth(const dataio::SynthSpec& spec, const std::string& layout, const std::string& out) {
    const auto rec = dataio::generate_synthetic(spec, load_layout(layout));
    dataio::write_emgb(out, rec);
    std::cerr << "wrote " << out << " (" << rec.header.file_bytes() << " bytes, " << rec.index().size()
              << " frames)\n";
    return 0;
}

int run_preprocess(const std::string& input, const std::string& out, const RunConfig& cfg) {
    const auto set = load_subject(input, cfg);
    dataio::write_images(out, set);
    std::cerr << "wrote " << out << " (" << set.size() << " images)\n";
    return 0;
}

int run_train(const RunConfig& cfg, bool quiet) {
    cfg.validate();
    if (cfg.subjects.empty()) throw ConfigError("train: no --subject given");
    const fs::path out(cfg.out);
    ensure_dir(out);
    write_json(out / "run_config.json", cfg.to_json());

    std::vector<cv::SubjectReport> reports;
    for (const auto& path : cfg.subjects) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto images = load_subject(path, cfg);
        const auto spec = models::model_spec(cfg.model, cfg.model_options(images.index.gestures));
        const auto data = cv::make_dataset(images, spec);
        const auto plans = cv::make_folds(images, cfg.seed);
        const auto tcfg = cfg.train_config();

        cv::EpochCallback log;
        if (!quiet)
            log = [&](const cv::EpochEvent& e) {
                std::cerr << "subject " << images.subject_id << " fold " << e.fold + 1 << " epoch " << e.epoch
                          << " train " << e.train_loss << " val " << e.validation_loss << (e.improved ? " *" : "")
                          << '\n';
            };
        auto [folds, last] = cv::run_folds<float>(data, plans, spec, tcfg, cfg.parallel_folds, log);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const fs::path dir = out / ("subject_" + std::to_string(images.subject_id));
        ensure_dir(dir);
        for (const auto& f : folds) report::write_text(dir / report::fold_csv_name(f.held_out_trial),
                                                       report::confusion_csv(f.classes, f.confusion));
        const auto rep = cv::aggregate(folds, images.subject_id);
        write_json(dir / "summary.json",
                   report::summary_json(rep, folds, spec, models::param_count(spec).total, cfg.experiment_json()));
        write_json(dir / "timing.json", ojson{{"wall_time_seconds", secs}, {"parallel_folds", cfg.parallel_folds}});
        write_json(dir / "splits.json", report::splits_json(plans));
        last.save((dir / "model.ckpt").string());
        std::cout << "subject " << images.subject_id << ": mean accuracy " << rep.mean_accuracy * 100.0 << " % over "
                  << folds.size() << " folds (" << secs << " s)\n";
        reports.push_back(rep);
    }
    if (reports.size() > 1) {
        const auto overall = cv::aggregate_subjects(reports);
        ojson j;
        j["model"] = models::canonical_name(cfg.model);
        j["mean_accuracy"] = overall.mean_accuracy;
        ojson subj = ojson::array();
        for (const auto& s : overall.subjects) subj.push_back({{"subject", s.subject_id}, {"mean_accuracy", s.mean_accuracy}});
        j["subjects"] = subj;
        j["confusion"] = overall.confusion;
        write_json(out / "overall.json", j);
        std::cout << "overall: " << overall.mean_accuracy * 100.0 << " %\n";
    }
    return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& config, const std::string& subject, int trial,
                 const std::string& out) {
    RunConfig cfg;
    cfg.merge_file(config);
    cfg.validate();
    const auto images = load_subject(subject, cfg);
    const auto spec = models::model_spec(cfg.model, cfg.model_options(images.index.gestures));
    auto net = models::build<float>(spec);
    net.load(checkpoint);
    const auto data = cv::make_dataset(images, spec);
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < images.size(); ++i)
        if (trial <= 0 || static_cast<int>(images.trial[i]) + 1 == trial) ids.push_back(i);
    if (ids.empty()) throw DataError("evaluate: no images for trial " + std::to_string(trial));
    const auto [loss, pred] = cv::evaluate(net, data, ids);
    std::vector<std::size_t> truth(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) truth[i] = data.labels[ids[i]];
    auto r = cv::FoldResult::from_predictions(data.classes, truth, pred);
    ojson j;
    j["subject"] = images.subject_id;
    j["trial"] = trial > 0 ? ojson(trial) : ojson("all");
    j["images"] = r.total;
    j["loss"] = loss;
    j["accuracy"] = r.accuracy;
    j["confusion"] = r.confusion;
    if (!out.empty()) write_json(out, j);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_report(const std::vector<std::string>& summaries, const std::string& out, bool params) {
    if (summaries.empty() && !params) throw ConfigError("report: give --summary files and/or --params");
    const fs::path dir(out);
    ensure_dir(dir);
    if (!summaries.empty()) {
        std::vector<report::SummaryRow> rows;
        for (const auto& s : summaries) rows.push_back(report::summary_row(report::read_json(s)));
        report::write_text(dir / "aggregate.csv", report::aggregate_csv(rows));
        report::write_text(dir / "accuracy.svg", report::bar_chart_svg(rows));
        for (const auto& [m, v] : report::model_means(rows)) std::cout << m << ": " << v * 100.0 << " %\n";
    }
    if (params) {
        const auto rows = report::param_rows();
        write_json(dir / "parameters.json", report::param_json(rows));
        const auto md = report::param_markdown(rows);
        report::write_text(dir / "parameters.md", md);
        std::cout << md;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"S-ConvNet sEMG gesture recognition: synthetic data, preprocessing, cross-validated training"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic EMGB recording");
    dataio::SynthSpec sspec;
    std::string synth_out, synth_layout;
    synth->add_option("--out,-o", synth_out, "output .emgb path")->required();
    synth->add_option("--gestures", sspec.gestures, "gesture count")->capture_default_str();
    synth->add_option("--trials", sspec.trials, "trials per gesture")->capture_default_str();
    synth->add_option("--samples", sspec.samples_per_trial, "samples per trial")->capture_default_str();
    synth->add_option("--rate", sspec.sample_rate, "sample rate (Hz)")->capture_default_str();
    synth->add_option("--subject", sspec.subject_id, "subject id")->capture_default_str();
    synth->add_option("--noise", sspec.noise, "white-noise std dev (mV)")->capture_default_str();
    synth->add_option("--sigma", sspec.blob_sigma, "blob width (grid cells)")->capture_default_str();
    synth->add_option("--amplitude", sspec.blob_amplitude, "blob peak (mV)")->capture_default_str();
    synth->add_option("--seed", sspec.seed, "noise seed")->capture_default_str();
    synth->add_option("--layout", synth_layout, "channel layout file (default row-major)");

    // shared experiment flags for preprocess/train
    RunConfig cfg;
    std::string config_path;
    bool print_config = false, quiet = false;
    auto add_filter_flags = [&](CLI::App* sub) {
        sub->add_option("--low-cut", cfg.filter.low_cut, "band-stop lower edge (Hz)")->capture_default_str();
        sub->add_option("--high-cut", cfg.filter.high_cut, "band-stop upper edge (Hz)")->capture_default_str();
        sub->add_option("--order", cfg.filter.order, "band-stop prototype order")->capture_default_str();
        sub->add_option("--layout", cfg.layout, "channel layout file (default row-major)");
    };

    auto* pre = app.add_subcommand("preprocess", "filter an EMGB recording and write 8-bit images (SIMG)");
    std::string pre_in, pre_out;
    pre->add_option("--input,-i", pre_in, "input .emgb")->required();
    pre->add_option("--out,-o", pre_out, "output .simg")->required();
    add_filter_flags(pre);

    auto* train = app.add_subcommand("train", "leave-one-trial-out training and evaluation");
    train->add_option("--config", config_path, "JSON config file (flags override it)");
    train->add_option("--model", cfg.model, "A, B, C-s2, C-s1 or AllConv")->capture_default_str();
    train->add_option("--subject", cfg.subjects, "subject .emgb or .simg file (repeatable)");
    train->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
    train->add_flag("--bn,!--no-bn", cfg.batch_norm, "batch normalization (default on)");
    double dropout = 0.0;
    auto* dropout_opt = train->add_option("--dropout", dropout, "dropout probability (default 0.35, AllConv 0.25)");
    train->add_option("--activation", cfg.activation, "elu, relu, leaky_relu, sigmoid")->capture_default_str();
    train->add_option("--pool", cfg.pool, "none, max or avg after the first convolution")->capture_default_str();
    train->add_flag("--literal-pooling", cfg.literal_pooling, "absolute-value pooling variant");
    train->add_option("--batch-size", cfg.batch_size, "mini-batch size")->capture_default_str();
    train->add_option("--max-epochs", cfg.max_epochs, "epoch limit")->capture_default_str();
    train->add_option("--patience", cfg.patience, "early-stopping patience")->capture_default_str();
    train->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    train->add_option("--init", cfg.init, "xavier or he")->capture_default_str();
    train->add_option("--out,-o", cfg.out, "output directory")->capture_default_str();
    train->add_option("--parallel-folds", cfg.parallel_folds, "folds trained concurrently")->capture_default_str();
    train->add_flag("--print-config", print_config, "print the resolved configuration and exit");
    train->add_flag("--quiet,-q", quiet, "no per-epoch progress");
    add_filter_flags(train);

    auto* eval = app.add_subcommand("evaluate", "score a saved checkpoint on a subject");
    std::string ckpt, eval_cfg, eval_subject, eval_out;
    int eval_trial = 0;
    eval->add_option("--checkpoint", ckpt, "model.ckpt from train")->required();
    eval->add_option("--config", eval_cfg, "run_config.json from train")->required();
    eval->add_option("--subject", eval_subject, "subject .emgb or .simg")->required();
    eval->add_option("--trial", eval_trial, "only this 1-based trial (default all)");
    eval->add_option("--out,-o", eval_out, "also write the result JSON here");

    auto* rep = app.add_subcommand("report", "aggregate summaries across subjects; parameter-count table");
    std::vector<std::string> summaries;
    std::string rep_out = "report";
    bool params = false;
    rep->add_option("--summary,-s", summaries, "summary.json files");
    rep->add_option("--out,-o", rep_out, "output directory")->capture_default_str();
    rep->add_flag("--params", params, "write the parameter-count report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*synth) return run_synth(sspec, synth_layout, synth_out);
        if (*pre) return run_preprocess(pre_in, pre_out, cfg);
        if (*train) {
            // defaults < config file < flags: replay the flags over the file
            if (!config_path.empty()) {
                RunConfig merged;
                merged.merge_file(config_path);
                const auto flags = cfg;
                const auto given = [&](const char* name) { return train->count(name) > 0; };
                if (given("--model")) merged.model = flags.model;
                if (given("--subject")) merged.subjects = flags.subjects;
                if (given("--seed")) merged.seed = flags.seed;
                if (given("--bn")) merged.batch_norm = flags.batch_norm;
                if (given("--activation")) merged.activation = flags.activation;
                if (given("--pool")) merged.pool = flags.pool;
                if (given("--literal-pooling")) merged.literal_pooling = flags.literal_pooling;
                if (given("--batch-size")) merged.batch_size = flags.batch_size;
                if (given("--max-epochs")) merged.max_epochs = flags.max_epochs;
                if (given("--patience")) merged.patience = flags.patience;
                if (given("--lr")) merged.learning_rate = flags.learning_rate;
                if (given("--init")) merged.init = flags.init;
                if (given("--out")) merged.out = flags.out;
                if (given("--parallel-folds")) merged.parallel_folds = flags.parallel_folds;
                if (given("--low-cut")) merged.filter.low_cut = flags.filter.low_cut;
                if (given("--high-cut")) merged.filter.high_cut = flags.filter.high_cut;
                if (given("--order")) merged.filter.order = flags.filter.order;
                if (given("--layout")) merged.layout = flags.layout;
                cfg = merged;
            }
            if (*dropout_opt) cfg.dropout = dropout;
            if (print_config) {
                cfg.validate();
                std::cout << cfg.to_json().dump(2) << '\n';
                return 0;
            }
            return run_train(cfg, quiet);
        }
        if (*eval) return run_evaluate(ckpt, eval_cfg, eval_subject, eval_trial, eval_out);
        if (*rep) return run_report(summaries, rep_out, params);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
