#include <gtest/gtest.h>

#include "artifacts.hpp"

using namespace sct;

namespace {

const std::string cli = SCONVNET_CLI;

std::string q(const std::string& s) { return "'" + s + "'"; }

// A small synthetic subject shared by the CLI tests.
std::string small_subject(const TempDir& dir, const std::string& extra = "") {
    const auto path = dir.str("subject_3.emgb");
    const auto r = run(cli + " synth --gestures 3 --trials 3 --samples 20 --subject 3 --noise 0.2 --seed 4 -o " +
                       q(path) + " " + extra);
    EXPECT_EQ(r.code, 0) << r.output;
    return path;
}

std::string quick_train(const std::string& subject, const std::string& out, const std::string& extra = "") {
    return cli + " train -q --model C-s2 --batch-size 16 --max-epochs 2 --patience 1 --seed 9 --subject " + q(subject) +
           " -o " + q(out) + " " + extra;
}

}  // namespace

// ---- config ---------------------------------------------------------------

TEST(Config, DefaultsAreTheTrainingSchedule) {
    const RunConfig c;
    EXPECT_EQ(c.model, "A");
    EXPECT_TRUE(c.batch_norm);
    EXPECT_EQ(c.batch_size, 256u);
    EXPECT_EQ(c.max_epochs, 100);
    EXPECT_EQ(c.patience, 5);
    EXPECT_EQ(c.learning_rate, 0.001);
    EXPECT_EQ(c.activation, "elu");
    EXPECT_EQ(c.init, "xavier");
    EXPECT_EQ(c.resolved_dropout(), 0.35);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, MergeAndErrors) {
    RunConfig c;
    c.merge(nlohmann::json::parse(R"({"model":"AllConv","batch_size":64,"filter":{"order":3}})"));
    EXPECT_EQ(c.model, "AllConv");
    EXPECT_EQ(c.batch_size, 64u);
    EXPECT_EQ(c.filter.order, 3);
    EXPECT_EQ(c.resolved_dropout(), 0.25);
    EXPECT_THROW(c.merge(nlohmann::json::parse(R"({"bogus":1})")), ConfigError);
    EXPECT_THROW(c.merge(nlohmann::json::parse(R"({"batch_size":"x"})")), ConfigError);
    EXPECT_THROW(c.merge(nlohmann::json::parse("[1]")), ConfigError);
    EXPECT_THROW(c.merge_file("/nonexistent/config.json"), ConfigError);
    RunConfig bad;
    bad.patience = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = {};
    bad.model = "Z";
    EXPECT_THROW(bad.validate(), ConfigError);
}

// ---- report ---------------------------------------------------------------

TEST(Report, ConfusionCsvRoundTrip) {
    const std::vector<std::uint64_t> m{5, 1, 0, 2, 7, 1, 0, 0, 9};
    const auto text = report::confusion_csv(3, m);
    EXPECT_EQ(text.substr(0, text.find('\n')), "true\\predicted,1,2,3");
    const auto back = report::parse_confusion_csv(text);
    EXPECT_EQ(back.classes, 3u);
    EXPECT_EQ(back.counts, m);
    EXPECT_THROW(report::parse_confusion_csv("a,1,2\n1,3\n"), FormatError);
    EXPECT_EQ(report::fold_csv_name(0), "fold_01_confusion.csv");
}

TEST(Report, BarChartHasOneBarPerSubjectAndModel) {
    std::vector<report::SummaryRow> rows;
    for (std::uint32_t s = 1; s <= 4; ++s)
        for (const char* m : {"A", "C-s2"}) rows.push_back({s, m, 0.5 + 0.1 * s, {0.5}, 10});
    const auto svg = report::bar_chart_svg(rows);
    std::size_t bars = 0;
    for (std::size_t p = 0; (p = svg.find("class=\"bar\"", p)) != std::string::npos; ++p) ++bars;
    EXPECT_EQ(bars, 8u);
    const auto single = report::bar_chart_svg({rows.front()});
    std::size_t one = 0;
    for (std::size_t p = 0; (p = single.find("class=\"bar\"", p)) != std::string::npos; ++p) ++one;
    EXPECT_EQ(one, 1u);
}

TEST(Report, ModelMeansMatchSubjectAggregation) {
    std::vector<report::SummaryRow> rows;
    std::vector<cv::SubjectReport> subjects;
    Gen g(2);
    for (std::uint32_t s = 1; s <= 5; ++s) {
        const double a = g.uniform(0.5, 1.0);
        rows.push_back({s, "A", a, {a}, 1});
        cv::SubjectReport r;
        r.mean_accuracy = a;
        r.confusion.assign(4, 0);
        subjects.push_back(r);
    }
    EXPECT_NEAR(report::model_means(rows).at("A"), cv::aggregate_subjects(subjects).mean_accuracy, 1e-15);
}

TEST(Report, ReferenceFigures) {
    EXPECT_EQ(report::reference_millions("A"), 2.09);
    EXPECT_EQ(report::reference_millions("C-s2"), 0.14);
    EXPECT_EQ(report::reference_millions("AllConv"), 0.008);
    const auto md = report::param_markdown(report::param_rows());
    EXPECT_NE(md.find("Discrepancies"), std::string::npos);
    EXPECT_NE(md.find("C-s2 / A"), std::string::npos);
}

// ---- command line ----------------------------------------------------------

TEST(Cli, HelpListsFlags) {
    const auto top = run(cli + " --help");
    EXPECT_EQ(top.code, 0);
    for (const char* s : {"synth", "preprocess", "train", "evaluate", "report"})
        EXPECT_NE(top.output.find(s), std::string::npos) << s;
    const auto train = run(cli + " train --help");
    EXPECT_EQ(train.code, 0);
    for (const char* f : {"--model", "--subject", "--seed", "--bn", "--dropout", "--activation", "--pool", "--batch-size",
                          "--max-epochs", "--patience", "--lr", "--out", "--parallel-folds", "--print-config", "--config"})
        EXPECT_NE(train.output.find(f), std::string::npos) << f;
    const auto synth = run(cli + " synth --help");
    for (const char* f : {"--gestures", "--trials", "--samples", "--noise", "--seed", "--out"})
        EXPECT_NE(synth.output.find(f), std::string::npos) << f;
}

TEST(Cli, ExitCodes) {
    TempDir dir("cli_codes");
    EXPECT_EQ(run(cli).code, 1);
    EXPECT_EQ(run(cli + " train --bogus-flag").code, 1);
    EXPECT_EQ(run(cli + " train -q --subject /nonexistent/subject_2.emgb -o " + q(dir.str("o"))).code, 2);
    report::write_text(dir.path / "bad.json", "{\"patience\": 0}");
    EXPECT_EQ(run(cli + " train -q --config " + q(dir.str("bad.json")) + " --subject x.emgb").code, 1);
    report::write_text(dir.path / "junk.emgb", "not a recording");
    EXPECT_EQ(run(cli + " train -q --subject " + q(dir.str("junk.emgb")) + " -o " + q(dir.str("o"))).code, 2);
    EXPECT_EQ(run(cli + " train -q --model Z --subject x.emgb").code, 1);
    EXPECT_EQ(run(cli + " train -q --config /nonexistent/cfg.json --subject x.emgb").code, 1);
    // divergence: the first Adam step moves every weight by ~1e30
    const auto subject = small_subject(dir);
    const auto r = run(quick_train(subject, dir.str("div"), "--no-bn --lr 1e30"));
    EXPECT_EQ(r.code, 3) << r.output;
    EXPECT_NE(r.output.find("non-finite"), std::string::npos);
}

TEST(Cli, SynthSameSeedSameBytes) {
    TempDir dir("cli_synth");
    const auto a = dir.str("a.emgb"), b = dir.str("b.emgb");
    ASSERT_EQ(run(cli + " synth --samples 15 --noise 0.1 --seed 3 -o " + q(a)).code, 0);
    ASSERT_EQ(run(cli + " synth --samples 15 --noise 0.1 --seed 3 -o " + q(b)).code, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_EQ(fs::file_size(a), 26u + 8u * 10 * 15 * 128 * 4);
}

TEST(Cli, ConfigPrecedenceAndPrintConfig) {
    TempDir dir("cli_cfg");
    report::write_text(dir.path / "c.json", R"({"model":"B","patience":7,"batch_size":32})");
    const auto r = run(cli + " train --config " + q(dir.str("c.json")) + " --patience 3 --print-config");
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = nlohmann::json::parse(r.output);
    EXPECT_EQ(j.at("model"), "B");        // from the file
    EXPECT_EQ(j.at("patience"), 3);       // flag beats file
    EXPECT_EQ(j.at("batch_size"), 32);    // file beats default
    EXPECT_EQ(j.at("max_epochs"), 100);   // default
    EXPECT_EQ(j.at("learning_rate"), 0.001);
}

TEST(Cli, TrainWritesConsistentArtifacts) {
    TempDir dir("cli_train");
    const auto subject = small_subject(dir);
    const auto r = run(quick_train(subject, dir.str("out")));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto sub = dir.path / "out" / "subject_3";
    for (const char* f : {"summary.json", "timing.json", "splits.json", "model.ckpt", "fold_01_confusion.csv",
                          "fold_03_confusion.csv"})
        EXPECT_TRUE(fs::exists(sub / f)) << f;
    EXPECT_TRUE(fs::exists(dir.path / "out" / "run_config.json"));
    const auto problems = check_artifacts(sub);
    for (const auto& p : problems) ADD_FAILURE() << p;
    const auto summary = report::read_json(sub / "summary.json");
    EXPECT_EQ(summary.at("fold_accuracies").size(), 3u);
    EXPECT_EQ(summary.at("model"), "C-s2");

    // evaluate the checkpoint on the last trial
    const auto ev = run(cli + " evaluate --checkpoint " + q((sub / "model.ckpt").string()) + " --config " +
                        q(dir.str("out/run_config.json")) + " --subject " + q(subject) + " --trial 3 -o " +
                        q(dir.str("eval.json")));
    ASSERT_EQ(ev.code, 0) << ev.output;
    const auto ej = report::read_json(dir.path / "eval.json");
    EXPECT_EQ(ej.at("images"), 60);
    EXPECT_NEAR(ej.at("accuracy").get<double>(), summary.at("fold_accuracies")[2].get<double>(), 1e-12);
}

TEST(Cli, DeterministicAndParallelEqualsSequential) {
    TempDir dir("cli_det");
    const auto subject = small_subject(dir);
    ASSERT_EQ(run(quick_train(subject, dir.str("a"))).code, 0);
    ASSERT_EQ(run(quick_train(subject, dir.str("b"))).code, 0);
    ASSERT_EQ(run(quick_train(subject, dir.str("c"), "--parallel-folds 3")).code, 0);
    const auto a = slurp(dir.path / "a/subject_3/summary.json");
    EXPECT_EQ(a, slurp(dir.path / "b/subject_3/summary.json"));
    EXPECT_EQ(a, slurp(dir.path / "c/subject_3/summary.json"));
    EXPECT_EQ(slurp(dir.path / "a/subject_3/model.ckpt"), slurp(dir.path / "c/subject_3/model.ckpt"));
}

TEST(Cli, PreprocessedInputGivesSameResult) {
    TempDir dir("cli_simg");
    const auto subject = small_subject(dir);
    const auto simg = dir.str("s.simg");
    ASSERT_EQ(run(cli + " preprocess -i " + q(subject) + " -o " + q(simg)).code, 0);
    ASSERT_EQ(run(quick_train(subject, dir.str("raw"))).code, 0);
    ASSERT_EQ(run(quick_train(simg, dir.str("pre"))).code, 0);
    const auto a = report::read_json(dir.path / "raw/subject_3/summary.json");
    const auto b = report::read_json(dir.path / "pre/subject_3/summary.json");
    EXPECT_EQ(a.at("folds"), b.at("folds"));
}

TEST(Cli, ReportOutputs) {
    TempDir dir("cli_report");
    const auto s1 = dir.str("subject_1.emgb"), s2 = dir.str("subject_2.emgb");
    for (const auto& [p, id] : {std::pair{s1, 1}, std::pair{s2, 2}})
        ASSERT_EQ(run(cli + " synth --gestures 3 --trials 2 --samples 12 --noise 0.3 --subject " + std::to_string(id) +
                      " -o " + q(p))
                      .code,
                  0);
    const auto tr = run(cli + " train -q --model C-s2 --batch-size 16 --max-epochs 1 --subject " + q(s1) +
                        " --subject " + q(s2) + " -o " + q(dir.str("out")));
    ASSERT_EQ(tr.code, 0) << tr.output;
    EXPECT_TRUE(fs::exists(dir.path / "out/overall.json"));
    const auto rep = run(cli + " report --params -s " + q(dir.str("out/subject_1/summary.json")) + " -s " +
                         q(dir.str("out/subject_2/summary.json")) + " -o " + q(dir.str("rep")));
    ASSERT_EQ(rep.code, 0) << rep.output;
    for (const char* f : {"aggregate.csv", "accuracy.svg", "parameters.json", "parameters.md"})
        EXPECT_TRUE(fs::exists(dir.path / "rep" / f)) << f;
    const auto svg = slurp(dir.path / "rep/accuracy.svg");
    std::size_t bars = 0;
    for (std::size_t p = 0; (p = svg.find("class=\"bar\"", p)) != std::string::npos; ++p) ++bars;
    EXPECT_EQ(bars, 2u);
    const auto overall = report::read_json(dir.path / "out/overall.json");
    const auto csv = slurp(dir.path / "rep/aggregate.csv");
    EXPECT_NE(csv.find("C-s2,all,"), std::string::npos);
    const double all = std::stod(csv.substr(csv.find("C-s2,all,") + 9));
    EXPECT_NEAR(all, overall.at("mean_accuracy").get<double>(), 1e-12);
}
