#pragma once

// Resolved run configuration. Precedence: built-in defaults, then a JSON
// config file, then command-line flags.

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sconvnet/cv.hpp"
#include "sconvnet/dsp.hpp"
#include "sconvnet/models.hpp"

namespace sconvnet {

struct RunConfig {
    std::string model = "A";
    std::vector<std::string> subjects;
    std::uint64_t seed = 42;
    bool batch_norm = true;
    std::optional<double> dropout;  // unset: 0.35, or 0.25 for AllConv
    std::string activation = "elu";
    std::string pool = "none";      // none | max | avg
    bool literal_pooling = false;
    std::size_t batch_size = 256;
    int max_epochs = 100;
    int patience = 5;
    double learning_rate = 0.001;
    std::string init = "xavier";
    std::string layout;             // empty: row-major channel order
    dsp::FilterSpec filter;
    std::string out = "runs";
    std::size_t parallel_folds = 1;

    [[nodiscard]] double resolved_dropout() const {
        return dropout ? *dropout : (models::is_all_conv(model) ? models::kAllConvNetDropout : models::kSConvNetDropout);
    }

    [[nodiscard]] models::PoolOption pool_option() const {
        if (pool == "none") return models::PoolOption::None;
        if (pool == "max") return models::PoolOption::Max;
        if (pool == "avg" || pool == "average") return models::PoolOption::Average;
        throw ConfigError("config: pool must be none, max or avg (got '" + pool + "')");
    }

    [[nodiscard]] models::ModelOptions model_options(std::size_t classes) const {
        models::ModelOptions o;
        o.classes = classes;
        o.batch_norm = batch_norm;
        o.dropout = resolved_dropout();
        try {
            o.activation = ActivationKind::parse(activation);
        } catch (const Error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        o.pool = pool_option();
        o.literal_pooling = literal_pooling;
        return o;
    }

    [[nodiscard]] cv::TrainConfig train_config() const {
        cv::TrainConfig t;
        t.batch_size = batch_size;
        t.max_epochs = max_epochs;
        t.patience = patience;
        t.adam.learning_rate = learning_rate;
        t.seed = seed;
        t.init = init == "he" ? InitScheme::He : InitScheme::Xavier;
        return t;
    }

    void validate() const {
        try {
            (void)models::canonical_name(model);
            (void)ActivationKind::parse(activation);
            filter.validate();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        (void)pool_option();
        if (dropout && !(*dropout >= 0.0 && *dropout < 1.0)) throw ConfigError("config: dropout must lie in [0, 1)");
        if (batch_size < 2) throw ConfigError("config: batch size must be >= 2");
        if (max_epochs < 1) throw ConfigError("config: max epochs must be >= 1");
        if (patience < 1) throw ConfigError("config: patience must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("config: learning rate must be > 0");
        if (init != "xavier" && init != "he") throw ConfigError("config: init must be xavier or he");
        if (parallel_folds < 1) throw ConfigError("config: parallel folds must be >= 1");
    }

    /// Settings that determine results; output location and worker count
    /// are left out so they cannot perturb summaries.
    [[nodiscard]] nlohmann::ordered_json experiment_json() const {
        nlohmann::ordered_json j;
        j["model"] = models::canonical_name(model);
        j["seed"] = seed;
        j["batch_norm"] = batch_norm;
        j["dropout"] = resolved_dropout();
        j["activation"] = activation;
        j["pool"] = pool;
        j["literal_pooling"] = literal_pooling;
        j["batch_size"] = batch_size;
        j["max_epochs"] = max_epochs;
        j["patience"] = patience;
        j["learning_rate"] = learning_rate;
        j["init"] = init;
        j["layout"] = layout;
        j["filter"] = {{"low_cut", filter.low_cut}, {"high_cut", filter.high_cut}, {"order", filter.order}};
        return j;
    }

    [[nodiscard]] nlohmann::ordered_json to_json() const {
        auto j = experiment_json();
        j["subjects"] = subjects;
        j["out"] = out;
        j["parallel_folds"] = parallel_folds;
        if (!dropout) j["dropout"] = nullptr;
        return j;
    }

    /// Overlays the keys present in `j`; unknown keys are rejected.
    void merge(const nlohmann::json& j) {
        if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
        try {
            for (const auto& [key, v] : j.items()) {
                if (key == "model") model = v.get<std::string>();
                else if (key == "subjects") subjects = v.is_string() ? std::vector<std::string>{v.get<std::string>()}
                                                                     : v.get<std::vector<std::string>>();
                else if (key == "seed") seed = v.get<std::uint64_t>();
                else if (key == "batch_norm") batch_norm = v.get<bool>();
                else if (key == "dropout") dropout = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
                else if (key == "activation") activation = v.get<std::string>();
                else if (key == "pool") pool = v.get<std::string>();
                else if (key == "literal_pooling") literal_pooling = v.get<bool>();
                else if (key == "batch_size") batch_size = v.get<std::size_t>();
                else if (key == "max_epochs") max_epochs = v.get<int>();
                else if (key == "patience") patience = v.get<int>();
                else if (key == "learning_rate") learning_rate = v.get<double>();
                else if (key == "init") init = v.get<std::string>();
                else if (key == "layout") layout = v.get<std::string>();
                else if (key == "out") out = v.get<std::string>();
                else if (key == "parallel_folds") parallel_folds = v.get<std::size_t>();
                else if (key == "filter") {
                    for (const auto& [fk, fv] : v.items()) {
                        if (fk == "low_cut") filter.low_cut = fv.get<double>();
                        else if (fk == "high_cut") filter.high_cut = fv.get<double>();
                        else if (fk == "order") filter.order = fv.get<int>();
                        else throw ConfigError("config: unknown filter key '" + fk + "'");
                    }
                } else {
                    throw ConfigError("config: unknown key '" + key + "'");
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }

    void merge_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("config: cannot open " + path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: " + path + ": " + e.what());
        }
        merge(j);
    }
};

}  // namespace sconvnet
