#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sconvnet/error.hpp"
#include "sconvnet/layer.hpp"

namespace sconvnet::optim {

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias-corrected moments. Moments are kept in double regardless
/// of the parameter type.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
        if (!(cfg.learning_rate > 0.0)) throw ParameterError("adam: learning rate must be > 0");
        if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
            throw ParameterError("adam: betas must lie in [0, 1)");
        if (!(cfg.epsilon > 0.0)) throw ParameterError("adam: epsilon must be > 0");
    }

    /// One update of every parameter block. The first call fixes the block
    /// layout; later calls must pass blocks of the same sizes.
    template <typename T>
    void step(std::span<const ParamView<T>> params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.value.size(), 0.0);
                v_.emplace_back(p.value.size(), 0.0);
            }
        }
        if (params.size() != m_.size()) throw ParameterError("adam: parameter block count changed");
        for (std::size_t b = 0; b < params.size(); ++b) {
            if (params[b].value.size() != m_[b].size() || params[b].grad.size() != m_[b].size())
                throw ParameterError("adam: parameter/gradient size mismatch in block " + std::to_string(b));
            if (!Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(params[b].grad.data(),
                                                                     static_cast<Eigen::Index>(params[b].grad.size()))
                     .allFinite())
                throw NumericError("adam: non-finite gradient in block " + std::to_string(b));
        }
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const double lr1 = cfg_.learning_rate / c1, inv_c2 = 1.0 / c2;
        const double b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.epsilon;
        for (std::size_t b = 0; b < params.size(); ++b) {
            const std::size_t len = m_[b].size();
            T* __restrict w = params[b].value.data();
            const T* __restrict g = params[b].grad.data();
            double* __restrict m = m_[b].data();
            double* __restrict v = v_[b].data();
            for (std::size_t i = 0; i < len; ++i) {
                const double gi = static_cast<double>(g[i]);
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                w[i] = static_cast<T>(static_cast<double>(w[i]) - lr1 * m[i] / (std::sqrt(v[i] * inv_c2) + eps));
            }
        }
    }

    template <typename T>
    void step(const std::vector<ParamView<T>>& params) {
        step(std::span<const ParamView<T>>(params));
    }

    /// Single-block convenience overload.
    template <typename T>
    void step(std::span<T> value, std::span<T> grad) {
        const std::vector<ParamView<T>> one{{value, grad}};
        step(std::span<const ParamView<T>>(one));
    }

    [[nodiscard]] std::size_t steps() const { return t_; }
    [[nodiscard]] const AdamConfig& config() const { return cfg_; }
    [[nodiscard]] const std::vector<std::vector<double>>& first_moments() const { return m_; }
    [[nodiscard]] const std::vector<std::vector<double>>& second_moments() const { return v_; }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

enum class StopDecision { Continue, Stop };

/// Stops after `patience` consecutive epochs without a strictly lower
/// validation loss, or once `max_epochs` epochs have been observed.
class EarlyStopping {
public:
    EarlyStopping(int patience = 5, int max_epochs = 100) : patience_(patience), max_epochs_(max_epochs) {
        if (patience < 1) throw ParameterError("early stopping: patience must be >= 1");
        if (max_epochs < 1) throw ParameterError("early stopping: max epochs must be >= 1");
    }

    StopDecision update(double validation_loss) {
        if (!std::isfinite(validation_loss)) throw NumericError("early stopping: non-finite validation loss");
        ++epoch_;
        if (validation_loss < best_) {
            best_ = validation_loss;
            best_epoch_ = epoch_;
            since_ = 0;
        } else {
            ++since_;
        }
        return (since_ >= patience_ || epoch_ >= max_epochs_) ? StopDecision::Stop : StopDecision::Continue;
    }

    /// True when the last update set a new best.
    [[nodiscard]] bool improved() const { return since_ == 0 && epoch_ > 0; }
    [[nodiscard]] double best_loss() const { return best_; }
    [[nodiscard]] int best_epoch() const { return best_epoch_; }
    [[nodiscard]] int epochs() const { return epoch_; }
    [[nodiscard]] int epochs_since_improvement() const { return since_; }
    [[nodiscard]] int patience() const { return patience_; }
    [[nodiscard]] int max_epochs() const { return max_epochs_; }

private:
    int patience_;
    int max_epochs_;
    int epoch_ = 0;
    int since_ = 0;
    int best_epoch_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace sconvnet::optim
