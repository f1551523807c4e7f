#pragma once

// Leave-one-trial-out cross-validation: fold planning, the per-fold
// train/validate/test loop, confusion matrices and aggregation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sconvnet/dataio.hpp"
#include "sconvnet/imaging.hpp"
#include "sconvnet/models.hpp"
#include "sconvnet/optim.hpp"

namespace sconvnet::cv {

/// Independent 64-bit stream seed for (master, stream, index). seed_seq's
/// mixing is fully specified, so this is portable.
[[nodiscard]] inline std::uint64_t derive_seed(std::uint64_t master, std::uint32_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32), stream,
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace detail {

// Unbiased draw in [0, n). Written out rather than using
// uniform_int_distribution so sampling is identical across standard libraries.
inline std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return x % n;
}

template <typename V>
void shuffle(V& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(rng, i)]);
}

}  // namespace detail

enum SeedStream : std::uint32_t { kValidationStream = 1, kInitStream = 2, kDropoutStream = 3, kShuffleStream = 4 };

struct FoldPlan {
    std::size_t held_out_trial = 0;  // 0-based
    std::vector<std::size_t> test;
    std::vector<std::size_t> validation;  // ascending
    std::vector<std::size_t> train;       // ascending
};

/// Validation holdout size: one eighth of the non-test images, rounded.
[[nodiscard]] inline std::size_t validation_size(std::size_t remaining) { return (remaining + 4) / 8; }

/// One fold per trial. Fold t tests on trial t of every gesture; the
/// validation images are drawn without replacement from the rest.
[[nodiscard]] inline std::vector<FoldPlan> make_folds(const dataio::DatasetIndex& idx, std::uint64_t seed) {
    if (idx.gestures < 2 || idx.samples_per_trial < 1)
        throw DataError("folds: index needs at least 2 gestures and 1 sample per trial");
    if (idx.trials < 2) throw DataError("folds: leave-one-trial-out needs at least 2 trials");
    std::vector<FoldPlan> folds(idx.trials);
    for (std::size_t t = 0; t < idx.trials; ++t) {
        auto& f = folds[t];
        f.held_out_trial = t;
        std::vector<std::size_t> rest;
        rest.reserve(idx.size());
        for (std::size_t g = 0; g < idx.gestures; ++g)
            for (std::size_t tt = 0; tt < idx.trials; ++tt) {
                const auto [b, e] = idx.range(g, tt);
                for (std::size_t i = b; i < e; ++i) (tt == t ? f.test : rest).push_back(i);
            }
        // partial Fisher-Yates: the first k slots become the validation draw
        std::mt19937_64 rng(derive_seed(seed, kValidationStream, t));
        const std::size_t k = validation_size(rest.size());
        for (std::size_t i = 0; i < k; ++i) std::swap(rest[i], rest[i + detail::below(rng, rest.size() - i)]);
        f.validation.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(k));
        f.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(k), rest.end());
        std::sort(f.validation.begin(), f.validation.end());
        std::sort(f.train.begin(), f.train.end());
    }
    return folds;
}

/// Same as above, after checking the image set really covers its index.
[[nodiscard]] inline std::vector<FoldPlan> make_folds(const dataio::ImageSet& set, std::uint64_t seed) {
    const auto& idx = set.index;
    if (set.size() != idx.size() || set.trial.size() != set.size() || set.sample.size() != set.size() ||
        set.pixels.size() != set.size() * set.pixels_per_image())
        throw DataError("folds: image set holds " + std::to_string(set.size()) + " images, index expects " +
                        std::to_string(idx.size()));
    for (std::size_t g = 0; g < idx.gestures; ++g)
        for (std::size_t t = 0; t < idx.trials; ++t)
            for (std::size_t s = 0; s < idx.samples_per_trial; ++s) {
                const std::size_t f = idx.frame(g, t, s);
                if (set.gesture[f] != g || set.trial[f] != t || set.sample[f] != s)
                    throw DataError("folds: image " + std::to_string(f) + " is out of order or missing");
            }
    return make_folds(idx, seed);
}

/// Network-ready inputs: one float image per frame plus 0-based labels.
struct Dataset {
    Shape sample{1, 1, imaging::kGridRows, imaging::kGridCols};
    std::size_t classes = 0;
    std::vector<float> x;
    std::vector<std::size_t> labels;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::span<const float> image(std::size_t i) const {
        return std::span<const float>(x).subspan(i * sample.per_sample(), sample.per_sample());
    }
};

/// With batch norm the raw 0..255 intensities go in (the input BN layer
/// scales them); without it each image is max-min scaled to [0, 1]. The
/// all-convolutional model gets the 16x8 image zero-padded to 16x16.
[[nodiscard]] inline Dataset make_dataset(const dataio::ImageSet& set, const models::ModelSpec& spec) {
    if (set.rows != imaging::kGridRows || set.cols != imaging::kGridCols)
        throw ShapeError("dataset: expected 16x8 images");
    Dataset d;
    d.sample = spec.input;
    d.sample.n = 1;
    d.classes = spec.classes;
    if (set.index.gestures != spec.classes)
        throw ConfigError("dataset: data has " + std::to_string(set.index.gestures) + " gestures, model expects " +
                          std::to_string(spec.classes));
    const bool pad = d.sample.h == 16 && d.sample.w == 16;
    if (!pad && (d.sample.h != imaging::kGridRows || d.sample.w != imaging::kGridCols))
        throw ShapeError("dataset: model input " + d.sample.str() + " is neither 16x8 nor 16x16");
    const std::size_t per = d.sample.per_sample();
    d.x.resize(set.size() * per);
    d.labels.resize(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        d.labels[i] = set.gesture[i];
        imaging::NormalizedImage img;
        const auto raw = set.image(i);
        if (spec.batch_norm) {
            img = raw.with_pixels(std::vector<double>(raw.pixels.begin(), raw.pixels.end()));
        } else {
            img = imaging::max_min_normalize(raw);
        }
        if (pad) img = imaging::pad_to_square(img);
        std::transform(img.pixels.begin(), img.pixels.end(), d.x.begin() + static_cast<std::ptrdiff_t>(i * per),
                       [](double v) { return static_cast<float>(v); });
    }
    return d;
}

struct TrainConfig {
    std::size_t batch_size = 256;
    int max_epochs = 100;
    int patience = 5;
    optim::AdamConfig adam;
    InitScheme init = InitScheme::Xavier;
    std::uint64_t seed = 42;

    void validate() const {
        if (batch_size < 2) throw ConfigError("train: batch size must be >= 2");
        if (max_epochs < 1) throw ConfigError("train: max epochs must be >= 1");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (!(adam.learning_rate > 0.0) || !std::isfinite(adam.learning_rate))
            throw ConfigError("train: learning rate must be > 0");
    }
};

/// G x G confusion counts, rows = true class, columns = predicted.
struct FoldResult {
    std::size_t held_out_trial = 0;
    std::size_t classes = 0;
    std::vector<std::uint64_t> confusion;
    std::vector<std::uint64_t> correct;
    std::uint64_t total = 0;
    double accuracy = 0.0;
    int epochs = 0;
    int best_epoch = 0;
    double best_validation_loss = 0.0;

    [[nodiscard]] std::uint64_t count(std::size_t truth, std::size_t predicted) const {
        return confusion[truth * classes + predicted];
    }

    /// Accuracy = sum of per-class correct counts / total.
    [[nodiscard]] static FoldResult from_predictions(std::size_t classes, std::span<const std::size_t> truth,
                                                     std::span<const std::size_t> predicted) {
        if (truth.size() != predicted.size()) throw ShapeError("fold result: truth/prediction length mismatch");
        FoldResult r;
        r.classes = classes;
        r.confusion.assign(classes * classes, 0);
        r.correct.assign(classes, 0);
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (truth[i] >= classes || predicted[i] >= classes)
                throw ParameterError("fold result: class index outside " + std::to_string(classes) + " classes");
            ++r.confusion[truth[i] * classes + predicted[i]];
            if (truth[i] == predicted[i]) ++r.correct[truth[i]];
        }
        r.total = truth.size();
        const std::uint64_t hits = std::accumulate(r.correct.begin(), r.correct.end(), std::uint64_t{0});
        r.accuracy = r.total ? static_cast<double>(hits) / static_cast<double>(r.total) : 0.0;
        return r;
    }
};

template <typename T>
struct FoldOutcome {
    FoldResult result;
    Network<T> network;
    std::vector<double> validation_losses;
};

struct EpochEvent {
    std::size_t fold = 0;
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    bool improved = false;
};
using EpochCallback = std::function<void(const EpochEvent&)>;

namespace detail {

template <typename T>
void gather(const Dataset& d, std::span<const std::size_t> ids, Tensor<T>& x, std::vector<std::size_t>& y) {
    const std::size_t per = d.sample.per_sample();
    x.resize({ids.size(), d.sample.c, d.sample.h, d.sample.w});
    y.resize(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto img = d.image(ids[k]);
        std::transform(img.begin(), img.end(), x.data() + k * per, [](float v) { return static_cast<T>(v); });
        y[k] = d.labels[ids[k]];
    }
}

/// Batch boundaries; a trailing batch of one is folded into its predecessor
/// because batch statistics need at least two samples.
inline std::vector<std::size_t> batch_bounds(std::size_t n, std::size_t batch) {
    std::vector<std::size_t> b;
    for (std::size_t i = 0; i < n; i += batch) b.push_back(i);
    b.push_back(n);
    if (b.size() > 2 && b[b.size() - 1] - b[b.size() - 2] == 1) b.erase(b.end() - 2);
    return b;
}

}  // namespace detail

/// Mean cross-entropy and argmax predictions over `ids` in evaluation mode.
template <typename T>
std::pair<double, std::vector<std::size_t>> evaluate(Network<T>& net, const Dataset& d, std::span<const std::size_t> ids,
                                                     std::size_t batch = 256) {
    Tensor<T> x;
    std::vector<std::size_t> y, pred;
    pred.reserve(ids.size());
    double total = 0.0;
    for (std::size_t b = 0; b < ids.size(); b += batch) {
        const auto part = ids.subspan(b, std::min(batch, ids.size() - b));
        detail::gather(d, part, x, y);
        const auto& logits = net.forward(x, Mode::Eval);
        total += softmax_cross_entropy<T>(logits, y, nullptr).total_loss;
        const std::size_t g = logits.shape().per_sample();
        for (std::size_t i = 0; i < part.size(); ++i)
            pred.push_back(predict(std::span<const T>(logits.data() + i * g, g)));
    }
    return {ids.empty() ? 0.0 : total / static_cast<double>(ids.size()), std::move(pred)};
}

/// Trains a freshly initialised model on one fold and scores its test set
/// with the weights from the best validation epoch.
template <typename T = float>
FoldOutcome<T> run_fold(const Dataset& d, const FoldPlan& plan, const models::ModelSpec& spec, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (plan.train.size() < 2) throw DataError("fold: training set needs at least two images");
    const std::size_t fold = plan.held_out_trial;
    Network<T> net = models::build<T>(spec);
    net.init(cfg.init, derive_seed(cfg.seed, kInitStream, fold));
    net.reseed_dropout(derive_seed(cfg.seed, kDropoutStream, fold));
    optim::Adam adam(cfg.adam);
    optim::EarlyStopping stop(cfg.patience, cfg.max_epochs);

    std::vector<std::size_t> order = plan.train;
    const auto bounds = detail::batch_bounds(order.size(), cfg.batch_size);
    Tensor<T> x, grad;
    std::vector<std::size_t> y;
    std::vector<std::vector<T>> best = net.snapshot();
    std::vector<double> val_losses;

    for (int epoch = 1;; ++epoch) {
        order = plan.train;
        std::mt19937_64 rng(derive_seed(cfg.seed, kShuffleStream, fold * 1000003u + static_cast<std::uint64_t>(epoch)));
        detail::shuffle(order, rng);
        double train_total = 0.0;
        for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
            const auto ids = std::span<const std::size_t>(order).subspan(bounds[b], bounds[b + 1] - bounds[b]);
            detail::gather(d, ids, x, y);
            const auto& logits = net.forward(x, Mode::Train);
            const auto loss = softmax_cross_entropy<T>(logits, y, &grad);
            if (!std::isfinite(loss.mean_loss))
                throw NumericError("training diverged: fold " + std::to_string(fold + 1) + ", epoch " +
                                   std::to_string(epoch) + ", step " + std::to_string(b + 1) + ": non-finite loss");
            train_total += loss.total_loss;
            net.backward(grad);
            try {
                adam.step(net.params());
            } catch (const NumericError& e) {
                throw NumericError("training diverged: fold " + std::to_string(fold + 1) + ", epoch " +
                                   std::to_string(epoch) + ", step " + std::to_string(b + 1) + ": " + e.what());
            }
        }
        double val = 0.0;
        if (!plan.validation.empty()) val = evaluate(net, d, plan.validation, cfg.batch_size).first;
        else val = train_total / static_cast<double>(order.size());
        if (!std::isfinite(val))
            throw NumericError("training diverged: fold " + std::to_string(fold + 1) + ", epoch " +
                               std::to_string(epoch) + ": non-finite validation loss");
        val_losses.push_back(val);
        const auto decision = stop.update(val);
        if (stop.improved()) best = net.snapshot();
        if (on_epoch) on_epoch({fold, epoch, train_total / static_cast<double>(order.size()), val, stop.improved()});
        if (decision == optim::StopDecision::Stop) break;
    }

    net.restore(best);
    const auto [test_loss, pred] = evaluate(net, d, plan.test, cfg.batch_size);
    (void)test_loss;
    std::vector<std::size_t> truth(plan.test.size());
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = d.labels[plan.test[i]];
    FoldOutcome<T> out{FoldResult::from_predictions(d.classes, truth, pred), std::move(net), std::move(val_losses)};
    out.result.held_out_trial = fold;
    out.result.epochs = stop.epochs();
    out.result.best_epoch = stop.best_epoch();
    out.result.best_validation_loss = stop.best_loss();
    return out;
}

/// Runs every fold, `workers` at a time. Each fold is a pure function of its
/// plan and the master seed, so the results do not depend on `workers`.
/// Only the network of the last fold is kept.
template <typename T = float>
std::pair<std::vector<FoldResult>, Network<T>> run_folds(const Dataset& d, const std::vector<FoldPlan>& plans,
                                                         const models::ModelSpec& spec, const TrainConfig& cfg,
                                                         std::size_t workers = 1, const EpochCallback& on_epoch = {}) {
    if (plans.empty()) throw ConfigError("cv: no folds to run");
    cfg.validate();
    std::vector<FoldResult> results(plans.size());
    Network<T> last;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    EpochCallback cb;
    if (on_epoch)
        cb = [&](const EpochEvent& e) {
            std::lock_guard lock(mu);
            on_epoch(e);
        };
    const auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < plans.size();) {
            {
                std::lock_guard lock(mu);
                if (failure) return;
            }
            try {
                auto out = run_fold<T>(d, plans[i], spec, cfg, cb);
                std::lock_guard lock(mu);
                results[i] = std::move(out.result);
                if (i + 1 == plans.size()) last = std::move(out.network);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, plans.size());
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return {std::move(results), std::move(last)};
}

struct SubjectReport {
    std::uint32_t subject_id = 0;
    std::size_t classes = 0;
    std::vector<double> fold_accuracies;
    double mean_accuracy = 0.0;
    std::vector<std::uint64_t> confusion;  // summed over folds
};

[[nodiscard]] inline SubjectReport aggregate(std::span<const FoldResult> folds, std::uint32_t subject_id = 0) {
    if (folds.empty()) throw ParameterError("aggregate: no folds");
    SubjectReport r;
    r.subject_id = subject_id;
    r.classes = folds.front().classes;
    r.confusion.assign(r.classes * r.classes, 0);
    double sum = 0.0;
    for (const auto& f : folds) {
        if (f.classes != r.classes) throw ParameterError("aggregate: folds disagree on the class count");
        r.fold_accuracies.push_back(f.accuracy);
        sum += f.accuracy;
        for (std::size_t k = 0; k < r.confusion.size(); ++k) r.confusion[k] += f.confusion[k];
    }
    r.mean_accuracy = sum / static_cast<double>(folds.size());
    return r;
}

[[nodiscard]] inline SubjectReport aggregate(const std::vector<FoldResult>& folds, std::uint32_t subject_id = 0) {
    return aggregate(std::span<const FoldResult>(folds), subject_id);
}

/// Unweighted mean over the subjects' fold accuracies.
[[nodiscard]] inline double mean_of(std::span<const double> values) {
    if (values.empty()) throw ParameterError("mean: empty input");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

struct OverallReport {
    std::vector<SubjectReport> subjects;
    double mean_accuracy = 0.0;
    std::vector<std::uint64_t> confusion;
};

[[nodiscard]] inline OverallReport aggregate_subjects(const std::vector<SubjectReport>& subjects) {
    if (subjects.empty()) throw ParameterError("aggregate: no subjects");
    OverallReport o;
    o.subjects = subjects;
    o.confusion.assign(subjects.front().confusion.size(), 0);
    std::vector<double> means;
    for (const auto& s : subjects) {
        if (s.confusion.size() != o.confusion.size())
            throw ParameterError("aggregate: subjects disagree on the class count");
        means.push_back(s.mean_accuracy);
        for (std::size_t k = 0; k < o.confusion.size(); ++k) o.confusion[k] += s.confusion[k];
    }
    o.mean_accuracy = mean_of(means);
    return o;
}

}  // namespace sconvnet::cv
