// Synthesise a small recording, preprocess it, and train model A on one
// leave-one-trial-out fold.

#include <iostream>

#include "sconvnet/sconvnet.hpp"

int main() {
    using namespace sconvnet;

    dataio::SynthSpec synth;
    synth.trials = 4;
    synth.samples_per_trial = 100;
    synth.noise = 0.2;
    const auto rec = dataio::generate_synthetic(synth);

    const auto images = dataio::preprocess(rec, dsp::FilterSpec{});
    std::cout << images.size() << " images of " << images.rows << "x" << images.cols << "\n";

    const auto spec = models::model_spec("A");
    std::cout << "model A: " << models::param_count(spec).total << " parameters\n";

    const auto data = cv::make_dataset(images, spec);
    const auto folds = cv::make_folds(images, 7);
    cv::TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 64;
    const auto out = cv::run_fold<float>(data, folds[0], spec, cfg, [](const cv::EpochEvent& e) {
        std::cout << "epoch " << e.epoch << "  train loss " << e.train_loss << "  val loss " << e.validation_loss
                  << "\n";
    });
    std::cout << "held-out trial 1 accuracy: " << out.result.accuracy * 100.0 << " %\n";
}
