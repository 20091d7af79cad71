#pragma once

#include "r2upp/data.hpp"
#include "r2upp/graph.hpp"
#include "r2upp/loss.hpp"
#include "r2upp/metrics.hpp"

namespace r2upp {

struct TrainConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    int batch_size = 4;
    int max_epochs = 100;
    int patience = 10;
    uint64_t seed = 0;
    bool deep_supervision = true;
    // optional early exit once train-set ensemble dice reaches this value;
    // 0 disables the check
    double train_dice_stop = 0.0;

    void validate() const {
        if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("adam betas must lie in [0,1)");
    }
};

// Bias-corrected Adam update over all trainable parameters.
void adam_step(ParamStore& store, const TrainConfig& config);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    double val_dice = 0;
};

struct FitResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_loss = 0;
    double final_train_dice = 0;
    // parameter values at the last epoch, before the best-checkpoint restore
    std::vector<Tensor> final_values;
};

// Deep-supervised training loop with early stopping; on return the model
// holds the best-validation-loss parameters.
FitResult fit(Model& model, const std::vector<data::ImageSample>& train_set,
              const std::vector<data::ImageSample>& val_set, const TrainConfig& config);

enum class EvalMode { SingleHead, Ensemble };

// Whole-image forward in inference mode; returns the probability map of the
// requested head (q in 1..depth) or the mean over all heads.
data::Image predict_probability(Model& model, const data::Image& image, EvalMode mode, int q = 0);

struct MetricSummary {
    std::vector<metrics::MetricRow> per_image;
    metrics::MetricRow mean;
    metrics::MetricRow sd;
};

MetricSummary evaluate(Model& model, const std::vector<data::ImageSample>& dataset, EvalMode mode,
                       int q = 0, double threshold = 0.5);

// Assembles images into a 1-channel NCHW batch (and masks into labels).
Tensor images_to_tensor(const std::vector<const data::Image*>& images);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace r2upp
