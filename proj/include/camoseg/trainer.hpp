#pragma once

// Training loop: AdamW with separate encoder/decoder learning rates, gradient clipping,
// plateau LR schedule, JSONL step logs and best-checkpoint retention.

#include "camoseg/config.hpp"
#include "camoseg/datakit.hpp"
#include "camoseg/losses.hpp"
#include "camoseg/model.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace camoseg {

/// Multiplies the LR by `factor` once `patience` consecutive epochs pass without a strict
/// improvement of the monitored value (lower is better); the counter then restarts.
class PlateauSchedule {
public:
    PlateauSchedule(double factor, int patience, double min_lr);

    /// Feeds one epoch's monitored value; returns the LR to use from now on.
    double step(double value, double current_lr);
    bool last_step_improved() const { return improved_; }
    double best() const { return best_; }
    int bad_epochs() const { return bad_; }

private:
    double factor_;
    int patience_;
    double min_lr_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_ = 0;
    bool improved_ = false;
};

struct StepRecord {
    int64_t step = 0;
    int epoch = 0;
    double loss = 0.0;
    double grad_norm = 0.0;  ///< before clipping
    double decoder_lr = 0.0;
    double encoder_lr = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    double decoder_lr = 0.0;
    bool improved = false;
};

struct TrainResult {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    double best_metric = std::numeric_limits<double>::infinity();
    std::filesystem::path best_checkpoint;
};

struct TrainOptions {
    std::filesystem::path out_dir;  ///< empty: no files written
    bool save_checkpoints = true;
    bool plots = true;
    std::function<void(const StepRecord&)> on_step;
};

/// Seeded split: returns (train indices, validation indices); at least one validation item
/// when fraction > 0 and n >= 2.
std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double fraction, std::uint64_t seed);

/// Deterministic Fisher-Yates shuffle of 0..n-1.
std::vector<size_t> shuffled_indices(size_t n, std::uint64_t seed);

class Trainer {
public:
    explicit Trainer(RunConfig cfg, std::shared_ptr<FeatureEncoder> encoder = nullptr);

    /// Full run. Without `val`, holds out cfg.val_fraction of `train`.
    TrainResult fit(const std::vector<SceneSample>& train, const std::vector<SceneSample>* val = nullptr,
                    const TrainOptions& options = {});

    /// One optimizer step on a prepared batch. Throws TrainingError on a non-finite loss.
    LossReport train_step(const TrainingBatch& batch, StepRecord* record = nullptr);

    /// Mean total loss over the samples (no gradient).
    double evaluate_loss(const std::vector<const SceneSample*>& samples);

    void set_learning_rates(double decoder_lr, double encoder_lr);
    double decoder_lr() const;
    double encoder_lr() const;

    const RunConfig& config() const { return cfg_; }
    Segmenter model{nullptr};
    std::unique_ptr<torch::optim::AdamW> optimizer;

private:
    RunConfig cfg_;
    LossConfig loss_cfg_;
    int64_t step_ = 0;
};

/// Configures threads, seeds and deterministic kernels for a run.
void apply_runtime_settings(const RunConfig& cfg);

}  // namespace camoseg
