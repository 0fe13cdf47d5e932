#pragma once

// Single-file checkpoint: weights, optional optimizer state, epoch, best metric and the
// run configuration text it was trained with.

#include "camoseg/config.hpp"
#include "camoseg/model.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <memory>

namespace camoseg {

void save_checkpoint(const std::filesystem::path& path, Segmenter& model, const RunConfig& cfg,
                     torch::optim::Optimizer* optimizer, int epoch, double best_metric);

struct LoadedCheckpoint {
    RunConfig config;
    Segmenter model{nullptr};
    int epoch = 0;
    double best_metric = 0.0;
    bool has_optimizer = false;
};

/// Rebuilds the model from the embedded config (in the stored precision) and loads weights.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::shared_ptr<FeatureEncoder> encoder = nullptr);

/// Config snapshot only, without building the model.
RunConfig read_checkpoint_config(const std::filesystem::path& path);

/// Restores optimizer state saved alongside the weights; returns false if none was stored.
bool load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

}  // namespace camoseg
