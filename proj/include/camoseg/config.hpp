#pragma once

// Run configuration and its text form.
//
// File format: one `section.key = value` per line, `#` starts a comment, lists are
// comma-separated. Every key can also be set with `--set section.key=value`.

#include "camoseg/datakit.hpp"
#include "camoseg/losses.hpp"
#include "camoseg/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace camoseg {

struct OptimizerConfig {
    double decoder_lr = 1e-4;
    double encoder_lr = 2e-5;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
};

struct ScheduleConfig {
    double factor = 0.5;
    int patience = 10;
    double min_lr = 1e-6;
    /// val_loss (default) or train_loss.
    std::string monitor = "val_loss";
};

struct RunConfig {
    ModelConfig model;
    LossConfig loss;
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> std{0.229, 0.224, 0.225};
    OptimizerConfig optim;
    ScheduleConfig schedule;
    int epochs = 200;
    int batch_size = 8;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;
    int64_t max_steps = 0;  ///< 0 = no limit
    bool deterministic = true;
    int num_threads = 1;

    void validate() const;
    /// Preprocessing tied to the backbone input size.
    PreprocessConfig preprocess() const;
    /// Loss weights adjusted for the ablation toggles (no_erp drops L_edge, no_clp drops
    /// the Tversky term of L_loc).
    LossConfig effective_loss() const;

    /// Sets one key; throws ConfigError for unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);
    std::vector<std::string> keys() const;
    std::string get(const std::string& key) const;

    std::string to_text() const;
    static RunConfig from_text(const std::string& text);
    static RunConfig load(const std::filesystem::path& p);
    void save(const std::filesystem::path& p) const;
};

/// Output root: $CAMOSEG_OUTPUT_ROOT when set, otherwise `fallback`.
std::filesystem::path output_root(const std::filesystem::path& fallback = "runs");

}  // namespace camoseg
