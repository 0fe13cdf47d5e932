#pragma once

#include "camoseg/model.hpp"

#include <torch/torch.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace testutil {

/// Small but complete model: image 56, patch 14 (4x4 grid), every decoder part present.
inline camoseg::ModelConfig micro_model(int64_t image = 56, int64_t patch = 14, int64_t embed = 32) {
    camoseg::ModelConfig c;
    c.backbone.image_size = image;
    c.backbone.patch_size = patch;
    c.backbone.embed_dim = embed;
    c.backbone.num_blocks = 4;
    c.backbone.num_heads = 2;
    c.backbone.num_registers = 2;
    c.backbone.mlp_ratio = 2.0;
    c.decoder.channels = {16, 16, 8};
    c.decoder.out_channels = 8;
    c.decoder.appearance_channels = 8;
    c.decoder.contrast_channels = 4;
    c.decoder.upsample_groups = 4;
    c.decoder.fusion_refine_blocks = 1;
    return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("camoseg_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

}  // namespace testutil
