#pragma once

#include "camoseg/layers.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <optional>

namespace camoseg {

struct FusionOutput {
    torch::Tensor fused;          ///< F_fused^final
    torch::Tensor prediction;     ///< P_final, B x 1 x image_size x image_size
    torch::Tensor attention;      ///< A_spatial, B x 1 x H x W on the fusion grid
    torch::Tensor edge_attended;  ///< F_edge^adapt * A_spatial
};

struct FusionConfig {
    int64_t edge_channels = 256;
    int64_t loc_channels = 128;
    int64_t channels = 128;
    int64_t refine_blocks = 2;
    int64_t image_size = 392;
    bool resize_logits = true;
};

/// Adapts both pathways to a common width, gates the edge features by a spatial map
/// derived from the localization features (channel-wise mean/max -> conv -> sigmoid),
/// concatenates, refines and predicts the final map.
class AttentiveFusionModuleImpl : public torch::nn::Module {
public:
    explicit AttentiveFusionModuleImpl(const FusionConfig& cfg);
    FusionOutput forward(const torch::Tensor& edge_features, const torch::Tensor& loc_features);

    /// Test hook: replace A_spatial by a constant.
    std::optional<double> forced_attention;

    FusionConfig cfg;
    torch::nn::Conv2d edge_adapt{nullptr}, loc_adapt{nullptr};
    SpatialAttention attention{nullptr};
    torch::nn::Sequential refine{nullptr};
    PredictionHead head{nullptr};
};
TORCH_MODULE(AttentiveFusionModule);

}  // namespace camoseg
