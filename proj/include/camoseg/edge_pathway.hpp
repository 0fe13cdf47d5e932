#pragma once

// Edge refinement pathway: early features -> reduce -> upsample -> fuse -> EEM x N -> edge map.

#include "camoseg/layers.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>

namespace camoseg {

/// Fixed 3x3 operators used to initialise the directional paths (row-major).
torch::Tensor sobel_x_kernel(torch::TensorOptions opts = {});
torch::Tensor sobel_y_kernel(torch::TensorOptions opts = {});
torch::Tensor laplacian_kernel(torch::TensorOptions opts = {});

struct EemConfig {
    int64_t channels = 256;
    int64_t num_blocks = 2;
    bool sobel_init = true;
    bool laplacian_init = true;
    /// Group count of the gradient/discontinuity convs; 0 selects channels / 2 (pairs).
    int64_t groups = 0;
    /// Add the module input to the recalibrated output.
    bool residual = true;

    int64_t resolved_groups() const { return groups > 0 ? groups : channels / 2; }
    void validate() const;
};

/// Three parallel paths over the same input:
///  - context: depthwise-separable conv,
///  - gradient: grouped 3x3 conv, output channel o starts as Sobel-x (o even) or
///    Sobel-y (o odd) of its diagonal in-group input channel,
///  - discontinuity: grouped 3x3 conv starting as the 4-neighbour Laplacian.
/// Concatenated, projected back to `channels`, recalibrated by ECA.
class EdgeEnhancementModuleImpl : public torch::nn::Module {
public:
    explicit EdgeEnhancementModuleImpl(const EemConfig& cfg);

    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor context_path(const torch::Tensor& x);
    torch::Tensor gradient_path(const torch::Tensor& x);
    torch::Tensor discontinuity_path(const torch::Tensor& x);

    /// Re-apply (or, with both flags off, replace by default random) directional init.
    void reset_directional_init(bool sobel, bool laplacian);

    EemConfig cfg;
    DepthwiseSeparableConv context{nullptr};
    torch::nn::Conv2d gradient{nullptr};
    torch::nn::Conv2d discontinuity{nullptr};
    ConvNormAct project{nullptr};
    EfficientChannelAttention eca{nullptr};
};
TORCH_MODULE(EdgeEnhancementModule);

struct EdgePathwayConfig {
    int64_t in_channels = 64;
    int64_t stage_channels = 256;
    int64_t image_size = 392;
    EemConfig eem;
    UpsampleMode upsample = UpsampleMode::DySample;
    int64_t upsample_groups = 4;
    bool resize_logits = true;
};

struct EdgePathwayOutput {
    /// F_edge, B x stage_channels x 4S x 4S (the fusion grid).
    torch::Tensor features;
    /// P_edge, B x 1 x image_size x image_size in [0,1].
    torch::Tensor prediction;
};

class EdgeRefinementPathwayImpl : public torch::nn::Module {
public:
    explicit EdgeRefinementPathwayImpl(const EdgePathwayConfig& cfg);

    /// 1x1 channel reduction of each early map followed by x2 upsampling.
    std::array<torch::Tensor, 2> reduce_and_upsample(const std::array<torch::Tensor, 2>& early);
    /// Fused map after the EEM cascade, on the 2S working grid.
    torch::Tensor enhance(const std::array<torch::Tensor, 2>& early);
    EdgePathwayOutput forward(const std::array<torch::Tensor, 2>& early);

    EdgePathwayConfig cfg;
    torch::nn::Conv2d reduce1{nullptr}, reduce2{nullptr};
    Upsampler up1{nullptr}, up2{nullptr};
    ConvNormAct fuse{nullptr};
    torch::nn::ModuleList eems{nullptr};
    PredictionHead head{nullptr};
    Upsampler to_fusion_grid{nullptr};
};
TORCH_MODULE(EdgeRefinementPathway);

}  // namespace camoseg
