#pragma once

// Building blocks shared by the decoder pathways.

#include <torch/torch.h>

#include <cstdint>

namespace camoseg {

/// GroupNorm group count: largest of {8,4,2,1} dividing `channels`.
int64_t norm_groups(int64_t channels);

/// conv(k, stride) -> GroupNorm -> GELU. GroupNorm keeps samples independent in a batch.
class ConvNormActImpl : public torch::nn::Module {
public:
    /// `padding` < 0 selects kernel / 2.
    ConvNormActImpl(int64_t in_channels, int64_t out_channels, int64_t kernel = 3, int64_t stride = 1,
                    bool replicate_padding = false, int64_t padding = -1);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::GroupNorm norm{nullptr};
};
TORCH_MODULE(ConvNormAct);

/// Depthwise 3x3 followed by pointwise 1x1. With `activate`, adds GroupNorm + GELU.
class DepthwiseSeparableConvImpl : public torch::nn::Module {
public:
    DepthwiseSeparableConvImpl(int64_t in_channels, int64_t out_channels, bool activate = true);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d depthwise{nullptr};
    torch::nn::Conv2d pointwise{nullptr};
    torch::nn::GroupNorm norm{nullptr};
};
TORCH_MODULE(DepthwiseSeparableConv);

/// Kernel size of the ECA 1-D conv: t = |(log2 C + 1) / 2|, rounded up to odd.
int64_t eca_kernel_size(int64_t channels);

/// Efficient channel attention: GAP -> 1-D conv across channels -> sigmoid -> rescale.
class EfficientChannelAttentionImpl : public torch::nn::Module {
public:
    explicit EfficientChannelAttentionImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);
    /// Per-channel weights, B x C x 1 x 1, in (0,1).
    torch::Tensor weights(const torch::Tensor& x);

    torch::nn::Conv1d conv{nullptr};
};
TORCH_MODULE(EfficientChannelAttention);

/// Channel-wise mean and max, concatenated: B x 2 x H x W.
torch::Tensor channel_pool(const torch::Tensor& x);

/// Spatial attention map sigmoid(conv([mean_c(x), max_c(x)])), B x 1 x H x W.
class SpatialAttentionImpl : public torch::nn::Module {
public:
    explicit SpatialAttentionImpl(int64_t kernel = 7);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(SpatialAttention);

/// Content-adaptive point-sampling upsampler ("lp" style): a 1x1 projection predicts
/// per-group sub-pixel offsets (scaled by 0.25), which displace the regular grid of a
/// bilinear sampler. Zero offsets reduce exactly to bilinear upsampling with
/// half-pixel centres.
class DySampleImpl : public torch::nn::Module {
public:
    DySampleImpl(int64_t channels, int64_t scale = 2, int64_t groups = 4);
    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor offsets(const torch::Tensor& x);
    torch::Tensor sample(const torch::Tensor& x, const torch::Tensor& offset);

    int64_t scale;
    int64_t groups;
    torch::nn::Conv2d offset{nullptr};
    torch::Tensor init_pos;
};
TORCH_MODULE(DySample);

enum class UpsampleMode { DySample, Bilinear };

/// x2 (or xscale) upsampler: DySample or plain bilinear (the ablation).
class UpsamplerImpl : public torch::nn::Module {
public:
    UpsamplerImpl(int64_t channels, UpsampleMode mode, int64_t scale = 2, int64_t groups = 4);
    torch::Tensor forward(const torch::Tensor& x);

    UpsampleMode mode;
    int64_t scale;
    DySample dysample{nullptr};
};
TORCH_MODULE(Upsampler);

/// Bilinear resize with half-pixel centres (align_corners = false).
torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width);

/// 1x1 conv to one channel, resized to `output_size` and squashed into [0,1].
/// `resize_logits` selects resize-then-sigmoid (default) or sigmoid-then-resize.
class PredictionHeadImpl : public torch::nn::Module {
public:
    PredictionHeadImpl(int64_t in_channels, int64_t output_size, bool resize_logits = true);
    torch::Tensor forward(const torch::Tensor& x);
    void zero_init();

    int64_t output_size;
    bool resize_logits;
    torch::nn::Conv2d proj{nullptr};
};
TORCH_MODULE(PredictionHead);

/// Throws InternalError unless `x` is 4-D with the given channel count (-1 = any).
void expect_nchw(const torch::Tensor& x, int64_t channels, const char* what);

}  // namespace camoseg
