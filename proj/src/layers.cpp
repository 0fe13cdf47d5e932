#include "camoseg/layers.hpp"

#include "camoseg/errors.hpp"

#include <cmath>
#include <string>

namespace camoseg {

namespace F = torch::nn::functional;

int64_t norm_groups(int64_t channels) {
    for (int64_t g : {8, 4, 2}) {
        if (channels % g == 0) return g;
    }
    return 1;
}

ConvNormActImpl::ConvNormActImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride,
                                 bool replicate_padding, int64_t padding) {
    auto opts = torch::nn::Conv2dOptions(in_channels, out_channels, kernel)
                    .stride(stride)
                    .padding(padding < 0 ? kernel / 2 : padding);
    if (replicate_padding) opts.padding_mode(torch::kReplicate);
    conv = register_module("conv", torch::nn::Conv2d(opts));
    norm = register_module("norm", torch::nn::GroupNorm(norm_groups(out_channels), out_channels));
}

torch::Tensor ConvNormActImpl::forward(const torch::Tensor& x) {
    return F::gelu(norm->forward(conv->forward(x)));
}

DepthwiseSeparableConvImpl::DepthwiseSeparableConvImpl(int64_t in_channels, int64_t out_channels, bool activate) {
    depthwise = register_module(
        "depthwise",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, in_channels, 3).padding(1).groups(in_channels)));
    pointwise = register_module("pointwise", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1)));
    if (activate) {
        norm = register_module("norm", torch::nn::GroupNorm(norm_groups(out_channels), out_channels));
    }
}

torch::Tensor DepthwiseSeparableConvImpl::forward(const torch::Tensor& x) {
    auto y = pointwise->forward(depthwise->forward(x));
    if (norm) y = F::gelu(norm->forward(y));
    return y;
}

int64_t eca_kernel_size(int64_t channels) {
    const auto t = static_cast<int64_t>(std::abs((std::log2(static_cast<double>(channels)) + 1.0) / 2.0));
    return t % 2 == 1 ? t : t + 1;
}

EfficientChannelAttentionImpl::EfficientChannelAttentionImpl(int64_t channels) {
    const int64_t k = eca_kernel_size(channels);
    conv = register_module("conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(1, 1, k).padding(k / 2).bias(false)));
}

torch::Tensor EfficientChannelAttentionImpl::weights(const torch::Tensor& x) {
    const auto b = x.size(0);
    const auto c = x.size(1);
    auto y = x.mean({2, 3}).view({b, 1, c});
    return torch::sigmoid(conv->forward(y)).view({b, c, 1, 1});
}

torch::Tensor EfficientChannelAttentionImpl::forward(const torch::Tensor& x) { return x * weights(x); }

torch::Tensor channel_pool(const torch::Tensor& x) {
    auto avg = x.mean(1, /*keepdim=*/true);
    auto mx = std::get<0>(x.max(1, /*keepdim=*/true));
    return torch::cat({avg, mx}, 1);
}

SpatialAttentionImpl::SpatialAttentionImpl(int64_t kernel) {
    conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, kernel).padding(kernel / 2).padding_mode(torch::kReplicate)));
}

torch::Tensor SpatialAttentionImpl::forward(const torch::Tensor& x) {
    return torch::sigmoid(conv->forward(channel_pool(x)));
}

DySampleImpl::DySampleImpl(int64_t channels, int64_t scale_, int64_t groups_) : scale(scale_), groups(groups_) {
    if (groups <= 0 || channels % groups != 0) {
        throw ConfigError("DySample: channels (" + std::to_string(channels) + ") not divisible by groups (" +
                          std::to_string(groups) + ")");
    }
    if (scale < 2) throw ConfigError("DySample: scale must be >= 2");
    offset = register_module(
        "offset", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 2 * groups * scale * scale, 1)));
    {
        torch::NoGradGuard guard;
        offset->weight.normal_(0.0, 1e-3);
        offset->bias.zero_();
    }
    // Sub-pixel start positions, ordered [xy][group][row][col] to match pixel_shuffle.
    auto h = (torch::arange(scale, torch::kFloat64) - (scale - 1) / 2.0) / static_cast<double>(scale);
    auto grids = torch::meshgrid({h, h}, "ij");
    auto pos = torch::stack({grids[1], grids[0]});  // x varies along columns, y along rows
    pos = pos.view({2, 1, scale * scale}).repeat({1, groups, 1}).reshape({1, -1, 1, 1});
    init_pos = register_buffer("init_pos", pos.to(torch::kFloat32));
}

torch::Tensor DySampleImpl::offsets(const torch::Tensor& x) { return offset->forward(x) * 0.25 + init_pos; }

torch::Tensor DySampleImpl::sample(const torch::Tensor& x, const torch::Tensor& off) {
    const auto b = off.size(0);
    const auto h = off.size(2);
    const auto w = off.size(3);
    auto topt = x.options();
    auto o = off.view({b, 2, -1, h, w});
    auto cx = torch::arange(w, topt) + 0.5;
    auto cy = torch::arange(h, topt) + 0.5;
    auto mesh = torch::meshgrid({cy, cx}, "ij");
    auto coords = torch::stack({mesh[1], mesh[0]}).view({1, 2, 1, h, w});
    auto normalizer = torch::tensor({static_cast<double>(w), static_cast<double>(h)}, topt).view({1, 2, 1, 1, 1});
    coords = 2.0 * (coords + o) / normalizer - 1.0;
    coords = F::pixel_shuffle(coords.reshape({b, -1, h, w}), scale)
                 .view({b, 2, -1, scale * h, scale * w})
                 .permute({0, 2, 3, 4, 1})
                 .contiguous()
                 .flatten(0, 1);
    auto sampled = F::grid_sample(x.reshape({b * groups, -1, h, w}), coords,
                                  F::GridSampleFuncOptions()
                                      .mode(torch::kBilinear)
                                      .padding_mode(torch::kBorder)
                                      .align_corners(false));
    return sampled.view({b, -1, scale * h, scale * w});
}

torch::Tensor DySampleImpl::forward(const torch::Tensor& x) {
    if (x.size(2) < 2 || x.size(3) < 2) throw InputError("DySample: spatial dims must be >= 2");
    return sample(x, offsets(x));
}

UpsamplerImpl::UpsamplerImpl(int64_t channels, UpsampleMode mode_, int64_t scale_, int64_t groups)
    : mode(mode_), scale(scale_) {
    if (mode == UpsampleMode::DySample) {
        dysample = register_module("dysample", DySample(channels, scale, groups));
    }
}

torch::Tensor UpsamplerImpl::forward(const torch::Tensor& x) {
    if (mode == UpsampleMode::DySample) return dysample->forward(x);
    return resize_bilinear(x, x.size(2) * scale, x.size(3) * scale);
}

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width) {
    if (x.size(2) == height && x.size(3) == width) return x;
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{height, width})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

PredictionHeadImpl::PredictionHeadImpl(int64_t in_channels, int64_t output_size_, bool resize_logits_)
    : output_size(output_size_), resize_logits(resize_logits_) {
    proj = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, 1, 1)));
}

void PredictionHeadImpl::zero_init() {
    torch::NoGradGuard guard;
    proj->weight.zero_();
    proj->bias.zero_();
}

torch::Tensor PredictionHeadImpl::forward(const torch::Tensor& x) {
    auto logits = proj->forward(x);
    if (resize_logits) return torch::sigmoid(resize_bilinear(logits, output_size, output_size));
    return resize_bilinear(torch::sigmoid(logits), output_size, output_size);
}

void expect_nchw(const torch::Tensor& x, int64_t channels, const char* what) {
    if (x.dim() != 4 || (channels >= 0 && x.size(1) != channels)) {
        throw InternalError(std::string(what) + ": expected N x " +
                            (channels >= 0 ? std::to_string(channels) : std::string("C")) + " x H x W, got " +
                            std::to_string(x.dim()) + "-D tensor");
    }
}

}  // namespace camoseg
