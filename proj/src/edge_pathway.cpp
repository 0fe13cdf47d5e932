#include "camoseg/edge_pathway.hpp"

#include "camoseg/errors.hpp"

#include <functional>
#include <string>

namespace camoseg {

torch::Tensor sobel_x_kernel(torch::TensorOptions opts) {
    return torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, opts.dtype(torch::kFloat64)).view({3, 3});
}

torch::Tensor sobel_y_kernel(torch::TensorOptions opts) { return sobel_x_kernel(opts).t().contiguous(); }

torch::Tensor laplacian_kernel(torch::TensorOptions opts) {
    return torch::tensor({0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0}, opts.dtype(torch::kFloat64)).view({3, 3});
}

void EemConfig::validate() const {
    if (channels <= 0) throw ConfigError("EEM channels must be positive");
    if (num_blocks < 1) throw ConfigError("EEM num_blocks must be >= 1");
    const auto g = resolved_groups();
    if (g <= 0 || channels % g != 0) {
        throw ConfigError("EEM channels (" + std::to_string(channels) + ") not divisible by groups (" +
                          std::to_string(g) + ")");
    }
}

namespace {

// Replicate padding: derivative operators see no artificial step at the border.
torch::nn::Conv2d grouped3x3(int64_t channels, int64_t groups) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3)
                                 .padding(1)
                                 .padding_mode(torch::kReplicate)
                                 .groups(groups)
                                 .bias(false));
}

// Weight layout of a grouped conv: [out, in_per_group, 3, 3]. Output o sees input
// channels of its own group; its "diagonal" input is o mod group_size.
void load_diagonal(torch::Tensor& weight, const std::function<torch::Tensor(int64_t)>& kernel_for) {
    torch::NoGradGuard guard;
    weight.zero_();
    const auto out = weight.size(0);
    const auto per_group = weight.size(1);
    for (int64_t o = 0; o < out; ++o) {
        weight[o][o % per_group].copy_(kernel_for(o));
    }
}

void default_conv_init(torch::nn::Conv2d& conv) { conv->reset_parameters(); }

}  // namespace

EdgeEnhancementModuleImpl::EdgeEnhancementModuleImpl(const EemConfig& cfg_) : cfg(cfg_) {
    cfg.validate();
    const auto c = cfg.channels;
    const auto g = cfg.resolved_groups();
    context = register_module("context", DepthwiseSeparableConv(c, c, /*activate=*/true));
    gradient = register_module("gradient", grouped3x3(c, g));
    discontinuity = register_module("discontinuity", grouped3x3(c, g));
    project = register_module("project", ConvNormAct(3 * c, c, 1));
    eca = register_module("eca", EfficientChannelAttention(c));
    reset_directional_init(cfg.sobel_init, cfg.laplacian_init);
}

void EdgeEnhancementModuleImpl::reset_directional_init(bool sobel, bool laplacian) {
    cfg.sobel_init = sobel;
    cfg.laplacian_init = laplacian;
    if (sobel) {
        auto sx = sobel_x_kernel();
        auto sy = sobel_y_kernel();
        load_diagonal(gradient->weight, [&](int64_t o) { return o % 2 == 0 ? sx : sy; });
    } else {
        default_conv_init(gradient);
    }
    if (laplacian) {
        auto lap = laplacian_kernel();
        load_diagonal(discontinuity->weight, [&](int64_t) { return lap; });
    } else {
        default_conv_init(discontinuity);
    }
}

torch::Tensor EdgeEnhancementModuleImpl::context_path(const torch::Tensor& x) { return context->forward(x); }

torch::Tensor EdgeEnhancementModuleImpl::gradient_path(const torch::Tensor& x) { return gradient->forward(x); }

torch::Tensor EdgeEnhancementModuleImpl::discontinuity_path(const torch::Tensor& x) {
    return discontinuity->forward(x);
}

torch::Tensor EdgeEnhancementModuleImpl::forward(const torch::Tensor& x) {
    expect_nchw(x, cfg.channels, "EEM");
    auto paths = torch::cat({context_path(x), gradient_path(x), discontinuity_path(x)}, 1);
    auto y = eca->forward(project->forward(paths));
    return cfg.residual ? x + y : y;
}

EdgeRefinementPathwayImpl::EdgeRefinementPathwayImpl(const EdgePathwayConfig& cfg_) : cfg(cfg_) {
    const auto c = cfg.stage_channels;
    if (c > cfg.in_channels) {
        throw ConfigError("edge pathway stage channels (" + std::to_string(c) + ") exceed encoder channels (" +
                          std::to_string(cfg.in_channels) + ")");
    }
    cfg.eem.channels = c;
    cfg.eem.validate();
    reduce1 = register_module("reduce1", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.in_channels, c, 1)));
    reduce2 = register_module("reduce2", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.in_channels, c, 1)));
    up1 = register_module("up1", Upsampler(c, cfg.upsample, 2, cfg.upsample_groups));
    up2 = register_module("up2", Upsampler(c, cfg.upsample, 2, cfg.upsample_groups));
    fuse = register_module("fuse", ConvNormAct(2 * c, c, 3));
    eems = register_module("eems", torch::nn::ModuleList());
    for (int64_t i = 0; i < cfg.eem.num_blocks; ++i) eems->push_back(EdgeEnhancementModule(cfg.eem));
    head = register_module("head", PredictionHead(c, cfg.image_size, cfg.resize_logits));
    to_fusion_grid = register_module("to_fusion_grid", Upsampler(c, cfg.upsample, 2, cfg.upsample_groups));
}

std::array<torch::Tensor, 2> EdgeRefinementPathwayImpl::reduce_and_upsample(const std::array<torch::Tensor, 2>& early) {
    expect_nchw(early[0], cfg.in_channels, "edge pathway input");
    expect_nchw(early[1], cfg.in_channels, "edge pathway input");
    return {up1->forward(reduce1->forward(early[0])), up2->forward(reduce2->forward(early[1]))};
}

torch::Tensor EdgeRefinementPathwayImpl::enhance(const std::array<torch::Tensor, 2>& early) {
    auto [a, b] = reduce_and_upsample(early);
    auto x = fuse->forward(torch::cat({a, b}, 1));
    for (const auto& eem : *eems) x = eem->as<EdgeEnhancementModule>()->forward(x);
    return x;
}

EdgePathwayOutput EdgeRefinementPathwayImpl::forward(const std::array<torch::Tensor, 2>& early) {
    auto x = enhance(early);
    return {to_fusion_grid->forward(x), head->forward(x)};
}

}  // namespace camoseg
