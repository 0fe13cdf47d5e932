#include "camoseg/context_pathway.hpp"

#include "camoseg/errors.hpp"

#include <string>

namespace camoseg {

namespace F = torch::nn::functional;

SemanticEnhancementUnitImpl::SemanticEnhancementUnitImpl(int64_t channels, int64_t spatial_kernel) {
    conv = register_module("conv", DepthwiseSeparableConv(channels, channels, /*activate=*/true));
    spatial = register_module("spatial", SpatialAttention(spatial_kernel));
    channel = register_module("channel", EfficientChannelAttention(channels));
}

torch::Tensor SemanticEnhancementUnitImpl::forward(const torch::Tensor& x) {
    auto features = hooks.identity_conv ? x : conv->forward(x);
    if (hooks.unit_attention) return features + x;
    auto spatial_gate = spatial->forward(features);
    auto channel_gate = channel->weights(features);
    return features * spatial_gate * channel_gate + x;
}

namespace {

int64_t first_stride(int64_t patch) { return patch % 2 == 0 ? patch / 2 : patch; }

}  // namespace

AppearanceNetImpl::AppearanceNetImpl(int64_t patch_size, int64_t channels) {
    const auto s1 = first_stride(patch_size);
    const auto s2 = patch_size / s1;
    block1 = register_module("block1", ConvNormAct(3, channels, s1, s1, false, /*padding=*/0));
    block2 = register_module("block2", ConvNormAct(channels, channels, 3, s2, /*replicate_padding=*/true));
}

torch::Tensor AppearanceNetImpl::forward(const torch::Tensor& image) {
    return block2->forward(block1->forward(image));
}

GuidedDescriptors guided_descriptors(const torch::Tensor& appearance, const torch::Tensor& hypothesis,
                                     double bg_threshold) {
    expect_nchw(appearance, -1, "guided_descriptors appearance");
    expect_nchw(hypothesis, 1, "guided_descriptors hypothesis");
    if (appearance.size(0) != hypothesis.size(0) || appearance.size(2) != hypothesis.size(2) ||
        appearance.size(3) != hypothesis.size(3)) {
        throw InternalError("guided_descriptors: appearance and hypothesis grids differ");
    }
    auto a = appearance.flatten(2);  // B x C x P
    auto g = hypothesis.flatten(2);  // B x 1 x P
    auto global = a.mean(-1);

    auto g_sum = g.sum(-1);  // B x 1
    auto fg_fallback = g_sum <= 0;
    auto safe_sum = torch::where(fg_fallback, torch::ones_like(g_sum), g_sum);
    auto fg = torch::where(fg_fallback, global, (a * g).sum(-1) / safe_sum);

    auto bg_mask = (g < bg_threshold).to(a.scalar_type());
    auto count = bg_mask.sum(-1);  // B x 1
    auto bg_fallback = count <= 0;
    auto bg = torch::where(bg_fallback, global, (a * bg_mask).sum(-1) / count.clamp_min(1.0));

    return {fg, bg, fg_fallback.squeeze(1), bg_fallback.squeeze(1)};
}

GuidedContrastModuleImpl::GuidedContrastModuleImpl(int64_t appearance_channels, int64_t hidden_channels,
                                                   double bg_threshold_)
    : bg_threshold(bg_threshold_) {
    conv1 = register_module(
        "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(5 * appearance_channels, hidden_channels, 3).padding(1)));
    norm = register_module("norm", torch::nn::GroupNorm(norm_groups(hidden_channels), hidden_channels));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden_channels, 1, 3).padding(1)));
}

ContrastBundle GuidedContrastModuleImpl::forward(const torch::Tensor& appearance, const torch::Tensor& hypothesis) {
    auto d = guided_descriptors(appearance, hypothesis, bg_threshold);
    diagnostics->samples += appearance.size(0);
    diagnostics->fg_fallbacks += d.fg_fallback.sum().item<int64_t>();
    diagnostics->bg_fallbacks += d.bg_fallback.sum().item<int64_t>();

    const auto b = appearance.size(0);
    const auto c = appearance.size(1);
    auto fg_map = d.fg.view({b, c, 1, 1}).expand_as(appearance);
    auto bg_map = d.bg.view({b, c, 1, 1}).expand_as(appearance);
    auto features = torch::cat({appearance, fg_map, bg_map, (appearance - fg_map).abs(), (appearance - bg_map).abs()}, 1);
    auto contrast = torch::sigmoid(conv2->forward(F::gelu(norm->forward(conv1->forward(features)))));
    return {appearance, hypothesis, d.fg, d.bg, contrast};
}

HypothesisHeadImpl::HypothesisHeadImpl(int64_t channels) {
    proj = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 1, 1)));
}

torch::Tensor HypothesisHeadImpl::forward(const torch::Tensor& x) { return torch::sigmoid(proj->forward(x)); }

AttentionGateImpl::AttentionGateImpl(int64_t channels, double residual_) : residual(residual_) {
    conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels + 1, 1, 3).padding(1)));
}

torch::Tensor AttentionGateImpl::gate_logits(const torch::Tensor& x, const torch::Tensor& contrast) {
    return conv->forward(torch::cat({x, contrast}, 1));
}

torch::Tensor AttentionGateImpl::forward(const torch::Tensor& x, const torch::Tensor& contrast, double logit_shift) {
    auto gate = torch::sigmoid(gate_logits(x, contrast) + logit_shift);
    auto out = x * gate;
    return residual != 0.0 ? out + residual * x : out;
}

ContextualLocalizationPathwayImpl::ContextualLocalizationPathwayImpl(const ContextPathwayConfig& cfg_) : cfg(cfg_) {
    const auto [c0, c1, c2] = cfg.channels;
    adapt_prev = register_module("adapt_prev", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.in_channels, c0, 1)));
    adapt_last = register_module("adapt_last", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.in_channels, c0, 1)));
    if (cfg.use_seu) {
        seu_prev = register_module("seu_prev", SemanticEnhancementUnit(c0));
        seu_last = register_module("seu_last", SemanticEnhancementUnit(c0));
    }
    if (cfg.use_icg) {
        appearance = register_module("appearance", AppearanceNet(cfg.patch_size, cfg.appearance_channels));
        hypothesis = register_module("hypothesis", HypothesisHead(c0));
        gcm = register_module("gcm",
                              GuidedContrastModule(cfg.appearance_channels, cfg.contrast_channels, cfg.bg_threshold));
        gate1 = register_module("gate1", AttentionGate(c0, cfg.gate_residual));
        if (!cfg.share_gate_weights) gate2 = register_module("gate2", AttentionGate(c0, cfg.gate_residual));
    }
    prev_reduce = register_module("prev_reduce", torch::nn::Conv2d(torch::nn::Conv2dOptions(c0, c1, 1)));
    mod_reduce = register_module("mod_reduce", torch::nn::Conv2d(torch::nn::Conv2dOptions(c0, c1, 1)));
    prev_up = register_module("prev_up", Upsampler(c1, cfg.upsample, 2, cfg.upsample_groups));
    mod_up = register_module("mod_up", Upsampler(c1, cfg.upsample, 2, cfg.upsample_groups));
    fuse = register_module("fuse", ConvNormAct(2 * c1, c1, 3));
    refine = register_module("refine", DepthwiseSeparableConv(c1, c1, /*activate=*/true));
    out_reduce = register_module("out_reduce", torch::nn::Conv2d(torch::nn::Conv2dOptions(c1, c2, 1)));
    out_up = register_module("out_up", Upsampler(c2, cfg.upsample, 2, cfg.upsample_groups));
    head = register_module("head", PredictionHead(c2, cfg.image_size, cfg.resize_logits));
}

torch::Tensor ContextualLocalizationPathwayImpl::guide(const torch::Tensor& deep_last, const torch::Tensor& images,
                                                       std::optional<ContrastBundle>* bundle) {
    if (!cfg.use_icg) return deep_last;
    auto a = appearance->forward(images);
    if (a.size(2) != deep_last.size(2) || a.size(3) != deep_last.size(3)) {
        throw InternalError("appearance grid does not match the deep feature grid");
    }
    auto g = hypothesis->forward(deep_last);
    auto contrast = gcm->forward(a, g);
    auto x = gate1->forward(deep_last, contrast.contrast_map);
    x = (cfg.share_gate_weights ? gate1 : gate2)->forward(x, contrast.contrast_map);
    if (bundle) *bundle = std::move(contrast);
    return x;
}

ContextPathwayOutput ContextualLocalizationPathwayImpl::fuse_and_head(const torch::Tensor& modulated_up,
                                                                      const torch::Tensor& prev_up_) {
    if (modulated_up.sizes() != prev_up_.sizes()) {
        throw InternalError("context pathway fusion: grid mismatch between modulated and penultimate features");
    }
    auto fused = fuse->forward(torch::cat({modulated_up, prev_up_}, 1));
    fused = fused + refine->forward(fused);
    auto features = out_up->forward(out_reduce->forward(fused));
    return {features, head->forward(features), std::nullopt};
}

ContextPathwayOutput ContextualLocalizationPathwayImpl::forward(const std::array<torch::Tensor, 2>& deep,
                                                                const torch::Tensor& images) {
    expect_nchw(deep[0], cfg.in_channels, "context pathway input");
    expect_nchw(deep[1], cfg.in_channels, "context pathway input");
    auto prev = adapt_prev->forward(deep[0]);
    auto last = adapt_last->forward(deep[1]);
    if (cfg.use_seu) {
        prev = seu_prev->forward(prev);
        last = seu_last->forward(last);
    }
    std::optional<ContrastBundle> bundle;
    auto modulated = guide(last, images, &bundle);
    auto out = fuse_and_head(mod_up->forward(mod_reduce->forward(modulated)), prev_up->forward(prev_reduce->forward(prev)));
    out.contrast = std::move(bundle);
    return out;
}

}  // namespace camoseg
