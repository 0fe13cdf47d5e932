#include "camoseg/fusion.hpp"

#include "camoseg/errors.hpp"

namespace camoseg {

AttentiveFusionModuleImpl::AttentiveFusionModuleImpl(const FusionConfig& cfg_) : cfg(cfg_) {
    const auto c = cfg.channels;
    edge_adapt = register_module("edge_adapt", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.edge_channels, c, 1)));
    loc_adapt = register_module("loc_adapt", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.loc_channels, c, 1)));
    attention = register_module("attention", SpatialAttention(7));
    refine = register_module("refine", torch::nn::Sequential());
    for (int64_t i = 0; i < cfg.refine_blocks; ++i) refine->push_back(ConvNormAct(i == 0 ? 2 * c : c, c, 3));
    head = register_module("head", PredictionHead(c, cfg.image_size, cfg.resize_logits));
}

FusionOutput AttentiveFusionModuleImpl::forward(const torch::Tensor& edge_features, const torch::Tensor& loc_features) {
    expect_nchw(edge_features, cfg.edge_channels, "fusion edge input");
    expect_nchw(loc_features, cfg.loc_channels, "fusion localization input");
    if (edge_features.size(0) != loc_features.size(0) || edge_features.size(2) != loc_features.size(2) ||
        edge_features.size(3) != loc_features.size(3)) {
        throw InternalError("fusion: edge and localization features are on different grids");
    }
    auto edge = edge_adapt->forward(edge_features);
    auto loc = loc_adapt->forward(loc_features);
    auto attn = forced_attention ? torch::full({loc.size(0), 1, loc.size(2), loc.size(3)}, *forced_attention,
                                               loc.options())
                                 : attention->forward(loc);
    auto edge_att = edge * attn;
    auto fused = refine->forward(torch::cat({edge_att, loc}, 1));
    return {fused, head->forward(fused), attn, edge_att};
}

}  // namespace camoseg
