#pragma once

// Contextual localization pathway: deep features -> SEUs -> image-based context
// guidance (appearance analysis, guided contrast, two attention gates) -> fusion -> object map.

#include "camoseg/layers.hpp"

#include <torch/torch.h>

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>

namespace camoseg {

/// Depthwise-separable conv, then spatial (CBAM-style) and ECA channel attention in
/// parallel, both multiplied onto the conv features, plus the unit's input.
class SemanticEnhancementUnitImpl : public torch::nn::Module {
public:
    explicit SemanticEnhancementUnitImpl(int64_t channels, int64_t spatial_kernel = 7);
    torch::Tensor forward(const torch::Tensor& x);

    /// Test hooks: force both attentions to 1, replace the conv by identity.
    struct Hooks {
        bool unit_attention = false;
        bool identity_conv = false;
    } hooks;

    DepthwiseSeparableConv conv{nullptr};
    SpatialAttention spatial{nullptr};
    EfficientChannelAttention channel{nullptr};
};
TORCH_MODULE(SemanticEnhancementUnit);

/// Two conv blocks from the image to A_f on the deep-feature grid. The first block
/// strides by patch/2 (or patch when odd), the second by 2 (or 1) with replicate padding,
/// so a spatially constant image yields a spatially constant A_f.
class AppearanceNetImpl : public torch::nn::Module {
public:
    AppearanceNetImpl(int64_t patch_size, int64_t channels = 32);
    torch::Tensor forward(const torch::Tensor& image);

    ConvNormAct block1{nullptr}, block2{nullptr};
};
TORCH_MODULE(AppearanceNet);

/// Fallback counters for degenerate hypotheses; safe to update from concurrent forwards.
struct GcmDiagnostics {
    std::atomic<int64_t> samples{0};
    std::atomic<int64_t> fg_fallbacks{0};
    std::atomic<int64_t> bg_fallbacks{0};
    void reset() {
        samples = 0;
        fg_fallbacks = 0;
        bg_fallbacks = 0;
    }
};

struct GuidedDescriptors {
    torch::Tensor fg;           ///< B x C
    torch::Tensor bg;           ///< B x C
    torch::Tensor fg_fallback;  ///< B, bool: sum(G) == 0, fg replaced by global mean
    torch::Tensor bg_fallback;  ///< B, bool: no pixel with G < threshold
};

/// f_fg = sum(A * G) / sum(G) and f_bg = mean of A over {G < bg_threshold}, per sample
/// and channel. Degenerate cases fall back to the global spatial mean of A.
GuidedDescriptors guided_descriptors(const torch::Tensor& appearance, const torch::Tensor& hypothesis,
                                     double bg_threshold = 0.1);

struct ContrastBundle {
    torch::Tensor appearance;    ///< A_f, B x Ca x S x S
    torch::Tensor hypothesis;    ///< G, B x 1 x S x S
    torch::Tensor fg_vec;        ///< B x Ca
    torch::Tensor bg_vec;        ///< B x Ca
    torch::Tensor contrast_map;  ///< B x 1 x S x S in [0,1]
};

/// Contrast net over [A, f_fg, f_bg, |A - f_fg|, |A - f_bg|] (descriptors broadcast
/// over space): conv3x3 -> GroupNorm -> GELU -> conv3x3 -> sigmoid.
class GuidedContrastModuleImpl : public torch::nn::Module {
public:
    GuidedContrastModuleImpl(int64_t appearance_channels = 32, int64_t hidden_channels = 16,
                             double bg_threshold = 0.1);
    ContrastBundle forward(const torch::Tensor& appearance, const torch::Tensor& hypothesis);

    double bg_threshold;
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::GroupNorm norm{nullptr};
    std::shared_ptr<GcmDiagnostics> diagnostics = std::make_shared<GcmDiagnostics>();
};
TORCH_MODULE(GuidedContrastModule);

/// G = sigmoid(conv1x1(F_n^enh)).
class HypothesisHeadImpl : public torch::nn::Module {
public:
    explicit HypothesisHeadImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d proj{nullptr};
};
TORCH_MODULE(HypothesisHead);

/// out = x * sigmoid(conv3x3([x, contrast])) + residual * x, with a spatial gate.
class AttentionGateImpl : public torch::nn::Module {
public:
    AttentionGateImpl(int64_t channels, double residual = 0.0);
    torch::Tensor gate_logits(const torch::Tensor& x, const torch::Tensor& contrast);
    /// `logit_shift` is added to the gate logits (0 in normal use).
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& contrast, double logit_shift = 0.0);

    double residual;
    torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(AttentionGate);

struct ContextPathwayConfig {
    int64_t in_channels = 256;
    /// Deep-grid width, 2S width, fusion-grid width.
    std::array<int64_t, 3> channels{512, 256, 128};
    int64_t image_size = 392;
    int64_t patch_size = 14;
    int64_t appearance_channels = 32;
    int64_t contrast_channels = 16;
    double bg_threshold = 0.1;
    bool use_seu = true;
    bool use_icg = true;
    bool share_gate_weights = false;
    double gate_residual = 0.0;
    UpsampleMode upsample = UpsampleMode::DySample;
    int64_t upsample_groups = 4;
    bool resize_logits = true;
};

struct ContextPathwayOutput {
    torch::Tensor features;    ///< F_loc, B x channels[2] x 4S x 4S
    torch::Tensor prediction;  ///< P_loc, B x 1 x image_size x image_size
    std::optional<ContrastBundle> contrast;
};

class ContextualLocalizationPathwayImpl : public torch::nn::Module {
public:
    explicit ContextualLocalizationPathwayImpl(const ContextPathwayConfig& cfg);

    /// F_loc^mod on the deep grid (F_n^enh when guidance is disabled).
    torch::Tensor guide(const torch::Tensor& deep_last, const torch::Tensor& images,
                        std::optional<ContrastBundle>* bundle = nullptr);
    /// Both inputs on the 2S grid with channels[1] channels: F_loc^up (upsampled F_loc^mod)
    /// and F_{n-1}^up. Concat + conv fusion, residual depthwise-separable refinement,
    /// upsampling to the fusion grid, object head.
    ContextPathwayOutput fuse_and_head(const torch::Tensor& modulated_up, const torch::Tensor& prev_up);
    ContextPathwayOutput forward(const std::array<torch::Tensor, 2>& deep, const torch::Tensor& images);

    ContextPathwayConfig cfg;
    torch::nn::Conv2d adapt_prev{nullptr}, adapt_last{nullptr};
    SemanticEnhancementUnit seu_prev{nullptr}, seu_last{nullptr};
    AppearanceNet appearance{nullptr};
    HypothesisHead hypothesis{nullptr};
    GuidedContrastModule gcm{nullptr};
    AttentionGate gate1{nullptr}, gate2{nullptr};
    torch::nn::Conv2d prev_reduce{nullptr}, mod_reduce{nullptr};
    Upsampler prev_up{nullptr}, mod_up{nullptr};
    ConvNormAct fuse{nullptr};
    DepthwiseSeparableConv refine{nullptr};
    torch::nn::Conv2d out_reduce{nullptr};
    Upsampler out_up{nullptr};
    PredictionHead head{nullptr};
};
TORCH_MODULE(ContextualLocalizationPathway);

}  // namespace camoseg
