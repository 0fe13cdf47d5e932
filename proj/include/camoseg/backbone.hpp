#pragma once

// Encoder contract: four feature maps (two early, two deep) on one S x S grid.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace camoseg {

struct BackboneConfig {
    int64_t image_size = 392;
    int64_t patch_size = 14;
    int64_t embed_dim = 256;
    int64_t num_blocks = 4;
    int64_t num_heads = 4;
    int64_t num_registers = 4;
    double mlp_ratio = 4.0;
    /// 1-based block indices; empty selects {1, 2, N-1, N}.
    std::vector<int64_t> selected_blocks;
    /// Apply the encoder's final LayerNorm to each selected block output.
    bool post_norm_features = true;

    int64_t grid_size() const { return image_size / patch_size; }
    std::array<int64_t, 4> resolved_blocks() const;
    /// Throws ConfigError on any invariant violation.
    void validate() const;
};

struct FeaturePyramid {
    std::array<torch::Tensor, 2> early;
    std::array<torch::Tensor, 2> deep;
    int64_t grid_size = 0;

    /// All four maps share B x C x S x S and hold finite values.
    void check() const;
};

/// Anything that turns a preprocessed B x 3 x H x W batch into a FeaturePyramid.
class FeatureEncoder : public torch::nn::Module {
public:
    virtual FeaturePyramid extract(const torch::Tensor& images) = 0;
    virtual int64_t feature_channels() const = 0;
    virtual const BackboneConfig& config() const = 0;

protected:
    void check_images(const torch::Tensor& images) const;
};

/// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
class TransformerBlockImpl : public torch::nn::Module {
public:
    TransformerBlockImpl(int64_t dim, int64_t heads, double mlp_ratio);
    torch::Tensor forward(const torch::Tensor& tokens);

    int64_t heads;
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Linear qkv{nullptr}, proj{nullptr}, fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(TransformerBlock);

/// From-scratch ViT with learned register tokens, the default encoder.
class ToyVisionTransformer : public FeatureEncoder {
public:
    explicit ToyVisionTransformer(BackboneConfig cfg);

    FeaturePyramid extract(const torch::Tensor& images) override;
    int64_t feature_channels() const override { return cfg_.embed_dim; }
    const BackboneConfig& config() const override { return cfg_; }

    /// Token sequence entering block 1: patch tokens + positional embedding, registers appended.
    torch::Tensor embed(const torch::Tensor& images);
    /// Raw token output of every block, each B x (S*S + registers) x D.
    std::vector<torch::Tensor> forward_tokens(const torch::Tensor& images);
    /// Per-block spatial features, each B x D x S x S (registers stripped).
    std::vector<torch::Tensor> forward_blocks(const torch::Tensor& images);
    /// Drop register tokens and fold the rest into B x D x S x S.
    torch::Tensor tokens_to_map(const torch::Tensor& tokens) const;

    torch::nn::Conv2d patch_embed{nullptr};
    torch::Tensor pos_embed;
    torch::Tensor registers;
    torch::nn::ModuleList blocks{nullptr};
    torch::nn::LayerNorm norm{nullptr};

private:
    BackboneConfig cfg_;
};

/// Adapter for externally provided encoders (pretrained models, fakes in tests).
class FunctionEncoder : public FeatureEncoder {
public:
    using ExtractFn = std::function<FeaturePyramid(const torch::Tensor&)>;
    FunctionEncoder(BackboneConfig cfg, int64_t channels, ExtractFn fn);

    FeaturePyramid extract(const torch::Tensor& images) override;
    int64_t feature_channels() const override { return channels_; }
    const BackboneConfig& config() const override { return cfg_; }

private:
    BackboneConfig cfg_;
    int64_t channels_;
    ExtractFn fn_;
};

/// Wraps a TorchScript module whose forward(images) returns four B x C x S x S tensors
/// (a tuple or list, ordered early-early-deep-deep). Weights stay frozen.
std::shared_ptr<FeatureEncoder> load_torchscript_encoder(const std::string& path, BackboneConfig cfg,
                                                         int64_t channels);

}  // namespace camoseg
