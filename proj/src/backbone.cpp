#include "camoseg/backbone.hpp"

#include "camoseg/errors.hpp"

#include <torch/script.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace camoseg {

std::array<int64_t, 4> BackboneConfig::resolved_blocks() const {
    if (selected_blocks.empty()) return {1, 2, num_blocks - 1, num_blocks};
    if (selected_blocks.size() != 4) throw ConfigError("selected_blocks must hold exactly four indices");
    return {selected_blocks[0], selected_blocks[1], selected_blocks[2], selected_blocks[3]};
}

void BackboneConfig::validate() const {
    if (patch_size <= 0 || image_size <= 0) throw ConfigError("image_size and patch_size must be positive");
    if (image_size % patch_size != 0) {
        throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                          std::to_string(patch_size));
    }
    if (num_blocks < 4) throw ConfigError("num_blocks must be >= 4");
    if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
        throw ConfigError("embed_dim must be a positive multiple of num_heads");
    }
    if (num_registers < 0) throw ConfigError("num_registers must be >= 0");
    const auto blocks = resolved_blocks();
    for (size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i] < 1 || blocks[i] > num_blocks) throw ConfigError("selected block index out of [1, N]");
        if (i > 0 && blocks[i] <= blocks[i - 1]) throw ConfigError("selected blocks must be sorted and distinct");
    }
    const int64_t half = (num_blocks + 1) / 2;  // ceil(N/2)
    if (!(blocks[1] <= half && blocks[2] > half)) {
        throw ConfigError("selected blocks need two early (<= ceil(N/2)) and two deep (> ceil(N/2)) indices");
    }
}

void FeaturePyramid::check() const {
    const auto& ref = early[0];
    if (!ref.defined() || ref.dim() != 4) throw InternalError("FeaturePyramid: maps must be 4-D");
    for (const auto* m : {&early[0], &early[1], &deep[0], &deep[1]}) {
        if (!m->defined() || m->sizes() != ref.sizes()) throw InternalError("FeaturePyramid: map shapes differ");
        if (!torch::isfinite(*m).all().item<bool>()) throw InternalError("FeaturePyramid: non-finite features");
    }
    if (ref.size(2) != grid_size || ref.size(3) != grid_size) throw InternalError("FeaturePyramid: grid mismatch");
}

void FeatureEncoder::check_images(const torch::Tensor& images) const {
    const auto& cfg = config();
    if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != cfg.image_size ||
        images.size(3) != cfg.image_size) {
        std::ostringstream os;
        os << "encoder expects B x 3 x " << cfg.image_size << " x " << cfg.image_size << " images, got "
           << images.sizes();
        throw ConfigError(os.str());
    }
}

TransformerBlockImpl::TransformerBlockImpl(int64_t dim, int64_t heads_, double mlp_ratio) : heads(heads_) {
    const auto hidden = static_cast<int64_t>(std::lround(dim * mlp_ratio));
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
    qkv = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
    proj = register_module("proj", torch::nn::Linear(dim, dim));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
    fc1 = register_module("fc1", torch::nn::Linear(dim, hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, dim));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& tokens) {
    const auto b = tokens.size(0);
    const auto n = tokens.size(1);
    const auto d = tokens.size(2);
    const auto hd = d / heads;
    auto q_k_v = qkv->forward(norm1->forward(tokens)).view({b, n, 3, heads, hd}).permute({2, 0, 3, 1, 4});
    auto q = q_k_v[0], k = q_k_v[1], v = q_k_v[2];
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd)), -1);
    auto mixed = torch::matmul(attn, v).transpose(1, 2).reshape({b, n, d});
    auto x = tokens + proj->forward(mixed);
    return x + fc2->forward(torch::gelu(fc1->forward(norm2->forward(x))));
}

ToyVisionTransformer::ToyVisionTransformer(BackboneConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto d = cfg_.embed_dim;
    const auto s = cfg_.grid_size();
    patch_embed = register_module(
        "patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d, cfg_.patch_size).stride(cfg_.patch_size)));
    pos_embed = register_parameter("pos_embed", torch::randn({1, s * s, d}) * 0.02);
    if (cfg_.num_registers > 0) {
        registers = register_parameter("registers", torch::randn({1, cfg_.num_registers, d}) * 0.02);
    }
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < cfg_.num_blocks; ++i) {
        blocks->push_back(TransformerBlock(d, cfg_.num_heads, cfg_.mlp_ratio));
    }
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d}).eps(1e-6)));
}

torch::Tensor ToyVisionTransformer::embed(const torch::Tensor& images) {
    check_images(images);
    auto tokens = patch_embed->forward(images).flatten(2).transpose(1, 2) + pos_embed;
    if (cfg_.num_registers > 0) {
        tokens = torch::cat({tokens, registers.expand({images.size(0), -1, -1})}, 1);
    }
    return tokens;
}

std::vector<torch::Tensor> ToyVisionTransformer::forward_tokens(const torch::Tensor& images) {
    auto x = embed(images);
    std::vector<torch::Tensor> out;
    out.reserve(blocks->size());
    for (const auto& block : *blocks) {
        x = block->as<TransformerBlock>()->forward(x);
        out.push_back(x);
    }
    return out;
}

torch::Tensor ToyVisionTransformer::tokens_to_map(const torch::Tensor& tokens) const {
    const auto spatial = tokens.size(1) - cfg_.num_registers;
    const auto side = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(std::max<int64_t>(spatial, 0)))));
    if (spatial <= 0 || side * side != spatial) {
        throw InternalError("token count " + std::to_string(spatial) + " after stripping registers is not square");
    }
    auto patch_tokens = tokens.narrow(1, 0, spatial);
    return patch_tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), side, side});
}

std::vector<torch::Tensor> ToyVisionTransformer::forward_blocks(const torch::Tensor& images) {
    auto tokens = forward_tokens(images);
    std::vector<torch::Tensor> maps;
    maps.reserve(tokens.size());
    for (auto& t : tokens) maps.push_back(tokens_to_map(cfg_.post_norm_features ? norm->forward(t) : t));
    return maps;
}

FeaturePyramid ToyVisionTransformer::extract(const torch::Tensor& images) {
    const auto idx = cfg_.resolved_blocks();
    auto x = embed(images);
    FeaturePyramid out;
    out.grid_size = cfg_.grid_size();
    std::array<torch::Tensor*, 4> slots{&out.early[0], &out.early[1], &out.deep[0], &out.deep[1]};
    size_t next = 0;
    for (int64_t i = 0; i < cfg_.num_blocks && next < slots.size(); ++i) {
        x = blocks[i]->as<TransformerBlock>()->forward(x);
        if (i + 1 == idx[next]) {
            *slots[next++] = tokens_to_map(cfg_.post_norm_features ? norm->forward(x) : x);
        }
    }
    return out;
}

FunctionEncoder::FunctionEncoder(BackboneConfig cfg, int64_t channels, ExtractFn fn)
    : cfg_(std::move(cfg)), channels_(channels), fn_(std::move(fn)) {
    cfg_.validate();
}

FeaturePyramid FunctionEncoder::extract(const torch::Tensor& images) {
    check_images(images);
    auto out = fn_(images);
    out.grid_size = cfg_.grid_size();
    if (out.early[0].size(1) != channels_) throw ConfigError("external encoder channel count mismatch");
    out.check();
    return out;
}

std::shared_ptr<FeatureEncoder> load_torchscript_encoder(const std::string& path, BackboneConfig cfg,
                                                         int64_t channels) {
    auto module = std::make_shared<torch::jit::script::Module>(torch::jit::load(path));
    module->eval();
    auto fn = [module](const torch::Tensor& images) {
        torch::NoGradGuard guard;
        auto result = module->forward({images});
        std::vector<torch::Tensor> maps;
        if (result.isTuple()) {
            for (const auto& e : result.toTuple()->elements()) maps.push_back(e.toTensor());
        } else if (result.isTensorList()) {
            for (const auto& t : result.toTensorVector()) maps.push_back(t);
        }
        if (maps.size() != 4) throw ConfigError("TorchScript encoder must return four feature maps");
        FeaturePyramid p;
        p.early = {maps[0], maps[1]};
        p.deep = {maps[2], maps[3]};
        return p;
    };
    return std::make_shared<FunctionEncoder>(std::move(cfg), channels, std::move(fn));
}

}  // namespace camoseg
