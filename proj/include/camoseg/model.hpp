#pragma once

// Full network: encoder -> (edge pathway, context pathway) -> attentive fusion.

#include "camoseg/backbone.hpp"
#include "camoseg/context_pathway.hpp"
#include "camoseg/edge_pathway.hpp"
#include "camoseg/fusion.hpp"
#include "camoseg/types.hpp"

#include <torch/torch.h>

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace camoseg {

/// Component-removal and substitution switches.
struct AblationToggles {
    bool no_erp = false;
    bool no_clp = false;
    bool no_icg = false;
    bool random_eem_init = false;
    bool bilinear_upsample = false;
    bool plain_backbone = false;

    /// Applies implications (no_clp => no_icg); returns a note per implied change.
    std::vector<std::string> normalize();
    /// Comma-separated toggle names; "" or "full" means none. Throws ConfigError on unknown names.
    static AblationToggles parse(const std::string& list);
    std::string to_string() const;
    bool operator==(const AblationToggles&) const = default;
};

/// Named ablation rows: full, no_registers, bilinear_upsample, no_erp, no_clp, no_icg, random_eem_init.
std::vector<std::pair<std::string, AblationToggles>> ablation_table();

struct DecoderConfig {
    std::array<int64_t, 3> channels{512, 256, 128};
    int64_t out_channels = 128;
    int64_t appearance_channels = 32;
    int64_t contrast_channels = 16;
    int64_t eem_blocks = 2;
    bool eem_residual = true;
    int64_t upsample_groups = 4;
    int64_t fusion_refine_blocks = 2;
    double bg_threshold = 0.1;
    bool share_gate_weights = false;
    double gate_residual = 0.0;
    bool resize_logits = true;
};

struct ModelConfig {
    BackboneConfig backbone;
    DecoderConfig decoder;
    AblationToggles ablation;
    void validate() const;
};

struct ModelOutput {
    PredictionTriplet predictions;
    std::optional<ContrastBundle> contrast;
    torch::Tensor attention;
};

class SegmenterImpl : public torch::nn::Module {
public:
    /// Builds the default toy encoder unless `encoder` is supplied.
    explicit SegmenterImpl(ModelConfig cfg, std::shared_ptr<FeatureEncoder> encoder = nullptr);

    ModelOutput forward(const torch::Tensor& images);
    PredictionTriplet predict_triplet(const torch::Tensor& images);

    std::vector<torch::Tensor> encoder_parameters() const;
    std::vector<torch::Tensor> decoder_parameters() const;
    /// Parameter count per top-level component and per ICG part (keys such as
    /// "encoder", "edge_pathway", "context_pathway", "fusion", "gcm", "appearance", "gates").
    std::map<std::string, int64_t> parameter_census() const;

    const ModelConfig& config() const { return cfg_; }

    std::shared_ptr<FeatureEncoder> encoder;
    EdgeRefinementPathway edge_pathway{nullptr};
    ContextualLocalizationPathway context_pathway{nullptr};
    AttentiveFusionModule fusion{nullptr};

private:
    ModelConfig cfg_;
};
TORCH_MODULE(Segmenter);

int64_t count_parameters(const torch::nn::Module& module);

}  // namespace camoseg
