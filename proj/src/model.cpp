#include "camoseg/model.hpp"

#include "camoseg/errors.hpp"

#include <sstream>

namespace camoseg {

std::vector<std::string> AblationToggles::normalize() {
    std::vector<std::string> notes;
    if (no_clp && !no_icg) {
        no_icg = true;
        notes.emplace_back("no_clp implies no_icg; guidance disabled");
    }
    return notes;
}

AblationToggles AblationToggles::parse(const std::string& list) {
    AblationToggles t;
    std::stringstream ss(list);
    std::string name;
    while (std::getline(ss, name, ',')) {
        name.erase(0, name.find_first_not_of(" \t"));
        name.erase(name.find_last_not_of(" \t") + 1);
        if (name.empty() || name == "full") continue;
        if (name == "no_erp") t.no_erp = true;
        else if (name == "no_clp") t.no_clp = true;
        else if (name == "no_icg") t.no_icg = true;
        else if (name == "random_eem_init") t.random_eem_init = true;
        else if (name == "bilinear_upsample") t.bilinear_upsample = true;
        else if (name == "plain_backbone") t.plain_backbone = true;
        else throw ConfigError("unknown ablation toggle '" + name + "'");
    }
    return t;
}

std::string AblationToggles::to_string() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += ',';
        out += name;
    };
    add(no_erp, "no_erp");
    add(no_clp, "no_clp");
    add(no_icg, "no_icg");
    add(random_eem_init, "random_eem_init");
    add(bilinear_upsample, "bilinear_upsample");
    add(plain_backbone, "plain_backbone");
    return out.empty() ? "full" : out;
}

std::vector<std::pair<std::string, AblationToggles>> ablation_table() {
    return {
        {"full", AblationToggles::parse("")},
        {"no_registers", AblationToggles::parse("plain_backbone")},
        {"bilinear_upsample", AblationToggles::parse("bilinear_upsample")},
        {"no_erp", AblationToggles::parse("no_erp")},
        {"no_clp", AblationToggles::parse("no_clp,no_icg")},
        {"no_icg", AblationToggles::parse("no_icg")},
        {"random_eem_init", AblationToggles::parse("random_eem_init")},
    };
}

void ModelConfig::validate() const {
    backbone.validate();
    for (auto c : decoder.channels) {
        if (c <= 0) throw ConfigError("decoder channels must be positive");
    }
    if (decoder.out_channels <= 0 || decoder.appearance_channels <= 0 || decoder.contrast_channels <= 0) {
        throw ConfigError("decoder widths must be positive");
    }
    if (decoder.eem_blocks < 1) throw ConfigError("eem_blocks must be >= 1");
    if (decoder.fusion_refine_blocks < 1) throw ConfigError("fusion_refine_blocks must be >= 1");
    if (ablation.no_clp && !ablation.no_icg) throw ConfigError("no_clp requires no_icg (call normalize())");
}

int64_t count_parameters(const torch::nn::Module& module) {
    int64_t n = 0;
    for (const auto& p : module.parameters()) n += p.numel();
    return n;
}

SegmenterImpl::SegmenterImpl(ModelConfig cfg, std::shared_ptr<FeatureEncoder> enc) : cfg_(std::move(cfg)) {
    cfg_.ablation.normalize();
    if (cfg_.ablation.plain_backbone) cfg_.backbone.num_registers = 0;
    cfg_.validate();
    const auto& bb = cfg_.backbone;
    const auto& dec = cfg_.decoder;
    const auto mode = cfg_.ablation.bilinear_upsample ? UpsampleMode::Bilinear : UpsampleMode::DySample;

    if (!enc) enc = std::make_shared<ToyVisionTransformer>(bb);
    if (enc->config().image_size != bb.image_size || enc->config().patch_size != bb.patch_size) {
        throw ConfigError("encoder geometry does not match the model configuration");
    }
    encoder = register_module("encoder", enc);
    const auto embed = encoder->feature_channels();

    if (!cfg_.ablation.no_erp) {
        EdgePathwayConfig ec;
        ec.in_channels = embed;
        ec.stage_channels = dec.channels[1];
        ec.image_size = bb.image_size;
        ec.eem.num_blocks = dec.eem_blocks;
        ec.eem.residual = dec.eem_residual;
        ec.eem.sobel_init = !cfg_.ablation.random_eem_init;
        ec.eem.laplacian_init = !cfg_.ablation.random_eem_init;
        ec.upsample = mode;
        ec.upsample_groups = dec.upsample_groups;
        ec.resize_logits = dec.resize_logits;
        edge_pathway = register_module("edge_pathway", EdgeRefinementPathway(ec));
    }

    ContextPathwayConfig cc;
    cc.in_channels = embed;
    cc.channels = dec.channels;
    cc.image_size = bb.image_size;
    cc.patch_size = bb.patch_size;
    cc.appearance_channels = dec.appearance_channels;
    cc.contrast_channels = dec.contrast_channels;
    cc.bg_threshold = dec.bg_threshold;
    cc.use_seu = !cfg_.ablation.no_clp;
    cc.use_icg = !cfg_.ablation.no_icg;
    cc.share_gate_weights = dec.share_gate_weights;
    cc.gate_residual = dec.gate_residual;
    cc.upsample = mode;
    cc.upsample_groups = dec.upsample_groups;
    cc.resize_logits = dec.resize_logits;
    context_pathway = register_module("context_pathway", ContextualLocalizationPathway(cc));

    FusionConfig fc;
    fc.edge_channels = dec.channels[1];
    fc.loc_channels = dec.channels[2];
    fc.channels = dec.out_channels;
    fc.refine_blocks = dec.fusion_refine_blocks;
    fc.image_size = bb.image_size;
    fc.resize_logits = dec.resize_logits;
    fusion = register_module("fusion", AttentiveFusionModule(fc));
}

ModelOutput SegmenterImpl::forward(const torch::Tensor& images) {
    auto pyramid = encoder->extract(images);
    const auto b = images.size(0);
    const auto fusion_grid = 4 * pyramid.grid_size;
    const auto size = cfg_.backbone.image_size;

    torch::Tensor edge_features, edge_prediction;
    if (edge_pathway) {
        auto e = edge_pathway->forward(pyramid.early);
        edge_features = e.features;
        edge_prediction = e.prediction;
    } else {
        edge_features = torch::zeros({b, cfg_.decoder.channels[1], fusion_grid, fusion_grid}, images.options());
        edge_prediction = torch::zeros({b, 1, size, size}, images.options());
    }
    auto ctx = context_pathway->forward(pyramid.deep, images);
    auto fused = fusion->forward(edge_features, ctx.features);
    return {{edge_prediction, ctx.prediction, fused.prediction}, std::move(ctx.contrast), fused.attention};
}

PredictionTriplet SegmenterImpl::predict_triplet(const torch::Tensor& images) { return forward(images).predictions; }

std::vector<torch::Tensor> SegmenterImpl::encoder_parameters() const { return encoder->parameters(); }

std::vector<torch::Tensor> SegmenterImpl::decoder_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& item : named_children()) {
        if (item.key() == "encoder") continue;
        for (const auto& p : item.value()->parameters()) out.push_back(p);
    }
    return out;
}

std::map<std::string, int64_t> SegmenterImpl::parameter_census() const {
    std::map<std::string, int64_t> census;
    census["encoder"] = count_parameters(*encoder);
    census["edge_pathway"] = edge_pathway ? count_parameters(*edge_pathway) : 0;
    census["context_pathway"] = count_parameters(*context_pathway);
    census["fusion"] = count_parameters(*fusion);
    const auto& clp = *context_pathway;
    census["seu"] = (clp.seu_prev ? count_parameters(*clp.seu_prev) + count_parameters(*clp.seu_last) : 0);
    census["appearance"] = clp.appearance ? count_parameters(*clp.appearance) : 0;
    census["hypothesis"] = clp.hypothesis ? count_parameters(*clp.hypothesis) : 0;
    census["gcm"] = clp.gcm ? count_parameters(*clp.gcm) : 0;
    census["gates"] = (clp.gate1 ? count_parameters(*clp.gate1) : 0) + (clp.gate2 ? count_parameters(*clp.gate2) : 0);
    int64_t total = 0, registers = 0, dysample = 0;
    for (const auto& item : named_parameters()) {
        total += item.value().numel();
        const auto& key = item.key();
        if (key.find("registers") != std::string::npos) registers += item.value().numel();
        if (key.find("dysample") != std::string::npos) dysample += item.value().numel();
    }
    census["registers"] = registers;
    census["dysample"] = dysample;
    census["total"] = total;
    return census;
}

}  // namespace camoseg
