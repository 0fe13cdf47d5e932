#include "camoseg/config.hpp"

#include "camoseg/errors.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace camoseg {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    }
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

struct Field {
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

Field num(std::string key, double& ref) {
    return {key, [&ref] { return fmt(ref); }, [&ref, key](const std::string& v) { ref = parse_double(key, v); }};
}

template <class Int>
Field integer(std::string key, Int& ref) {
    return {key, [&ref] { return std::to_string(ref); },
            [&ref, key](const std::string& v) {
                const auto x = parse_int(key, v);
                if constexpr (std::is_unsigned_v<Int>) {
                    if (x < 0) throw ConfigError("'" + key + "' must be non-negative");
                }
                ref = static_cast<Int>(x);
            }};
}

Field flag(std::string key, bool& ref) {
    return {key, [&ref] { return std::string(ref ? "true" : "false"); },
            [&ref, key](const std::string& v) { ref = parse_bool(key, v); }};
}

Field text(std::string key, std::string& ref) {
    return {key, [&ref] { return ref; }, [&ref](const std::string& v) { ref = v; }};
}

template <size_t N, class T>
Field array(std::string key, std::array<T, N>& ref) {
    return {key,
            [&ref] {
                std::string s;
                for (size_t i = 0; i < N; ++i) {
                    if (i) s += ", ";
                    if constexpr (std::is_floating_point_v<T>) s += fmt(ref[i]);
                    else s += std::to_string(ref[i]);
                }
                return s;
            },
            [&ref, key](const std::string& v) {
                const auto items = split_list(v);
                if (items.size() != N) throw ConfigError("'" + key + "' expects " + std::to_string(N) + " values");
                for (size_t i = 0; i < N; ++i) {
                    if constexpr (std::is_floating_point_v<T>) ref[i] = parse_double(key, items[i]);
                    else ref[i] = static_cast<T>(parse_int(key, items[i]));
                }
            }};
}

Field block_list(std::string key, std::vector<int64_t>& ref) {
    return {key,
            [&ref] {
                if (ref.empty()) return std::string("auto");
                std::string s;
                for (size_t i = 0; i < ref.size(); ++i) s += (i ? ", " : "") + std::to_string(ref[i]);
                return s;
            },
            [&ref, key](const std::string& v) {
                ref.clear();
                if (v == "auto" || v.empty()) return;
                for (const auto& item : split_list(v)) ref.push_back(parse_int(key, item));
            }};
}

std::vector<Field> fields(RunConfig& c) {
    auto& bb = c.model.backbone;
    auto& dec = c.model.decoder;
    auto& ab = c.model.ablation;
    auto& l = c.loss;
    return {
        integer("backbone.image_size", bb.image_size),
        integer("backbone.patch_size", bb.patch_size),
        integer("backbone.embed_dim", bb.embed_dim),
        integer("backbone.num_blocks", bb.num_blocks),
        integer("backbone.num_heads", bb.num_heads),
        integer("backbone.num_registers", bb.num_registers),
        num("backbone.mlp_ratio", bb.mlp_ratio),
        block_list("backbone.selected_blocks", bb.selected_blocks),
        flag("backbone.post_norm_features", bb.post_norm_features),

        array("decoder.channels", dec.channels),
        integer("decoder.out_channels", dec.out_channels),
        integer("decoder.appearance_channels", dec.appearance_channels),
        integer("decoder.contrast_channels", dec.contrast_channels),
        integer("decoder.eem_blocks", dec.eem_blocks),
        flag("decoder.eem_residual", dec.eem_residual),
        integer("decoder.upsample_groups", dec.upsample_groups),
        integer("decoder.fusion_refine_blocks", dec.fusion_refine_blocks),
        num("decoder.bg_threshold", dec.bg_threshold),
        flag("decoder.share_gate_weights", dec.share_gate_weights),
        num("decoder.gate_residual", dec.gate_residual),
        flag("decoder.resize_logits", dec.resize_logits),

        flag("ablation.no_erp", ab.no_erp),
        flag("ablation.no_clp", ab.no_clp),
        flag("ablation.no_icg", ab.no_icg),
        flag("ablation.random_eem_init", ab.random_eem_init),
        flag("ablation.bilinear_upsample", ab.bilinear_upsample),
        flag("ablation.plain_backbone", ab.plain_backbone),

        num("loss.w_edge", l.w_edge),
        num("loss.w_loc", l.w_loc),
        num("loss.w_final", l.w_final),
        num("loss.focal_alpha", l.focal_alpha),
        num("loss.focal_gamma", l.focal_gamma),
        num("loss.tversky_loc_alpha", l.tversky_loc_alpha),
        num("loss.tversky_loc_beta", l.tversky_loc_beta),
        num("loss.tversky_final_alpha", l.tversky_final_alpha),
        num("loss.tversky_final_beta", l.tversky_final_beta),
        num("loss.edge_focal_weight", l.edge_focal_weight),
        num("loss.tv_weight", l.tv_weight),
        num("loss.edge_band_cutoff", l.edge_band_cutoff),
        num("loss.edge_dice_weight", l.edge_dice_weight),
        num("loss.instance_factor", l.instance_factor),
        num("loss.instance_lo", l.instance_lo),
        num("loss.instance_hi", l.instance_hi),
        num("loss.loc_focal_weight", l.loc_focal_weight),
        num("loss.loc_tversky_weight", l.loc_tversky_weight),
        num("loss.final_focal_weight", l.final_focal_weight),
        num("loss.final_tversky_weight", l.final_tversky_weight),
        num("loss.tversky_smooth", l.tversky_smooth),
        num("loss.dice_smooth", l.dice_smooth),
        num("loss.clamp_eps", l.clamp_eps),
        flag("loss.tv_on_predicted_background", l.tv_on_predicted_background),

        array("data.mean", c.mean),
        array("data.std", c.std),

        num("optim.decoder_lr", c.optim.decoder_lr),
        num("optim.encoder_lr", c.optim.encoder_lr),
        num("optim.weight_decay", c.optim.weight_decay),
        num("optim.grad_clip", c.optim.grad_clip),

        num("schedule.factor", c.schedule.factor),
        integer("schedule.patience", c.schedule.patience),
        num("schedule.min_lr", c.schedule.min_lr),
        text("schedule.monitor", c.schedule.monitor),

        integer("train.epochs", c.epochs),
        integer("train.batch_size", c.batch_size),
        integer("train.seed", c.seed),
        num("train.val_fraction", c.val_fraction),
        integer("train.max_steps", c.max_steps),
        flag("train.deterministic", c.deterministic),
        integer("train.num_threads", c.num_threads),
    };
}

}  // namespace

void RunConfig::validate() const {
    AblationToggles t = model.ablation;
    if (t.no_clp && !t.no_icg) throw ConfigError("ablation.no_clp requires ablation.no_icg");
    ModelConfig m = model;
    if (m.ablation.plain_backbone) m.backbone.num_registers = 0;
    m.validate();
    loss.validate();
    preprocess().validate();
    if (!(optim.decoder_lr > 0) || !(optim.encoder_lr > 0)) throw ConfigError("learning rates must be > 0");
    if (optim.weight_decay < 0) throw ConfigError("weight decay must be >= 0");
    if (!(optim.grad_clip > 0)) throw ConfigError("grad_clip must be > 0");
    if (!(schedule.factor > 0 && schedule.factor < 1)) throw ConfigError("schedule.factor must lie in (0,1)");
    if (schedule.patience < 0) throw ConfigError("schedule.patience must be >= 0");
    if (schedule.min_lr < 0) throw ConfigError("schedule.min_lr must be >= 0");
    if (schedule.monitor != "val_loss" && schedule.monitor != "train_loss")
        throw ConfigError("schedule.monitor must be val_loss or train_loss");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("train.val_fraction must lie in [0,1)");
    if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
    if (num_threads < 1) throw ConfigError("train.num_threads must be >= 1");
}

PreprocessConfig RunConfig::preprocess() const {
    PreprocessConfig p;
    p.size = static_cast<int>(model.backbone.image_size);
    p.mean = mean;
    p.std = std;
    return p;
}

LossConfig RunConfig::effective_loss() const {
    LossConfig l = loss;
    if (model.ablation.no_erp) l.w_edge = 0.0;
    if (model.ablation.no_clp) l.loc_tversky_weight = 0.0;
    return l;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (auto& f : fields(*this)) {
        if (f.key == key) {
            f.set(trim(value));
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() const {
    RunConfig copy = *this;
    std::vector<std::string> out;
    for (const auto& f : fields(copy)) out.push_back(f.key);
    return out;
}

std::string RunConfig::get(const std::string& key) const {
    RunConfig copy = *this;
    for (const auto& f : fields(copy))
        if (f.key == key) return f.get();
    throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
    RunConfig copy = *this;
    std::string out;
    std::string section;
    for (const auto& f : fields(copy)) {
        const auto sec = f.key.substr(0, f.key.find('.'));
        if (sec != section) {
            if (!section.empty()) out += '\n';
            out += "# " + sec + "\n";
            section = sec;
        }
        out += f.key + " = " + f.get() + "\n";
    }
    return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open config " + p.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

void RunConfig::save(const std::filesystem::path& p) const {
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write config " + p.string());
    out << to_text();
}

std::filesystem::path output_root(const std::filesystem::path& fallback) {
    if (const char* env = std::getenv("CAMOSEG_OUTPUT_ROOT"); env && *env) return env;
    return fallback;
}

}  // namespace camoseg
