#include "camoseg/losses.hpp"

#include "camoseg/errors.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <limits>

namespace camoseg {

void LossConfig::validate() const {
    for (double w : {w_edge, w_loc, w_final, edge_focal_weight, tv_weight, edge_dice_weight, loc_focal_weight,
                     loc_tversky_weight, final_focal_weight, final_tversky_weight, tversky_smooth, dice_smooth}) {
        if (w < 0) throw ConfigError("loss weights must be >= 0");
    }
    auto unit_sum = [](double a, double b) { return std::abs(a + b - 1.0) < 1e-9 && a >= 0 && b >= 0; };
    if (!unit_sum(tversky_loc_alpha, tversky_loc_beta) || !unit_sum(tversky_final_alpha, tversky_final_beta)) {
        throw ConfigError("tversky alpha + beta must equal 1");
    }
    if (!(0 < instance_lo && instance_lo < instance_hi && instance_hi < 1)) {
        throw ConfigError("instance thresholds must satisfy 0 < lo < hi < 1");
    }
    if (instance_factor < 1.0) throw ConfigError("instance_factor must be >= 1");
    if (focal_gamma < 0 || focal_alpha < 0 || focal_alpha > 1) throw ConfigError("invalid focal parameters");
    if (edge_band_cutoff < 0) throw ConfigError("edge_band_cutoff must be >= 0");
    if (!(clamp_eps > 0 && clamp_eps < 0.5)) throw ConfigError("clamp_eps must be in (0, 0.5)");
}

namespace {

torch::Tensor per_sample_mean(const torch::Tensor& x) { return x.flatten(1).mean(1); }
torch::Tensor per_sample_sum(const torch::Tensor& x) { return x.flatten(1).sum(1); }

void check_pair(const torch::Tensor& p, const torch::Tensor& y, const char* what) {
    if (p.sizes() != y.sizes() || p.dim() != 4) {
        throw InputError(std::string(what) + ": prediction and target must share a B x 1 x H x W shape");
    }
}

}  // namespace

torch::Tensor focal_per_sample(const torch::Tensor& p, const torch::Tensor& y, double alpha, double gamma,
                               const torch::Tensor& weight, double eps) {
    check_pair(p, y, "focal");
    auto pc = p.clamp(eps, 1.0 - eps);
    auto pos = -alpha * torch::pow(1.0 - pc, gamma) * torch::log(pc);
    auto neg = -(1.0 - alpha) * torch::pow(pc, gamma) * torch::log(1.0 - pc);
    auto loss = y * pos + (1.0 - y) * neg;
    if (weight.defined()) loss = loss * weight;
    return per_sample_mean(loss);
}

torch::Tensor focal(const torch::Tensor& p, const torch::Tensor& y, double alpha, double gamma,
                    const torch::Tensor& weight, double eps) {
    return focal_per_sample(p, y, alpha, gamma, weight, eps).mean();
}

torch::Tensor tversky_per_sample(const torch::Tensor& p, const torch::Tensor& y, double alpha, double beta,
                                 double smooth) {
    check_pair(p, y, "tversky");
    auto tp = per_sample_sum(p * y);
    auto fp = per_sample_sum(p * (1.0 - y));
    auto fn = per_sample_sum((1.0 - p) * y);
    return 1.0 - (tp + smooth) / (tp + alpha * fp + beta * fn + smooth);
}

torch::Tensor tversky(const torch::Tensor& p, const torch::Tensor& y, double alpha, double beta, double smooth) {
    return tversky_per_sample(p, y, alpha, beta, smooth).mean();
}

torch::Tensor soft_dice_per_sample(const torch::Tensor& p, const torch::Tensor& y, double smooth) {
    check_pair(p, y, "soft_dice");
    auto inter = per_sample_sum(p * y);
    return 1.0 - (2.0 * inter + smooth) / (per_sample_sum(p) + per_sample_sum(y) + smooth);
}

torch::Tensor soft_dice(const torch::Tensor& p, const torch::Tensor& y, double smooth) {
    return soft_dice_per_sample(p, y, smooth).mean();
}

torch::Tensor binary_cross_entropy(const torch::Tensor& p, const torch::Tensor& y, double eps) {
    check_pair(p, y, "binary_cross_entropy");
    auto pc = p.clamp(eps, 1.0 - eps);
    return (-(y * torch::log(pc) + (1.0 - y) * torch::log(1.0 - pc))).mean();
}

torch::Tensor distance_to_foreground(const torch::Tensor& y) {
    if (y.dim() != 4 || y.size(1) != 1) throw InputError("distance_to_foreground expects B x 1 x H x W");
    auto cpu = y.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    const auto b = cpu.size(0);
    const int h = static_cast<int>(cpu.size(2));
    const int w = static_cast<int>(cpu.size(3));
    auto out = torch::empty({b, 1, h, w}, torch::kFloat64);
    for (int64_t i = 0; i < b; ++i) {
        const double* src = cpu[i][0].data_ptr<double>();
        double* dst = out[i][0].data_ptr<double>();
        // distanceTransform measures the distance to the nearest zero pixel.
        cv::Mat bg(h, w, CV_8U);
        bool any_fg = false;
        for (int k = 0; k < h * w; ++k) {
            const bool fg = src[k] > 0.5;
            any_fg |= fg;
            bg.data[k] = fg ? 0 : 255;
        }
        if (!any_fg) {
            std::fill(dst, dst + h * w, std::numeric_limits<double>::infinity());
            continue;
        }
        cv::Mat dist;
        cv::distanceTransform(bg, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE, CV_32F);
        const float* d = dist.ptr<float>();
        for (int k = 0; k < h * w; ++k) dst[k] = d[k];
    }
    return out.to(y.device());
}

torch::Tensor eroded_background(const torch::Tensor& y, double cutoff) {
    return (distance_to_foreground(y) > cutoff).to(y.options());
}

torch::Tensor tv_per_sample(const torch::Tensor& p, const torch::Tensor& domain) {
    check_pair(p, domain, "tv");
    const auto w = p.size(3);
    const auto h = p.size(2);
    auto dx = (p.narrow(3, 1, w - 1) - p.narrow(3, 0, w - 1)).abs();
    auto dy = (p.narrow(2, 1, h - 1) - p.narrow(2, 0, h - 1)).abs();
    auto mx = domain.narrow(3, 1, w - 1) * domain.narrow(3, 0, w - 1);
    auto my = domain.narrow(2, 1, h - 1) * domain.narrow(2, 0, h - 1);
    auto pairs = per_sample_sum(mx) + per_sample_sum(my);
    auto total = per_sample_sum(dx * mx) + per_sample_sum(dy * my);
    return total / pairs.clamp_min(1.0);
}

torch::Tensor tv_background(const torch::Tensor& p, const torch::Tensor& y, double cutoff) {
    return tv_per_sample(p, eroded_background(y, cutoff)).mean();
}

torch::Tensor edge_band_weights(const torch::Tensor& edge, double cutoff, double band_weight) {
    auto dist = distance_to_foreground(edge);
    auto inside = (dist <= cutoff).to(edge.options());
    return 1.0 + (band_weight - 1.0) * inside;
}

torch::Tensor edge_dice_per_sample(const torch::Tensor& p, const torch::Tensor& mask, const torch::Tensor& edge,
                                   double smooth) {
    check_pair(p, mask, "edge_dice");
    check_pair(p, edge, "edge_dice");
    auto inter = per_sample_sum(p * mask * edge);
    auto psum = per_sample_sum(p * edge);
    auto msum = per_sample_sum(mask * edge);
    auto loss = 1.0 - (2.0 * inter + smooth) / (psum + msum + smooth);
    auto has_edge = per_sample_sum(edge) > 0;
    return torch::where(has_edge, loss, torch::zeros_like(loss));
}

double instance_weight(double foreground_ratio, double factor, double lo, double hi) {
    if (foreground_ratio <= lo) return factor;
    if (foreground_ratio >= hi) return 1.0;
    return factor + (1.0 - factor) * (foreground_ratio - lo) / (hi - lo);
}

torch::Tensor instance_weights(const torch::Tensor& mask, const LossConfig& cfg) {
    auto ratios = per_sample_mean(mask.detach()).to(torch::kCPU, torch::kFloat64).contiguous();
    auto out = torch::empty_like(ratios);
    auto r = ratios.accessor<double, 1>();
    auto o = out.accessor<double, 1>();
    for (int64_t i = 0; i < ratios.size(0); ++i) {
        o[i] = instance_weight(r[i], cfg.instance_factor, cfg.instance_lo, cfg.instance_hi);
    }
    return out.to(mask.options());
}

LossTargets make_loss_targets(const torch::Tensor& mask, const torch::Tensor& edge, const LossConfig& cfg) {
    check_pair(mask, edge, "loss targets");
    return {mask, edge, edge_band_weights(edge, cfg.edge_band_cutoff, cfg.edge_focal_weight),
            eroded_background(edge, cfg.edge_band_cutoff)};
}

torch::Tensor edge_loss_per_sample(const torch::Tensor& p_edge, const LossTargets& t, const LossConfig& cfg) {
    auto f = focal_per_sample(p_edge, t.edge, cfg.focal_alpha, cfg.focal_gamma, t.band_weight, cfg.clamp_eps);
    auto domain = cfg.tv_on_predicted_background ? (p_edge.detach() < 0.5).to(p_edge.options()) : t.tv_domain;
    return f + cfg.tv_weight * tv_per_sample(p_edge, domain);
}

nlohmann::json LossReport::to_json() const {
    nlohmann::json j;
    j["total"] = total_value;
    j["edge"] = edge;
    j["loc"] = loc;
    j["final"] = final;
    j["terms"] = terms;
    j["instance_weights"] = instance_weights;
    return j;
}

LossReport total_loss(const PredictionTriplet& pred, const LossTargets& t, const LossConfig& cfg) {
    const double eps = cfg.clamp_eps;
    auto w = instance_weights(t.mask, cfg);

    auto edge_focal = focal_per_sample(pred.edge, t.edge, cfg.focal_alpha, cfg.focal_gamma, t.band_weight, eps);
    auto tv_domain = cfg.tv_on_predicted_background ? (pred.edge.detach() < 0.5).to(pred.edge.options()) : t.tv_domain;
    auto edge_tv = tv_per_sample(pred.edge, tv_domain);
    auto l_edge = (edge_focal + cfg.tv_weight * edge_tv).mean();

    auto loc_focal = focal_per_sample(pred.loc, t.mask, cfg.focal_alpha, cfg.focal_gamma, {}, eps);
    auto loc_tversky =
        tversky_per_sample(pred.loc, t.mask, cfg.tversky_loc_alpha, cfg.tversky_loc_beta, cfg.tversky_smooth);
    auto l_loc = (w * (cfg.loc_focal_weight * loc_focal + cfg.loc_tversky_weight * loc_tversky)).mean();

    auto final_focal = focal_per_sample(pred.final, t.mask, cfg.focal_alpha, cfg.focal_gamma, {}, eps);
    auto final_tversky =
        tversky_per_sample(pred.final, t.mask, cfg.tversky_final_alpha, cfg.tversky_final_beta, cfg.tversky_smooth);
    auto final_dice = edge_dice_per_sample(pred.final, t.mask, t.edge, cfg.dice_smooth);
    auto l_final = (w * (cfg.final_focal_weight * final_focal + cfg.final_tversky_weight * final_tversky +
                         cfg.edge_dice_weight * final_dice))
                       .mean();

    LossReport r;
    r.total = cfg.w_final * l_final + cfg.w_loc * l_loc + cfg.w_edge * l_edge;
    r.total_value = r.total.item<double>();
    r.edge = l_edge.item<double>();
    r.loc = l_loc.item<double>();
    r.final = l_final.item<double>();
    auto mean_of = [](const torch::Tensor& x) { return x.mean().item<double>(); };
    r.terms = {{"edge_focal", mean_of(edge_focal)},     {"edge_tv", mean_of(edge_tv)},
               {"loc_focal", mean_of(loc_focal)},       {"loc_tversky", mean_of(loc_tversky)},
               {"final_focal", mean_of(final_focal)},   {"final_tversky", mean_of(final_tversky)},
               {"final_edge_dice", mean_of(final_dice)}};
    auto wc = w.to(torch::kCPU, torch::kFloat64).contiguous();
    r.instance_weights.assign(wc.data_ptr<double>(), wc.data_ptr<double>() + wc.numel());
    return r;
}

}  // namespace camoseg
