#pragma once

// Deep-supervision objective: edge, localization and final losses and their weighted sum.
// All maps are B x 1 x H x W; p holds probabilities, targets are {0,1}.

#include "camoseg/types.hpp"

#include "json.hpp"
#include <torch/torch.h>

#include <map>
#include <string>
#include <vector>

namespace camoseg {

struct LossConfig {
    double w_edge = 1.0;
    double w_loc = 1.15;
    double w_final = 1.2;
    double focal_alpha = 0.25;
    double focal_gamma = 3.0;
    double tversky_loc_alpha = 0.6;
    double tversky_loc_beta = 0.4;
    double tversky_final_alpha = 0.4;
    double tversky_final_beta = 0.6;
    double edge_focal_weight = 5.0;
    double tv_weight = 0.15;
    double edge_band_cutoff = 5.0;
    double edge_dice_weight = 0.2;
    double instance_factor = 3.0;
    double instance_lo = 0.02;
    double instance_hi = 0.8;
    // Relative weights inside the localization and final losses.
    double loc_focal_weight = 1.0;
    double loc_tversky_weight = 1.0;
    double final_focal_weight = 1.0;
    double final_tversky_weight = 1.0;
    double tversky_smooth = 1.0;
    double dice_smooth = 1.0;
    double clamp_eps = 1e-6;
    /// TV domain from the thresholded prediction (p < 0.5) instead of the eroded GT background.
    bool tv_on_predicted_background = false;

    void validate() const;
};

// ---- individual terms; *_per_sample returns a B-vector, the plain form its mean ----

torch::Tensor focal_per_sample(const torch::Tensor& p, const torch::Tensor& y, double alpha, double gamma,
                               const torch::Tensor& weight = {}, double eps = 1e-6);
torch::Tensor focal(const torch::Tensor& p, const torch::Tensor& y, double alpha, double gamma,
                    const torch::Tensor& weight = {}, double eps = 1e-6);

/// 1 - (TP + s) / (TP + alpha FP + beta FN + s) with soft counts.
torch::Tensor tversky_per_sample(const torch::Tensor& p, const torch::Tensor& y, double alpha, double beta,
                                 double smooth = 1.0);
torch::Tensor tversky(const torch::Tensor& p, const torch::Tensor& y, double alpha, double beta, double smooth = 1.0);

/// 1 - (2 sum(p y) + s) / (sum(p) + sum(y) + s).
torch::Tensor soft_dice_per_sample(const torch::Tensor& p, const torch::Tensor& y, double smooth = 1.0);
torch::Tensor soft_dice(const torch::Tensor& p, const torch::Tensor& y, double smooth = 1.0);

/// Binary cross-entropy, mean over pixels (clamped like focal).
torch::Tensor binary_cross_entropy(const torch::Tensor& p, const torch::Tensor& y, double eps = 1e-6);

/// Euclidean distance of every pixel to the nearest pixel with y = 1 (0 on those pixels,
/// +inf when y has none). B x 1 x H x W, float64, no gradient.
torch::Tensor distance_to_foreground(const torch::Tensor& y);

/// Background pixels farther than `cutoff` from any foreground pixel (float 0/1 mask).
torch::Tensor eroded_background(const torch::Tensor& y, double cutoff);

/// Mean |p(i,j+1) - p(i,j)| and |p(i+1,j) - p(i,j)| over neighbour pairs with both
/// pixels inside `domain`; 0 when no pair qualifies.
torch::Tensor tv_per_sample(const torch::Tensor& p, const torch::Tensor& domain);
torch::Tensor tv_background(const torch::Tensor& p, const torch::Tensor& y, double cutoff = 5.0);

/// `band_weight` within `cutoff` px (inclusive) of an edge pixel, 1 elsewhere.
torch::Tensor edge_band_weights(const torch::Tensor& edge, double cutoff, double band_weight);

/// Soft Dice between p and mask restricted to edge pixels; 0 where the edge map is empty.
torch::Tensor edge_dice_per_sample(const torch::Tensor& p, const torch::Tensor& mask, const torch::Tensor& edge,
                                   double smooth = 1.0);

/// factor for ratio <= lo, 1 for ratio >= hi, linear in between.
double instance_weight(double foreground_ratio, double factor, double lo, double hi);
torch::Tensor instance_weights(const torch::Tensor& mask, const LossConfig& cfg);

/// Ground truth plus the derived, gradient-free maps the losses need.
struct LossTargets {
    torch::Tensor mask;         ///< M_gt
    torch::Tensor edge;         ///< E_gt
    torch::Tensor band_weight;  ///< edge focal weights
    torch::Tensor tv_domain;    ///< background of E_gt eroded by the band cutoff
};
LossTargets make_loss_targets(const torch::Tensor& mask, const torch::Tensor& edge, const LossConfig& cfg);

torch::Tensor edge_loss_per_sample(const torch::Tensor& p_edge, const LossTargets& t, const LossConfig& cfg);

struct LossReport {
    torch::Tensor total;  ///< differentiable scalar
    double total_value = 0.0;
    double edge = 0.0;
    double loc = 0.0;
    double final = 0.0;
    /// Batch means of the unweighted sub-terms.
    std::map<std::string, double> terms;
    std::vector<double> instance_weights;

    nlohmann::json to_json() const;
};

LossReport total_loss(const PredictionTriplet& pred, const LossTargets& targets, const LossConfig& cfg);

}  // namespace camoseg
