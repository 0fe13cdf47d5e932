#pragma once

// Scoring and prediction orchestration: model over a dataset, prediction directories
// against GT directories, report files, and mask export at original image sizes.

#include "camoseg/datakit.hpp"
#include "camoseg/metrics.hpp"
#include "camoseg/model.hpp"

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace camoseg {

/// Single-channel map as a Grid; CV_8U is scaled by 1/255.
metrics::Grid to_grid(const cv::Mat& m);
/// H x W (or 1 x H x W) tensor as a Grid.
metrics::Grid to_grid(const torch::Tensor& t);

/// Probability map (H x W or 1 x H x W tensor) resized bilinearly to `size`; CV_32F.
cv::Mat resize_probability(const torch::Tensor& prob, cv::Size size);
/// Rounds p * 255 to 8-bit.
cv::Mat probability_to_u8(const cv::Mat& prob);

/// Share of pixels inside `box` (and outside the GT mask) predicted above `threshold`.
double region_false_positive_rate(const cv::Mat& prob, const cv::Mat& mask, const cv::Rect& box, double threshold = 0.5);

struct EvalOptions {
    metrics::EPhiMode ephi = metrics::EPhiMode::Mean;
    int batch_size = 8;
};

/// Runs the model over the samples and scores P_final (resized back to each original size).
metrics::MetricReport evaluate_model(Segmenter& model, const std::vector<SceneSample>& samples,
                                     const PreprocessConfig& pre, const EvalOptions& opts = {});

/// Pairs <pred_dir>/<stem>.* with <gt_dir>/<stem>.*; GT binarised at > 128. With
/// `minmax_normalize`, each prediction is rescaled to [0,1] first (constant maps unchanged).
/// Throws InputError when no pair matches.
metrics::MetricReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                           metrics::EPhiMode ephi = metrics::EPhiMode::Mean, bool minmax_normalize = true,
                                           std::vector<std::string>* warnings = nullptr);

/// metrics.csv (per image), metrics.json (aggregate) and optionally metrics.png.
void write_reports(const metrics::MetricReport& report, const std::filesystem::path& out_dir, bool figure = true);

/// Sorted image files (png/jpg/jpeg/bmp) in a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

struct PredictOptions {
    bool emit_intermediate = false;  ///< also write <stem>_edge.png and <stem>_loc.png
    bool figures = false;            ///< side-by-side <stem>_panel.png
    int batch_size = 4;
};

/// Writes <stem>.png (P_final) per input at its original size; returns all written files.
std::vector<std::filesystem::path> predict_files(Segmenter& model, const std::vector<std::filesystem::path>& images,
                                                 const std::filesystem::path& out_dir, const PreprocessConfig& pre,
                                                 const PredictOptions& opts = {});

}  // namespace camoseg
