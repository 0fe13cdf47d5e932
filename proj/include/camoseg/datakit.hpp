#pragma once

// Dataset ingestion, preprocessing, edge targets and the synthetic scene generator.
//
// Images are RGB float32 in [0,1] (CV_32FC3); masks and edge maps are CV_8U with values {0,1}.

#include "json.hpp"
#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace camoseg {

struct SceneMeta {
    std::string name;
    double foreground_ratio = 0.0;
    std::optional<cv::Rect> distractor;  ///< salient non-target object, x/y/width/height
    std::uint64_t seed = 0;
};

struct SceneSample {
    cv::Mat image;  ///< H x W, CV_32FC3, RGB
    cv::Mat mask;   ///< H x W, CV_8U {0,1}
    cv::Mat edge;   ///< H x W, CV_8U {0,1}
    SceneMeta meta;
};

struct PreprocessConfig {
    int size = 392;
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> std{0.229, 0.224, 0.225};

    void validate() const;
};

/// Bilinear resize to size x size and per-channel (x - mean) / std. Returns 3 x S x S float32.
torch::Tensor preprocess(const cv::Mat& rgb, const PreprocessConfig& cfg);
/// Inverse of the normalisation step (no resize). Returns S x S CV_32FC3.
cv::Mat denormalize(const torch::Tensor& chw, const PreprocessConfig& cfg);

struct ImageBatch {
    torch::Tensor images;                ///< B x 3 x S x S
    std::vector<cv::Size> original_sizes;  ///< width x height before resizing
};
ImageBatch make_image_batch(const std::vector<cv::Mat>& rgb_images, const PreprocessConfig& cfg);

/// Binary map resized to size x size (bilinear, then > 0.5) as a 1 x S x S float tensor.
torch::Tensor binary_to_tensor(const cv::Mat& binary, int size);

struct TrainingBatch {
    torch::Tensor images;  ///< B x 3 x S x S
    torch::Tensor mask;    ///< B x 1 x S x S
    torch::Tensor edge;    ///< B x 1 x S x S
};
TrainingBatch make_training_batch(const std::vector<const SceneSample*>& samples, const PreprocessConfig& cfg);

/// Canny on the binary mask (Gaussian sigma 1, hysteresis 0.1 / 0.2 of full scale) dilated
/// by a radius-2 disk, giving a 5 px band. Depends only on the mask boundary, so
/// make_edge_targets(M) == make_edge_targets(1 - M); empty and full masks give no edges.
cv::Mat make_edge_targets(const cv::Mat& mask);

// ---- IO ----

cv::Mat read_rgb(const std::filesystem::path& p);  ///< throws InputError when unreadable
/// 8-bit grayscale read binarised at > 128.
cv::Mat read_binary(const std::filesystem::path& p);
void write_rgb(const std::filesystem::path& p, const cv::Mat& rgb);
void write_binary(const std::filesystem::path& p, const cv::Mat& binary);

struct LoadResult {
    std::vector<SceneSample> samples;
    std::vector<std::string> warnings;
    size_t skipped = 0;  ///< unreadable items
};

/// Pairs root/Image/<stem>.{png,jpg,jpeg,bmp} with root/GT/<stem>.png (sorted by stem).
/// Edges come from root/Edge/<stem>.png when present, otherwise they are generated.
/// A manifest.json written by write_dataset restores seeds and distractor boxes.
LoadResult load_dataset(const std::filesystem::path& root);

// ---- synthetic scenes ----

struct GeneratorConfig {
    int size = 112;
    double fg_min = 0.04;  ///< foreground ratio bounds
    double fg_max = 0.20;
    double delta = 0.12;   ///< intensity offset of the camouflaged object
    int octaves = 4;
    double base_period = 24.0;  ///< lattice spacing of the coarsest noise octave, px
    double texture_amplitude = 0.35;
    bool scod = false;          ///< add a salient distractor
    double distractor_contrast = 0.55;
    double min_separation = 0.10;  ///< fraction of the width between target and distractor
    int max_attempts = 200;

    void validate() const;  ///< GenerationError when the bounds cannot be met on the grid
    nlohmann::json to_json() const;
    static GeneratorConfig from_json(const nlohmann::json& j);
};

/// Deterministic per seed (bit-identical across runs).
SceneSample gen_scene(std::uint64_t seed, const GeneratorConfig& cfg);

/// Writes count scenes with seeds base_seed + i in the dataset layout plus manifest.json.
void write_dataset(const std::filesystem::path& root, int count, std::uint64_t base_seed, const GeneratorConfig& cfg);

/// Uniform double in [0,1) from the top 53 bits; independent of the standard library's
/// distribution implementations.
inline double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace camoseg
