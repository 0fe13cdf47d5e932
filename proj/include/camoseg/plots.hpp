#pragma once

// Static PNG figures drawn with OpenCV primitives.

#include <opencv2/core.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace camoseg {

/// Line plot of one or more series against their index.
void plot_curves(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::vector<double>>>& series,
                 const std::string& title);

/// Vertical bars with value labels.
void plot_bars(const std::filesystem::path& path, const std::vector<std::pair<std::string, double>>& bars,
               const std::string& title, double y_max = 1.0);

/// Tiles equally sized panels left to right (grayscale panels are expanded to 3 channels).
/// Inputs may be CV_8U or float in [0,1]; returns CV_8UC3 (BGR order untouched).
cv::Mat tile_panels(const std::vector<cv::Mat>& panels, int panel_size);

}  // namespace camoseg
