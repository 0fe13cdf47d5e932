#pragma once

// Evaluation metrics for a prediction map P in [0,1] against a binary mask G.
//
// Conventions shared by every metric here:
//  - Threshold sweeps use the 256 thresholds t_k = k/256, k = 0..255, and binarize
//    with p > t_k. Every t_k < 1, so a binary P equal to G is reproduced at every
//    threshold and scores exactly 1 (the all-positive threshold never occurs).
//  - Adaptive thresholds are min(2 * mean(P), 1) and binarize with p >= t.
//  - Degenerate denominators are guarded explicitly instead of adding a machine
//    epsilon, so perfect predictions give exact values.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace camoseg::metrics {

/// Row-major 2-D map of doubles.
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Grid() = default;
    Grid(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}
    Grid(int r, int c, std::vector<double> values);

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return data.size(); }
    bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
};

inline constexpr int kThresholds = 256;
inline constexpr double kBeta2 = 0.3;

/// mean |P - G|. Throws InputError on shape mismatch.
double mae(const Grid& pred, const Grid& gt);

/// Structure measure alpha * S_object + (1 - alpha) * S_region, clipped at 0.
/// G empty -> 1 - mean(P); G full -> mean(P).
double s_measure(const Grid& pred, const Grid& gt, double alpha = 0.5);

/// Enhanced-alignment score of a binary prediction, normalised by the pixel count.
double e_measure_binary(const std::vector<bool>& binary_pred, const Grid& gt);

struct EMeasure {
    double adaptive = 0.0;
    double mean = 0.0;  ///< mean over the threshold sweep
    double max = 0.0;   ///< max over the threshold sweep
};
EMeasure e_measure(const Grid& pred, const Grid& gt);

/// Weighted F-measure (Gaussian-weighted dependency errors, distance-based importance).
/// Nearest-foreground ties resolve to the smallest (row, col). Empty G -> 0.
double weighted_f_measure(const Grid& pred, const Grid& gt, double beta2 = kBeta2);

struct FMeasure {
    double weighted = 0.0;
    double mean = 0.0;  ///< mean over the threshold sweep
    double max = 0.0;
    double adaptive = 0.0;
};
FMeasure f_measures(const Grid& pred, const Grid& gt, double beta2 = kBeta2);

enum class EPhiMode { Mean, Adaptive, Max };
EPhiMode parse_ephi_mode(const std::string& s);
const char* to_string(EPhiMode m);

struct MetricValues {
    double s_alpha = 0.0;
    double e_phi = 0.0;  ///< the selected E variant
    double e_mean = 0.0;
    double e_adaptive = 0.0;
    double e_max = 0.0;
    double f_weighted = 0.0;
    double f_mean = 0.0;
    double f_max = 0.0;
    double f_adaptive = 0.0;
    double mae = 0.0;
};

MetricValues evaluate_pair(const Grid& pred, const Grid& gt, EPhiMode ephi = EPhiMode::Mean);

struct MetricReport {
    std::vector<std::pair<std::string, MetricValues>> rows;
    MetricValues mean;
    size_t count = 0;
    EPhiMode ephi = EPhiMode::Mean;

    void write_csv(std::ostream& os) const;
    std::string to_json() const;
};

/// Averages rows in order. Throws InputError for an empty set.
MetricReport aggregate(std::vector<std::pair<std::string, MetricValues>> rows, EPhiMode ephi = EPhiMode::Mean);

}  // namespace camoseg::metrics
