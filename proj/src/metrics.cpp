#include "camoseg/metrics.hpp"

#include "camoseg/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace camoseg::metrics {

Grid::Grid(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<size_t>(r) * c) throw InputError("Grid: value count does not match shape");
}

namespace {

void check_inputs(const Grid& pred, const Grid& gt) {
    if (!pred.same_shape(gt)) throw InputError("prediction and ground truth shapes differ");
    if (pred.size() == 0) throw InputError("empty map");
}

bool is_fg(double g) { return g > 0.5; }

double mean_of(const Grid& g) {
    return std::accumulate(g.data.begin(), g.data.end(), 0.0) / static_cast<double>(g.size());
}

double adaptive_threshold(const Grid& pred) { return std::min(2.0 * mean_of(pred), 1.0); }

// Number of sweep thresholds t_k = k/256 that p exceeds: #{k in [0,256) : k < 256 p}.
int sweep_count(double p) {
    const double scaled = std::ceil(p * kThresholds);
    return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(kThresholds)));
}

// ---- S-measure pieces ----

double object_similarity(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    const double n = static_cast<double>(values.size());
    const double mu = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double sigma = 0.0;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - mu) * (v - mu);
        sigma = std::sqrt(ss / (n - 1.0));
    }
    return 2.0 * mu / (mu * mu + 1.0 + sigma);
}

double s_object(const Grid& pred, const Grid& gt) {
    std::vector<double> fg_vals, bg_vals;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (is_fg(gt.data[i])) fg_vals.push_back(pred.data[i]);
        else bg_vals.push_back(1.0 - pred.data[i]);
    }
    const double u = static_cast<double>(fg_vals.size()) / static_cast<double>(pred.size());
    return u * object_similarity(fg_vals) + (1.0 - u) * object_similarity(bg_vals);
}

// SSIM-style similarity of one quadrant [r0,r1) x [c0,c1).
double region_ssim(const Grid& pred, const Grid& gt, int r0, int r1, int c0, int c1) {
    const double n = static_cast<double>(r1 - r0) * (c1 - c0);
    if (n <= 0) return 0.0;
    double sx = 0.0, sy = 0.0;
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
            sx += pred.at(r, c);
            sy += is_fg(gt.at(r, c)) ? 1.0 : 0.0;
        }
    const double x = sx / n, y = sy / n;
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
            const double dx = pred.at(r, c) - x;
            const double dy = (is_fg(gt.at(r, c)) ? 1.0 : 0.0) - y;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    const double denom = n > 1 ? n - 1.0 : 1.0;
    vx /= denom;
    vy /= denom;
    cxy /= denom;
    const double a = 4.0 * x * y * cxy;
    const double b = (x * x + y * y) * (vx + vy);
    if (a != 0.0) return a / b;
    return b == 0.0 ? 1.0 : 0.0;
}

double s_region(const Grid& pred, const Grid& gt) {
    // Centroid of the foreground, rounded half-to-even, then shifted by one: the split
    // point is the first row/column of the lower/right quadrants.
    double sr = 0.0, sc = 0.0, count = 0.0;
    for (int r = 0; r < gt.rows; ++r)
        for (int c = 0; c < gt.cols; ++c)
            if (is_fg(gt.at(r, c))) {
                sr += r;
                sc += c;
                count += 1.0;
            }
    int cx, cy;
    if (count == 0.0) {
        cx = static_cast<int>(std::nearbyint(gt.cols / 2.0));
        cy = static_cast<int>(std::nearbyint(gt.rows / 2.0));
    } else {
        cx = static_cast<int>(std::nearbyint(sc / count)) + 1;
        cy = static_cast<int>(std::nearbyint(sr / count)) + 1;
    }
    cx = std::clamp(cx, 0, gt.cols);
    cy = std::clamp(cy, 0, gt.rows);
    const double h = gt.rows, w = gt.cols;
    const std::array<double, 4> areas{cy * static_cast<double>(cx), cy * (w - cx), (h - cy) * cx, (h - cy) * (w - cx)};
    const std::array<double, 4> scores{
        region_ssim(pred, gt, 0, cy, 0, cx), region_ssim(pred, gt, 0, cy, cx, gt.cols),
        region_ssim(pred, gt, cy, gt.rows, 0, cx), region_ssim(pred, gt, cy, gt.rows, cx, gt.cols)};
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) acc += areas[i] * scores[i];
    return acc / (h * w);
}

// ---- E-measure from confusion counts ----

double enhanced_alignment(double tp, double fp, double fn, double tn, double gt_fg, double n) {
    if (gt_fg == 0.0) return (fn + tn) / n;  // predicted-background pixels
    if (gt_fg == n) return (tp + fp) / n;    // predicted-foreground pixels
    const double pred_mean = (tp + fp) / n;
    const double gt_mean = gt_fg / n;
    const double pf = 1.0 - pred_mean, pb = -pred_mean;
    const double gf = 1.0 - gt_mean, gb = -gt_mean;
    auto enhanced = [](double a, double b) {
        const double denom = a * a + b * b;
        const double align = denom == 0.0 ? 0.0 : 2.0 * a * b / denom;
        return (align + 1.0) * (align + 1.0) / 4.0;
    };
    const double sum = tp * enhanced(pf, gf) + fp * enhanced(pf, gb) + fn * enhanced(pb, gf) + tn * enhanced(pb, gb);
    return sum / n;
}

struct SweepCounts {
    // tp[k], pos[k]: true positives and predicted positives at threshold k.
    std::array<double, kThresholds> tp{};
    std::array<double, kThresholds> pos{};
    double gt_fg = 0.0;
    double n = 0.0;
};

SweepCounts sweep(const Grid& pred, const Grid& gt) {
    std::array<double, kThresholds + 1> fg_hist{}, bg_hist{};
    SweepCounts s;
    for (size_t i = 0; i < pred.size(); ++i) {
        const int c = sweep_count(pred.data[i]);
        if (is_fg(gt.data[i])) {
            fg_hist[c] += 1.0;
            s.gt_fg += 1.0;
        } else {
            bg_hist[c] += 1.0;
        }
    }
    s.n = static_cast<double>(pred.size());
    // A pixel with sweep count c is positive at thresholds k < c.
    double fg_above = 0.0, bg_above = 0.0;
    for (int k = kThresholds - 1; k >= 0; --k) {
        fg_above += fg_hist[k + 1];
        bg_above += bg_hist[k + 1];
        s.tp[k] = fg_above;
        s.pos[k] = fg_above + bg_above;
    }
    return s;
}

double f_beta(double tp, double pos, double gt_fg, double beta2) {
    const double precision = pos > 0 ? tp / pos : 0.0;
    const double recall = tp / std::max(gt_fg, 1.0);
    const double num = (1.0 + beta2) * precision * recall;
    return num == 0.0 ? 0.0 : num / (beta2 * precision + recall);
}

// ---- weighted F helpers ----

std::array<double, 49> gaussian_7x7(double sigma) {
    std::array<double, 49> k{};
    double mx = 0.0;
    for (int y = -3; y <= 3; ++y)
        for (int x = -3; x <= 3; ++x) {
            const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
            k[(y + 3) * 7 + (x + 3)] = v;
            mx = std::max(mx, v);
        }
    double sum = 0.0;
    for (auto& v : k) {
        if (v < std::numeric_limits<double>::epsilon() * mx) v = 0.0;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

struct NearestForeground {
    std::vector<int> index;  // linear index of the nearest foreground pixel
    std::vector<double> distance;
};

// Exact nearest foreground pixel for every pixel: per-row nearest columns, then a row scan
// bounded by the best squared distance. Ties -> smallest (row, col).
NearestForeground nearest_foreground(const Grid& gt) {
    const int h = gt.rows, w = gt.cols;
    std::vector<int> left(static_cast<size_t>(h) * w, -1), right(static_cast<size_t>(h) * w, -1);
    for (int r = 0; r < h; ++r) {
        int last = -1;
        for (int c = 0; c < w; ++c) {
            if (is_fg(gt.at(r, c))) last = c;
            left[r * w + c] = last;
        }
        last = -1;
        for (int c = w - 1; c >= 0; --c) {
            if (is_fg(gt.at(r, c))) last = c;
            right[r * w + c] = last;
        }
    }
    NearestForeground out;
    out.index.assign(static_cast<size_t>(h) * w, -1);
    out.distance.assign(static_cast<size_t>(h) * w, 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            long best_d2 = std::numeric_limits<long>::max();
            int best_r = -1, best_c = -1;
            auto consider = [&](int rr) {
                const long dy = rr - r;
                for (int cc : {left[rr * w + c], right[rr * w + c]}) {
                    if (cc < 0) continue;
                    const long dx = cc - c;
                    const long d2 = dy * dy + dx * dx;
                    if (d2 < best_d2 || (d2 == best_d2 && (rr < best_r || (rr == best_r && cc < best_c)))) {
                        best_d2 = d2;
                        best_r = rr;
                        best_c = cc;
                    }
                }
            };
            for (int d = 0; d < std::max(h, w); ++d) {
                if (static_cast<long>(d) * d > best_d2) break;
                if (r - d >= 0) consider(r - d);
                if (d > 0 && r + d < h) consider(r + d);
            }
            out.index[r * w + c] = best_r * w + best_c;
            out.distance[r * w + c] = std::sqrt(static_cast<double>(best_d2));
        }
    }
    return out;
}

}  // namespace

double mae(const Grid& pred, const Grid& gt) {
    check_inputs(pred, gt);
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.data[i] - (is_fg(gt.data[i]) ? 1.0 : 0.0));
    return acc / static_cast<double>(pred.size());
}

double s_measure(const Grid& pred, const Grid& gt, double alpha) {
    check_inputs(pred, gt);
    double fg = 0.0;
    for (double g : gt.data) fg += is_fg(g) ? 1.0 : 0.0;
    const double y = fg / static_cast<double>(gt.size());
    if (y == 0.0) return 1.0 - mean_of(pred);
    if (y == 1.0) return mean_of(pred);
    return std::max(0.0, alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt));
}

double e_measure_binary(const std::vector<bool>& binary_pred, const Grid& gt) {
    if (binary_pred.size() != gt.size() || gt.size() == 0) throw InputError("e_measure: shape mismatch");
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        const bool g = is_fg(gt.data[i]);
        if (binary_pred[i]) (g ? tp : fp) += 1.0;
        else (g ? fn : tn) += 1.0;
    }
    return enhanced_alignment(tp, fp, fn, tn, tp + fn, static_cast<double>(gt.size()));
}

EMeasure e_measure(const Grid& pred, const Grid& gt) {
    check_inputs(pred, gt);
    EMeasure out;
    const double thr = adaptive_threshold(pred);
    std::vector<bool> bin(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) bin[i] = pred.data[i] >= thr;
    out.adaptive = e_measure_binary(bin, gt);

    const auto s = sweep(pred, gt);
    double acc = 0.0;
    out.max = -1.0;
    for (int k = 0; k < kThresholds; ++k) {
        const double tp = s.tp[k], fp = s.pos[k] - s.tp[k];
        const double fn = s.gt_fg - tp, tn = s.n - s.gt_fg - fp;
        const double e = enhanced_alignment(tp, fp, fn, tn, s.gt_fg, s.n);
        acc += e;
        out.max = std::max(out.max, e);
    }
    out.mean = acc / kThresholds;
    return out;
}

double weighted_f_measure(const Grid& pred, const Grid& gt, double beta2) {
    check_inputs(pred, gt);
    const int h = gt.rows, w = gt.cols;
    const size_t n = gt.size();
    double gt_fg = 0.0;
    for (double g : gt.data) gt_fg += is_fg(g) ? 1.0 : 0.0;
    if (gt_fg == 0.0) return 0.0;

    std::vector<double> err(n), err_t(n);
    for (size_t i = 0; i < n; ++i) err[i] = std::abs(pred.data[i] - (is_fg(gt.data[i]) ? 1.0 : 0.0));
    const auto nearest = nearest_foreground(gt);
    // Background errors are attributed to their nearest foreground pixel.
    for (size_t i = 0; i < n; ++i) err_t[i] = is_fg(gt.data[i]) ? err[i] : err[nearest.index[i]];

    const auto kernel = gaussian_7x7(5.0);
    double tp_sum = 0.0, fp_sum = 0.0, fg_err_sum = 0.0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const size_t i = static_cast<size_t>(r) * w + c;
            double ea = 0.0;
            for (int dy = -3; dy <= 3; ++dy) {
                const int rr = r + dy;
                if (rr < 0 || rr >= h) continue;
                for (int dx = -3; dx <= 3; ++dx) {
                    const int cc = c + dx;
                    if (cc < 0 || cc >= w) continue;
                    ea += kernel[(dy + 3) * 7 + (dx + 3)] * err_t[static_cast<size_t>(rr) * w + cc];
                }
            }
            const bool fg = is_fg(gt.data[i]);
            const double min_e = (fg && ea < err[i]) ? ea : err[i];
            const double importance = fg ? 1.0 : 2.0 - std::exp(std::log(0.5) / 5.0 * nearest.distance[i]);
            const double ew = min_e * importance;
            if (fg) fg_err_sum += ew;
            else fp_sum += ew;
        }
    }
    tp_sum = gt_fg - fg_err_sum;
    const double recall = 1.0 - fg_err_sum / gt_fg;
    const double pdenom = tp_sum + fp_sum;
    const double precision = pdenom > 0 ? tp_sum / pdenom : 0.0;
    const double qdenom = recall + beta2 * precision;
    return qdenom > 0 ? (1.0 + beta2) * recall * precision / qdenom : 0.0;
}

FMeasure f_measures(const Grid& pred, const Grid& gt, double beta2) {
    check_inputs(pred, gt);
    FMeasure out;
    out.weighted = weighted_f_measure(pred, gt, beta2);
    const auto s = sweep(pred, gt);
    double acc = 0.0;
    for (int k = 0; k < kThresholds; ++k) {
        const double f = f_beta(s.tp[k], s.pos[k], s.gt_fg, beta2);
        acc += f;
        out.max = std::max(out.max, f);
    }
    out.mean = acc / kThresholds;
    const double thr = adaptive_threshold(pred);
    double tp = 0.0, pos = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred.data[i] >= thr) {
            pos += 1.0;
            if (is_fg(gt.data[i])) tp += 1.0;
        }
    }
    out.adaptive = f_beta(tp, pos, s.gt_fg, beta2);
    return out;
}

EPhiMode parse_ephi_mode(const std::string& s) {
    if (s == "mean") return EPhiMode::Mean;
    if (s == "adaptive") return EPhiMode::Adaptive;
    if (s == "max") return EPhiMode::Max;
    throw ConfigError("unknown E-measure mode '" + s + "' (mean|adaptive|max)");
}

const char* to_string(EPhiMode m) {
    switch (m) {
        case EPhiMode::Mean: return "mean";
        case EPhiMode::Adaptive: return "adaptive";
        case EPhiMode::Max: return "max";
    }
    return "mean";
}

MetricValues evaluate_pair(const Grid& pred, const Grid& gt, EPhiMode ephi) {
    MetricValues v;
    v.s_alpha = s_measure(pred, gt);
    const auto e = e_measure(pred, gt);
    v.e_mean = e.mean;
    v.e_adaptive = e.adaptive;
    v.e_max = e.max;
    v.e_phi = ephi == EPhiMode::Mean ? e.mean : ephi == EPhiMode::Adaptive ? e.adaptive : e.max;
    const auto f = f_measures(pred, gt);
    v.f_weighted = f.weighted;
    v.f_mean = f.mean;
    v.f_max = f.max;
    v.f_adaptive = f.adaptive;
    v.mae = mae(pred, gt);
    return v;
}

namespace {

constexpr std::array<const char*, 10> kColumns{"S_alpha",    "E_phi",  "E_mean", "E_adaptive", "E_max",
                                               "F_weighted", "F_mean", "F_max",  "F_adaptive", "MAE"};

std::array<double MetricValues::*, 10> fields() {
    return {&MetricValues::s_alpha,    &MetricValues::e_phi,  &MetricValues::e_mean, &MetricValues::e_adaptive,
            &MetricValues::e_max,      &MetricValues::f_weighted, &MetricValues::f_mean, &MetricValues::f_max,
            &MetricValues::f_adaptive, &MetricValues::mae};
}

}  // namespace

MetricReport aggregate(std::vector<std::pair<std::string, MetricValues>> rows, EPhiMode ephi) {
    if (rows.empty()) throw InputError("cannot aggregate an empty set of images");
    MetricReport r;
    r.rows = std::move(rows);
    r.count = r.rows.size();
    r.ephi = ephi;
    for (auto f : fields()) {
        double acc = 0.0;
        for (const auto& row : r.rows) acc += row.second.*f;
        r.mean.*f = acc / static_cast<double>(r.count);
    }
    return r;
}

void MetricReport::write_csv(std::ostream& os) const {
    os << "image";
    for (auto* c : kColumns) os << ',' << c;
    os << '\n';
    os.precision(10);
    for (const auto& [name, v] : rows) {
        os << name;
        for (auto f : fields()) os << ',' << v.*f;
        os << '\n';
    }
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["count"] = count;
    j["e_phi_mode"] = metrics::to_string(ephi);
    auto cols = fields();
    for (size_t i = 0; i < cols.size(); ++i) j["mean"][kColumns[i]] = mean.*cols[i];
    return j.dump(2);
}

}  // namespace camoseg::metrics
