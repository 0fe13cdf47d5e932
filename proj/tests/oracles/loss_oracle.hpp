#pragma once

// Pixel-loop loss formulas over flat vectors (one sample).

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

inline double focal(const std::vector<double>& p, const std::vector<double>& y, double alpha, double gamma,
                    const std::vector<double>* weight = nullptr, double eps = 1e-6) {
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], eps, 1 - eps);
        const double l = y[i] > 0.5 ? -alpha * std::pow(1 - q, gamma) * std::log(q)
                                    : -(1 - alpha) * std::pow(q, gamma) * std::log(1 - q);
        s += (weight ? (*weight)[i] : 1.0) * l;
    }
    return s / p.size();
}

inline double bce(const std::vector<double>& p, const std::vector<double>& y, double eps = 1e-6) {
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], eps, 1 - eps);
        s += -(y[i] * std::log(q) + (1 - y[i]) * std::log(1 - q));
    }
    return s / p.size();
}

inline double tversky(const std::vector<double>& p, const std::vector<double>& y, double a, double b, double smooth) {
    double tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        tp += p[i] * y[i];
        fp += p[i] * (1 - y[i]);
        fn += (1 - p[i]) * y[i];
    }
    return 1 - (tp + smooth) / (tp + a * fp + b * fn + smooth);
}

inline double dice(const std::vector<double>& p, const std::vector<double>& y, double smooth) {
    double inter = 0, sp = 0, sy = 0;
    for (size_t i = 0; i < p.size(); ++i) inter += p[i] * y[i], sp += p[i], sy += y[i];
    return 1 - (2 * inter + smooth) / (sp + sy + smooth);
}

/// Mean |difference| over 4-neighbour pairs with both pixels in the domain; 0 if none.
inline double tv(const std::vector<double>& p, const std::vector<double>& domain, int h, int w) {
    double s = 0, n = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const int i = r * w + c;
            if (domain[i] < 0.5) continue;
            if (c + 1 < w && domain[i + 1] > 0.5) s += std::fabs(p[i + 1] - p[i]), n += 1;
            if (r + 1 < h && domain[i + w] > 0.5) s += std::fabs(p[i + w] - p[i]), n += 1;
        }
    return n > 0 ? s / n : 0.0;
}

/// Brute-force distance to the nearest set pixel (inf if none).
inline std::vector<double> distance_to_set(const std::vector<double>& m, int h, int w) {
    std::vector<double> d(m.size(), INFINITY);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int rr = 0; rr < h; ++rr)
                for (int cc = 0; cc < w; ++cc)
                    if (m[rr * w + cc] > 0.5)
                        d[r * w + c] = std::min(d[r * w + c], std::hypot(double(rr - r), double(cc - c)));
    return d;
}

inline double instance_weight(double r, double factor = 3.0, double lo = 0.02, double hi = 0.8) {
    if (r <= lo) return factor;
    if (r >= hi) return 1.0;
    return factor + (1.0 - factor) * (r - lo) / (hi - lo);
}

}  // namespace oracle
