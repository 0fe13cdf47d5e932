#pragma once

// Central finite differences against autograd on float64 tensors.
// Error measure: ||analytic - numeric|| / max(||analytic||, ||numeric||, kNormFloor) over the
// probed entries (entries of one tensor, or a random subset of them). With h = 1e-6 and O(1)
// losses the difference quotient carries ~1e-10 of rounding noise, so gradients below the
// floor are compared absolutely.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

inline constexpr double kNormFloor = 1e-6;

struct GradCheckResult {
    double rel_error = 0.0;
    double analytic_norm = 0.0;
    int64_t probed = 0;
};

/// `loss` must recompute from the current contents of `param`.
inline GradCheckResult gradcheck(const std::function<torch::Tensor()>& loss, torch::Tensor param, int64_t max_probes,
                                 uint64_t seed, double h = 1e-6) {
    if (param.grad().defined()) param.mutable_grad().zero_();
    auto l = loss();
    auto g = torch::autograd::grad({l}, {param}, {}, false, false, true)[0];
    if (!g.defined()) g = torch::zeros_like(param);
    g = g.contiguous().view(-1);
    const int64_t n = param.numel();
    std::vector<int64_t> idx(n);
    for (int64_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, max_probes));
    double diff2 = 0, a2 = 0, n2 = 0;
    torch::NoGradGuard guard;
    auto flat = param.view(-1);
    for (auto i : idx) {
        const double orig = flat[i].item<double>();
        flat[i].fill_(orig + h);
        const double up = loss().item<double>();
        flat[i].fill_(orig - h);
        const double down = loss().item<double>();
        flat[i].fill_(orig);
        const double numeric = (up - down) / (2 * h);
        const double analytic = g[i].item<double>();
        diff2 += (analytic - numeric) * (analytic - numeric);
        a2 += analytic * analytic;
        n2 += numeric * numeric;
    }
    GradCheckResult r;
    r.analytic_norm = std::sqrt(a2);
    r.probed = static_cast<int64_t>(idx.size());
    r.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), kNormFloor});
    return r;
}

}  // namespace oracle
