#include "camoseg/errors.hpp"
#include "camoseg/losses.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/loss_oracle.hpp"
#include "unit/helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace camoseg;

namespace {

torch::Tensor map(std::initializer_list<double> v, int64_t h, int64_t w) {
    return torch::tensor(std::vector<double>(v), torch::kFloat64).view({1, 1, h, w});
}

std::vector<double> flat(const torch::Tensor& t) {
    auto c = t.to(torch::kFloat64).contiguous();
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

torch::Tensor random_mask(int64_t b, int64_t h, int64_t w, double p) {
    return (torch::rand({b, 1, h, w}, torch::kFloat64) < p).to(torch::kFloat64);
}

}  // namespace

TEST(Losses, FocalSinglePixel) {
    auto v = focal(map({0.5}, 1, 1), map({1.0}, 1, 1), 0.25, 3.0).item<double>();
    EXPECT_NEAR(v, 0.25 * 0.125 * std::log(2.0), 1e-9);
    EXPECT_NEAR(v, 0.021661, 1e-6);
}

TEST(Losses, FocalPerfectPredictionIsTiny) {
    auto y = random_mask(2, 6, 6, 0.5);
    auto p = y * (1 - 1e-6) + (1 - y) * 1e-6;
    EXPECT_LT(focal(p, y, 0.25, 3.0).item<double>(), 1e-4);
}

TEST(Losses, FocalReducesToHalfBce) {
    torch::manual_seed(1);
    for (int i = 0; i < 20; ++i) {
        auto p = torch::rand({2, 1, 5, 5}, torch::kFloat64);
        auto y = random_mask(2, 5, 5, 0.4);
        EXPECT_NEAR(focal(p, y, 0.5, 0.0).item<double>(), 0.5 * camoseg::binary_cross_entropy(p, y).item<double>(), 1e-9);
    }
}

TEST(Losses, FocalMatchesOracleWithWeights) {
    torch::manual_seed(2);
    auto p = torch::rand({1, 1, 6, 6}, torch::kFloat64);
    auto y = random_mask(1, 6, 6, 0.3);
    auto w = torch::rand({1, 1, 6, 6}, torch::kFloat64) * 4 + 1;
    const auto wf = flat(w);
    EXPECT_NEAR(focal(p, y, 0.25, 3.0, w).item<double>(), oracle::focal(flat(p), flat(y), 0.25, 3.0, &wf), 1e-12);
}

TEST(Losses, TverskyExamples) {
    auto p = map({1, 1, 0, 0}, 1, 4), y = map({1, 0, 1, 0}, 1, 4);
    EXPECT_NEAR(tversky(p, y, 0.6, 0.4, 0.0).item<double>(), 0.5, 1e-12);
    auto m = random_mask(1, 6, 6, 0.5);
    EXPECT_NEAR(tversky(m, m, 0.6, 0.4).item<double>(), 0.0, 1e-12);
}

TEST(Losses, TverskyHalfHalfEqualsDice) {
    torch::manual_seed(3);
    for (int i = 0; i < 50; ++i) {
        auto p = torch::rand({3, 1, 7, 7}, torch::kFloat64);
        auto y = random_mask(3, 7, 7, 0.3);
        const double s = 0.5 + i % 3;
        // Doubling numerator and denominator of the Tversky index gives Dice with smoothing 2s.
        EXPECT_NEAR(tversky(p, y, 0.5, 0.5, s).item<double>(), soft_dice(p, y, 2 * s).item<double>(), 1e-9);
        EXPECT_NEAR(soft_dice(p, y, 2 * s).item<double>(),
                    (soft_dice_per_sample(p, y, 2 * s)).mean().item<double>(), 1e-12);
    }
}

TEST(Losses, TotalVariationExamples) {
    auto y = torch::zeros({1, 1, 6, 6}, torch::kFloat64);
    EXPECT_EQ(tv_background(torch::full({1, 1, 6, 6}, 0.3, torch::kFloat64), y).item<double>(), 0.0);
    auto checker = (torch::arange(6).view({6, 1}) + torch::arange(6).view({1, 6})).remainder(2).to(torch::kFloat64).view({1, 1, 6, 6});
    EXPECT_NEAR(tv_background(checker, y).item<double>(), 1.0, 1e-12);
    EXPECT_EQ(tv_background(checker, torch::ones({1, 1, 6, 6}, torch::kFloat64)).item<double>(), 0.0);
}

TEST(Losses, TotalVariationMatchesOracle) {
    torch::manual_seed(4);
    for (int i = 0; i < 10; ++i) {
        auto p = torch::rand({1, 1, 9, 9}, torch::kFloat64);
        auto domain = random_mask(1, 9, 9, 0.7);
        EXPECT_NEAR(tv_per_sample(p, domain)[0].item<double>(), oracle::tv(flat(p), flat(domain), 9, 9), 1e-12);
    }
}

TEST(Losses, DistanceTransformMatchesBruteForce) {
    torch::manual_seed(5);
    auto y = random_mask(1, 12, 10, 0.05);
    y[0][0][3][4] = 1.0;
    auto d = distance_to_foreground(y);
    const auto ref = oracle::distance_to_set(flat(y), 12, 10);
    const auto got = flat(d);
    for (size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-4);
    EXPECT_TRUE(std::isinf(flat(distance_to_foreground(torch::zeros({1, 1, 3, 3}, torch::kFloat64)))[0]));
}

TEST(Losses, EdgeBandWeights) {
    auto e = torch::zeros({1, 1, 1, 20}, torch::kFloat64);
    e[0][0][0][0] = 1.0;
    auto w = edge_band_weights(e, 5.0, 5.0);
    EXPECT_EQ(w[0][0][0][3].item<double>(), 5.0);
    EXPECT_EQ(w[0][0][0][5].item<double>(), 5.0);  // ties at the cutoff are inside
    EXPECT_EQ(w[0][0][0][7].item<double>(), 1.0);
}

TEST(Losses, EdgeLossPerfectPredictionAndConstantTv) {
    LossConfig cfg;
    auto e = torch::zeros({1, 1, 24, 24}, torch::kFloat64);
    e.slice(2, 10, 13).fill_(1.0);
    auto t = make_loss_targets(torch::zeros_like(e), e, cfg);
    EXPECT_LT(edge_loss_per_sample(e, t, cfg)[0].item<double>(), 1e-3);
    EXPECT_EQ(tv_per_sample(torch::full_like(e, 0.2), t.tv_domain)[0].item<double>(), 0.0);
}

TEST(Losses, EdgeDiceExamples) {
    auto mask = torch::zeros({1, 1, 8, 8}, torch::kFloat64);
    mask.slice(2, 2, 6).slice(3, 2, 6).fill_(1.0);
    auto edge = torch::zeros_like(mask);
    edge.slice(2, 2, 6).slice(3, 2, 3).fill_(1.0);  // 4 edge pixels inside the mask
    edge.slice(2, 2, 6).slice(3, 1, 2).fill_(1.0);  // 4 edge pixels outside
    EXPECT_NEAR(edge_dice_per_sample(mask, mask, edge)[0].item<double>(), 0.0, 1e-12);
    EXPECT_EQ(edge_dice_per_sample(mask, mask, torch::zeros_like(edge))[0].item<double>(), 0.0);
    // Predict 1 on half of the GT-positive edge pixels: Dice = 2(k/2) / (k/2 + k) = 2/3.
    auto p = torch::zeros_like(mask);
    p[0][0][2][2] = 1.0;
    p[0][0][3][2] = 1.0;
    EXPECT_NEAR(edge_dice_per_sample(p, mask, edge, 0.0)[0].item<double>(), 1.0 / 3.0, 1e-12);
}

TEST(Losses, InstanceWeights) {
    EXPECT_DOUBLE_EQ(instance_weight(0.01, 3.0, 0.02, 0.8), 3.0);
    EXPECT_DOUBLE_EQ(instance_weight(0.8, 3.0, 0.02, 0.8), 1.0);
    EXPECT_NEAR(instance_weight(0.41, 3.0, 0.02, 0.8), 2.0, 1e-12);
    for (double r = 0; r <= 1.0; r += 0.01)
        EXPECT_NEAR(instance_weight(r, 3.0, 0.02, 0.8), oracle::instance_weight(r), 1e-12);
}

TEST(Losses, ConfigValidation) {
    LossConfig c;
    EXPECT_NO_THROW(c.validate());
    c.tversky_loc_alpha = 0.7;
    EXPECT_THROW(c.validate(), ConfigError);
    c = LossConfig{};
    c.instance_lo = 0.9;
    EXPECT_THROW(c.validate(), ConfigError);
    c = LossConfig{};
    c.w_edge = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}

namespace {

PredictionTriplet random_triplet(int64_t b, int64_t h, int64_t w) {
    return {torch::rand({b, 1, h, w}, torch::kFloat64), torch::rand({b, 1, h, w}, torch::kFloat64),
            torch::rand({b, 1, h, w}, torch::kFloat64)};
}

}  // namespace

TEST(Losses, PerfectTripletGivesZeroTotal) {
    LossConfig cfg;
    auto mask = torch::zeros({2, 1, 16, 16}, torch::kFloat64);
    mask.slice(2, 4, 10).slice(3, 4, 10).fill_(1.0);
    auto edge = torch::zeros_like(mask);
    edge.slice(2, 3, 11).slice(3, 3, 11).fill_(1.0);
    edge.slice(2, 5, 9).slice(3, 5, 9).fill_(0.0);
    auto t = make_loss_targets(mask, edge, cfg);
    auto r = total_loss({edge, mask, mask}, t, cfg);
    EXPECT_LT(r.total_value, 1e-3);
}

TEST(Losses, DecompositionIdentityAndLinearity) {
    torch::manual_seed(6);
    LossConfig cfg;
    auto mask = random_mask(3, 12, 12, 0.3);
    auto edge = random_mask(3, 12, 12, 0.1);
    auto t = make_loss_targets(mask, edge, cfg);
    auto pred = random_triplet(3, 12, 12);
    auto r = total_loss(pred, t, cfg);
    EXPECT_NEAR(r.total_value, 1.2 * r.final + 1.15 * r.loc + 1.0 * r.edge, 1e-6);
    EXPECT_NEAR(1.0 + 1.15 + 1.2, 3.35, 1e-12);
    auto doubled = cfg;
    doubled.w_final *= 2;
    auto r2 = total_loss(pred, t, doubled);
    EXPECT_NEAR(r2.total_value - r.total_value, 1.2 * r.final, 1e-9);
    EXPECT_DOUBLE_EQ(r2.loc, r.loc);
    EXPECT_DOUBLE_EQ(r2.edge, r.edge);
}

TEST(Losses, HeadLossesMatchPixelOracle) {
    torch::manual_seed(7);
    LossConfig cfg;
    const int64_t B = 2, H = 10, W = 10;
    auto mask = random_mask(B, H, W, 0.2);
    auto edge = random_mask(B, H, W, 0.15);
    auto t = make_loss_targets(mask, edge, cfg);
    auto pred = random_triplet(B, H, W);
    auto r = total_loss(pred, t, cfg);
    double l_edge = 0, l_loc = 0, l_final = 0;
    for (int64_t b = 0; b < B; ++b) {
        const auto m = flat(mask[b]), e = flat(edge[b]);
        const auto pe = flat(pred.edge[b]), pl = flat(pred.loc[b]), pf = flat(pred.final[b]);
        const auto dist = oracle::distance_to_set(e, H, W);
        std::vector<double> band(dist.size()), domain(dist.size());
        for (size_t i = 0; i < dist.size(); ++i) {
            band[i] = dist[i] <= 5.0 ? 5.0 : 1.0;
            domain[i] = dist[i] > 5.0 ? 1.0 : 0.0;
        }
        l_edge += oracle::focal(pe, e, 0.25, 3.0, &band) + 0.15 * oracle::tv(pe, domain, H, W);
        double ratio = 0;
        for (double v : m) ratio += v;
        const double w = oracle::instance_weight(ratio / m.size());
        l_loc += w * (oracle::focal(pl, m, 0.25, 3.0) + oracle::tversky(pl, m, 0.6, 0.4, 1.0));
        std::vector<double> pe_edge, m_edge;
        for (size_t i = 0; i < e.size(); ++i)
            if (e[i] > 0.5) pe_edge.push_back(pf[i]), m_edge.push_back(m[i]);
        const double dice = pe_edge.empty() ? 0.0 : oracle::dice(pe_edge, m_edge, 1.0);
        l_final += w * (oracle::focal(pf, m, 0.25, 3.0) + oracle::tversky(pf, m, 0.4, 0.6, 1.0) + 0.2 * dice);
    }
    EXPECT_NEAR(r.edge, l_edge / B, 1e-9);
    EXPECT_NEAR(r.loc, l_loc / B, 1e-9);
    EXPECT_NEAR(r.final, l_final / B, 1e-9);
}

TEST(Losses, SubLossGradientsMatchFiniteDifferences) {
    torch::manual_seed(8);
    auto y = random_mask(1, 6, 6, 0.4);
    auto e = random_mask(1, 6, 6, 0.3);
    auto w = torch::rand({1, 1, 6, 6}, torch::kFloat64) + 0.5;
    auto domain = random_mask(1, 6, 6, 0.7);
    auto p = (torch::rand({1, 1, 6, 6}, torch::kFloat64) * 0.9 + 0.05).requires_grad_(true);
    std::vector<std::pair<std::string, std::function<torch::Tensor()>>> cases = {
        {"focal", [&] { return focal(p, y, 0.25, 3.0, w); }},
        {"tversky", [&] { return tversky(p, y, 0.6, 0.4); }},
        {"tv", [&] { return tv_per_sample(p, domain).mean(); }},
        {"edge_dice", [&] { return edge_dice_per_sample(p, y, e).mean(); }},
        {"dice", [&] { return soft_dice(p, y); }},
    };
    for (const auto& [name, fn] : cases) {
        auto r = oracle::gradcheck(fn, p, 36, 1);
        EXPECT_LT(r.rel_error, 1e-4) << name;
        EXPECT_GT(r.analytic_norm, 0.0) << name;
    }
}
