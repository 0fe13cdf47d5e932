#include "camoseg/edge_pathway.hpp"
#include "camoseg/errors.hpp"
#include "oracles/conv_oracle.hpp"
#include "oracles/gradcheck.hpp"
#include "unit/helpers.hpp"

#include <gtest/gtest.h>

using namespace camoseg;

namespace {

EemConfig eem(int64_t channels) {
    EemConfig c;
    c.channels = channels;
    return c;
}

std::vector<double> channel(const torch::Tensor& x, int64_t b, int64_t c) {
    auto t = x[b][c].to(torch::kFloat64).contiguous();
    return {t.data_ptr<double>(), t.data_ptr<double>() + t.numel()};
}

}  // namespace

TEST(EdgePathway, ConstantInputHasNoDirectionalResponse) {
    EdgeEnhancementModule m(eem(8));
    auto x = torch::full({1, 8, 12, 12}, 3.7);
    EXPECT_LT(m->gradient_path(x).abs().max().item<double>(), 1e-5);
    EXPECT_LT(m->discontinuity_path(x).abs().max().item<double>(), 1e-5);
}

TEST(EdgePathway, RampGivesSobelEightAndLaplacianZero) {
    EdgeEnhancementModule m(eem(4));
    auto ramp = torch::arange(10, torch::kFloat32).view({1, 1, 1, 10}).expand({1, 4, 10, 10}).contiguous();
    auto g = m->gradient_path(ramp);
    auto l = m->discontinuity_path(ramp);
    auto interior = [](const torch::Tensor& t) { return t.slice(-2, 1, -1).slice(-1, 1, -1); };
    // Even output channels carry Sobel-x.
    EXPECT_LT((interior(g.select(1, 0)) - 8.0).abs().max().item<double>(), 1e-5);
    EXPECT_LT((interior(g.select(1, 2)) - 8.0).abs().max().item<double>(), 1e-5);
    // Odd channels carry Sobel-y: zero on a horizontal ramp.
    EXPECT_LT(interior(g.select(1, 1)).abs().max().item<double>(), 1e-5);
    EXPECT_LT(interior(l).abs().max().item<double>(), 1e-5);
}

TEST(EdgePathway, FreshInitMatchesFixedFilterBank) {
    torch::manual_seed(5);
    EdgeEnhancementModule m(eem(6));
    for (int trial = 0; trial < 5; ++trial) {
        auto x = torch::randn({1, 6, 9, 11});
        auto g = m->gradient_path(x);
        auto l = m->discontinuity_path(x);
        for (int64_t c = 0; c < 6; ++c) {
            const auto in = channel(x, 0, c);
            const auto gx = oracle::correlate3x3_replicate(in, 9, 11, c % 2 == 0 ? oracle::kSobelX : oracle::kSobelY);
            const auto lx = oracle::correlate3x3_replicate(in, 9, 11, oracle::kLaplacian4);
            const auto got_g = channel(g, 0, c), got_l = channel(l, 0, c);
            for (size_t i = 0; i < in.size(); ++i) {
                ASSERT_NEAR(got_g[i], gx[i], 1e-5);
                ASSERT_NEAR(got_l[i], lx[i], 1e-5);
            }
        }
    }
}

TEST(EdgePathway, RandomInitBreaksSobelEquivalence) {
    torch::manual_seed(6);
    EdgeEnhancementModule m(eem(8));
    m->reset_directional_init(false, false);
    auto x = torch::randn({1, 8, 10, 10});
    double worst = 0;
    auto g = m->gradient_path(x);
    for (int64_t c = 0; c < 8; ++c) {
        const auto ref = oracle::correlate3x3_replicate(channel(x, 0, c), 10, 10, c % 2 ? oracle::kSobelY : oracle::kSobelX);
        const auto got = channel(g, 0, c);
        for (size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - got[i]));
    }
    EXPECT_GT(worst, 0.1);
}

TEST(EdgePathway, EemPreservesShape) {
    EdgeEnhancementModule m(eem(16));
    auto x = torch::randn({2, 16, 7, 7});
    EXPECT_EQ(m->forward(x).sizes(), x.sizes());
}

TEST(EdgePathway, EemConfigValidation) {
    auto c = eem(10);
    c.groups = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = eem(8);
    c.num_blocks = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EdgePathway, ReduceAndUpsampleDefaultPlan) {
    EdgePathwayConfig c;
    c.in_channels = 1024;
    c.stage_channels = 256;
    c.eem.channels = 256;
    c.eem.num_blocks = 1;
    EdgeRefinementPathway erp(c);
    auto f = torch::randn({1, 1024, 28, 28});
    auto out = erp->reduce_and_upsample({f, f});
    EXPECT_EQ(out[0].sizes(), (std::vector<int64_t>{1, 256, 56, 56}));
    EXPECT_EQ(out[1].sizes(), (std::vector<int64_t>{1, 256, 56, 56}));
}

TEST(EdgePathway, StageWiderThanInputIsConfigError) {
    EdgePathwayConfig c;
    c.in_channels = 64;
    c.stage_channels = 128;
    c.eem.channels = 128;
    EXPECT_THROW(EdgeRefinementPathway{c}, ConfigError);
}

TEST(EdgePathway, ZeroOffsetsReduceToBilinear) {
    EdgePathwayConfig c;
    c.in_channels = 16;
    c.stage_channels = 8;
    c.eem.channels = 8;
    c.image_size = 32;
    EdgeRefinementPathway erp(c);
    {
        torch::NoGradGuard g;
        for (auto* up : {&erp->up1, &erp->up2}) {
            (*up)->dysample->offset->weight.zero_();
            (*up)->dysample->offset->bias.zero_();
        }
    }
    auto a = torch::randn({1, 16, 4, 4}), b = torch::randn({1, 16, 4, 4});
    auto out = erp->reduce_and_upsample({a, b});
    auto ref = resize_bilinear(erp->reduce1->forward(a), 8, 8);
    EXPECT_LT(testutil::max_abs_diff(out[0], ref), 1e-5);
}

TEST(EdgePathway, BatchIndependence) {
    torch::manual_seed(8);
    EdgePathwayConfig c;
    c.in_channels = 16;
    c.stage_channels = 8;
    c.eem.channels = 8;
    c.image_size = 32;
    EdgeRefinementPathway erp(c);
    erp->eval();
    auto a = torch::randn({2, 16, 4, 4}), b = torch::randn({2, 16, 4, 4});
    auto both = erp->forward({a, b});
    auto first = erp->forward({a.slice(0, 0, 1), b.slice(0, 0, 1)});
    auto second = erp->forward({a.slice(0, 1, 2), b.slice(0, 1, 2)});
    EXPECT_LT(testutil::max_abs_diff(both.prediction.slice(0, 0, 1), first.prediction), 1e-5);
    EXPECT_LT(testutil::max_abs_diff(both.features.slice(0, 1, 2), second.features), 1e-5);
}

TEST(EdgePathway, HeadZeroInitAndResize) {
    EdgePathwayConfig c;
    c.in_channels = 16;
    c.stage_channels = 8;
    c.eem.channels = 8;
    c.image_size = 64;
    EdgeRefinementPathway erp(c);
    auto f = torch::randn({1, 16, 4, 4});
    auto out = erp->forward({f, f});
    EXPECT_EQ(out.prediction.sizes(), (std::vector<int64_t>{1, 1, 64, 64}));
    EXPECT_EQ(out.features.sizes(), (std::vector<int64_t>{1, 8, 16, 16}));
    EXPECT_GE(out.prediction.min().item<double>(), 0.0);
    EXPECT_LE(out.prediction.max().item<double>(), 1.0);
    erp->head->zero_init();
    out = erp->forward({f, f});
    EXPECT_LT((out.prediction - 0.5).abs().max().item<double>(), 1e-7);
}

TEST(EdgePathway, FiniteDifferenceGradientsFloat64) {
    torch::manual_seed(9);
    EdgePathwayConfig c;
    c.in_channels = 8;
    c.stage_channels = 8;
    c.eem.channels = 8;
    c.image_size = 32;
    EdgeRefinementPathway erp(c);
    erp->to(torch::kFloat64);
    auto a = torch::randn({1, 8, 8, 8}, torch::kFloat64), b = torch::randn({1, 8, 8, 8}, torch::kFloat64);
    auto target = torch::rand({1, 1, 32, 32}, torch::kFloat64);
    auto loss = [&] {
        auto out = erp->forward({a, b});
        return ((out.prediction - target).pow(2)).mean() + out.features.pow(2).mean();
    };
    for (const auto& p : erp->named_parameters()) {
        auto r = oracle::gradcheck(loss, p.value(), 6, 17);
        if (r.analytic_norm < 1e-10) continue;
        EXPECT_LT(r.rel_error, 1e-3) << p.key();
    }
}
