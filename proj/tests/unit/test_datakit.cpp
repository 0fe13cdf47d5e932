#include "camoseg/datakit.hpp"
#include "camoseg/errors.hpp"
#include "unit/helpers.hpp"

#include "json.hpp"
#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include <fstream>

using namespace camoseg;
namespace fs = std::filesystem;

namespace {

bool same(const cv::Mat& a, const cv::Mat& b) {
    return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0;
}

cv::Mat square_mask(int size, int x0, int side) {
    cv::Mat m = cv::Mat::zeros(size, size, CV_8U);
    m(cv::Rect(x0, x0, side, side)).setTo(1);
    return m;
}

}  // namespace

TEST(Preprocess, NormalisationExamples) {
    PreprocessConfig cfg;
    cfg.size = 8;
    cv::Mat img(8, 8, CV_32FC3, cv::Scalar(0.485, 1.0, 0.0));
    auto t = preprocess(img, cfg);
    ASSERT_EQ(t.sizes(), (std::vector<int64_t>{3, 8, 8}));
    EXPECT_NEAR(t[0].abs().max().item<double>(), 0.0, 1e-6);
    EXPECT_NEAR(t[1][3][3].item<double>(), (1.0 - 0.456) / 0.224, 1e-5);
    EXPECT_NEAR(t[1][3][3].item<double>(), 2.4286, 1e-4);
}

TEST(Preprocess, ResizesAndRemembersOriginalSize) {
    PreprocessConfig cfg;
    cv::Mat img(500, 700, CV_32FC3, cv::Scalar(0.2, 0.3, 0.4));
    auto b = make_image_batch({img}, cfg);
    EXPECT_EQ(b.images.sizes(), (std::vector<int64_t>{1, 3, 392, 392}));
    ASSERT_EQ(b.original_sizes.size(), 1u);
    EXPECT_EQ(b.original_sizes[0], cv::Size(700, 500));
    EXPECT_THROW(make_image_batch({}, cfg), InputError);
}

TEST(Preprocess, DenormalizeInvertsNormalisation) {
    PreprocessConfig cfg;
    cfg.size = 32;
    cv::Mat img(32, 32, CV_32FC3);
    cv::randu(img, cv::Scalar::all(0.0), cv::Scalar::all(1.0));
    cv::Mat back = denormalize(preprocess(img, cfg), cfg);
    EXPECT_LT(cv::norm(back, img, cv::NORM_INF), 1e-6);
}

TEST(Preprocess, ConfigValidation) {
    PreprocessConfig cfg;
    cfg.std[1] = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = PreprocessConfig{};
    cfg.size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EdgeTargets, EmptyAndFullMasksHaveNoEdges) {
    EXPECT_EQ(cv::countNonZero(make_edge_targets(cv::Mat::zeros(40, 40, CV_8U))), 0);
    EXPECT_EQ(cv::countNonZero(make_edge_targets(cv::Mat::ones(40, 40, CV_8U))), 0);
}

TEST(EdgeTargets, SquareGivesFivePixelBand) {
    const auto e = make_edge_targets(square_mask(100, 30, 40));
    const int n = cv::countNonZero(e);
    EXPECT_GT(n, 720);
    EXPECT_LT(n, 880);
    double mn, mx;
    cv::minMaxLoc(e, &mn, &mx);
    EXPECT_EQ(mx, 1.0);
}

TEST(EdgeTargets, PolarityInvariantAndNearTheBoundary) {
    auto scene = gen_scene(5, GeneratorConfig{});
    cv::Mat inv = 1 - scene.mask;
    const auto e = make_edge_targets(scene.mask);
    EXPECT_TRUE(same(e, make_edge_targets(inv)));
    EXPECT_TRUE(same(e, scene.edge));
    // Every band pixel lies within 4 px of a pixel whose 4-neighbourhood crosses the mask boundary.
    cv::Mat grown, shrunk, boundary;
    const auto cross = cv::getStructuringElement(cv::MORPH_CROSS, {3, 3});
    cv::dilate(scene.mask, grown, cross);
    cv::erode(scene.mask, shrunk, cross, {-1, -1}, 1, cv::BORDER_REPLICATE);
    boundary = grown - shrunk;
    cv::Mat near;
    cv::dilate(boundary, near, cv::getStructuringElement(cv::MORPH_ELLIPSE, {9, 9}));
    EXPECT_EQ(cv::countNonZero(e & (near == 0)), 0);
    EXPECT_GT(cv::countNonZero(e), 0);
}

TEST(Generator, DeterministicPerSeed) {
    GeneratorConfig cfg;
    cfg.scod = true;
    const auto a = gen_scene(42, cfg), b = gen_scene(42, cfg), c = gen_scene(43, cfg);
    EXPECT_TRUE(same(a.image, b.image));
    EXPECT_TRUE(same(a.mask, b.mask));
    EXPECT_EQ(a.meta.distractor, b.meta.distractor);
    EXPECT_FALSE(same(a.image, c.image));
    EXPECT_EQ(a.image.type(), CV_32FC3);
    EXPECT_EQ(a.mask.type(), CV_8U);
}

TEST(Generator, ForegroundRatioWithinBounds) {
    GeneratorConfig cfg;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto s = gen_scene(seed, cfg);
        const double r = cv::countNonZero(s.mask) / static_cast<double>(s.mask.total());
        ASSERT_GE(r, cfg.fg_min) << seed;
        ASSERT_LE(r, cfg.fg_max) << seed;
        ASSERT_DOUBLE_EQ(r, s.meta.foreground_ratio);
    }
}

namespace {

double inside_minus_outside(const SceneSample& s) {
    cv::Mat gray;
    cv::cvtColor(s.image, gray, cv::COLOR_RGB2GRAY);
    return cv::mean(gray, s.mask)[0] - cv::mean(gray, s.mask == 0)[0];
}

}  // namespace

TEST(Generator, DeltaControlsTargetContrast) {
    GeneratorConfig flat, offset;
    flat.delta = 0.0;
    double d0 = 0, d1 = 0;
    const int n = 40;
    for (int seed = 0; seed < n; ++seed) {
        d0 += inside_minus_outside(gen_scene(seed, flat));
        d1 += inside_minus_outside(gen_scene(seed, offset));
    }
    d0 /= n, d1 /= n;
    EXPECT_LT(std::abs(d0), 0.03);  // no intensity cue at delta 0
    EXPECT_NEAR(d1, offset.delta, 0.04);
}

TEST(Generator, DistractorIsSalientAndNotInTheMask) {
    GeneratorConfig cfg;
    cfg.scod = true;
    for (int seed = 0; seed < 20; ++seed) {
        const auto s = gen_scene(seed, cfg);
        ASSERT_TRUE(s.meta.distractor.has_value());
        const auto box = *s.meta.distractor;
        EXPECT_TRUE((box & cv::Rect(0, 0, cfg.size, cfg.size)) == box);
        cv::Mat gray;
        cv::cvtColor(s.image, gray, cv::COLOR_RGB2GRAY);
        const double bg = cv::mean(gray, s.mask == 0)[0];
        cv::Mat roi_gray = gray(box), roi_mask = s.mask(box);
        cv::Mat far = cv::abs(roi_gray - bg) > 0.3;
        // Distractor pixels stand out from the background and never belong to the target.
        EXPECT_GT(cv::countNonZero(far), 0);
        EXPECT_EQ(cv::countNonZero(far & (roi_mask > 0)), 0);
    }
    EXPECT_FALSE(gen_scene(0, GeneratorConfig{}).meta.distractor.has_value());
}

TEST(Generator, InfeasibleConfigurations) {
    GeneratorConfig cfg;
    cfg.fg_min = 0.3;
    cfg.fg_max = 0.2;
    EXPECT_THROW(cfg.validate(), GenerationError);
    cfg = GeneratorConfig{};
    cfg.size = 8;
    cfg.fg_min = 0.001;
    cfg.fg_max = 0.005;  // less than one pixel on an 8x8 grid
    EXPECT_THROW(gen_scene(1, cfg), GenerationError);
    cfg = GeneratorConfig{};
    cfg.scod = true;
    cfg.min_separation = 2.0;
    EXPECT_THROW(gen_scene(1, cfg), GenerationError);
}

TEST(Generator, ConfigJsonRoundTrip) {
    GeneratorConfig cfg;
    cfg.scod = true;
    cfg.delta = 0.07;
    cfg.octaves = 3;
    const auto back = GeneratorConfig::from_json(cfg.to_json());
    EXPECT_EQ(back.to_json(), cfg.to_json());
}

TEST(Dataset, WriteAndLoad) {
    const auto root = testutil::temp_dir("dataset");
    GeneratorConfig cfg;
    cfg.size = 48;
    cfg.scod = true;
    write_dataset(root, 3, 100, cfg);
    auto r = load_dataset(root);
    ASSERT_EQ(r.samples.size(), 3u);
    EXPECT_TRUE(r.warnings.empty());
    for (int i = 0; i < 3; ++i) {
        const auto ref = gen_scene(100 + i, cfg);
        const auto& s = r.samples[i];
        EXPECT_TRUE(same(s.mask, ref.mask));
        EXPECT_TRUE(same(s.edge, ref.edge));
        EXPECT_EQ(s.meta.seed, 100u + i);
        EXPECT_EQ(s.meta.distractor, ref.meta.distractor);
        EXPECT_LE(cv::norm(s.image, ref.image, cv::NORM_INF), 0.5 / 255 + 1e-6);
    }
    const auto j = nlohmann::json::parse(std::ifstream(root / "manifest.json"));
    EXPECT_EQ(j["count"], 3);
    EXPECT_EQ(j["samples"].size(), 3u);

    // Edge/ acts as a cache: its content wins over regeneration.
    const auto first = r.samples[0].meta.name;
    write_binary(root / "Edge" / (first + ".png"), cv::Mat::zeros(48, 48, CV_8U));
    EXPECT_EQ(cv::countNonZero(load_dataset(root).samples[0].edge), 0);
    fs::remove_all(root / "Edge");
    EXPECT_TRUE(same(load_dataset(root).samples[0].edge, make_edge_targets(r.samples[0].mask)));

    fs::remove(root / "GT" / (r.samples[1].meta.name + ".png"));
    auto partial = load_dataset(root);
    EXPECT_EQ(partial.samples.size(), 2u);
    ASSERT_EQ(partial.warnings.size(), 1u);
    EXPECT_NE(partial.warnings[0].find(r.samples[1].meta.name), std::string::npos);
    fs::remove_all(root);
}

TEST(Dataset, MissingDirectoriesAreInputErrors) {
    const auto root = testutil::temp_dir("empty_dataset");
    EXPECT_THROW(load_dataset(root), InputError);
    EXPECT_THROW(read_rgb(root / "nope.png"), InputError);
    fs::remove_all(root);
}

TEST(Dataset, TrainingBatchShapes) {
    GeneratorConfig cfg;
    cfg.size = 40;
    const auto a = gen_scene(1, cfg), b = gen_scene(2, cfg);
    PreprocessConfig pre;
    pre.size = 56;
    const auto batch = make_training_batch({&a, &b}, pre);
    EXPECT_EQ(batch.images.sizes(), (std::vector<int64_t>{2, 3, 56, 56}));
    EXPECT_EQ(batch.mask.sizes(), (std::vector<int64_t>{2, 1, 56, 56}));
    EXPECT_EQ(batch.edge.sizes(), (std::vector<int64_t>{2, 1, 56, 56}));
    const auto u = std::get<0>(at::_unique(batch.mask));
    EXPECT_LE(u.numel(), 2);
    EXPECT_GE(u.min().item<double>(), 0.0);
    EXPECT_LE(u.max().item<double>(), 1.0);
}
