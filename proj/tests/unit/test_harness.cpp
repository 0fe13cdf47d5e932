#include "camoseg/checkpoint.hpp"
#include "camoseg/config.hpp"
#include "camoseg/errors.hpp"
#include "camoseg/evaluation.hpp"
#include "camoseg/trainer.hpp"
#include "unit/helpers.hpp"

#include "json.hpp"
#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include <cstdlib>
#include <fstream>

using namespace camoseg;
namespace fs = std::filesystem;

namespace {

RunConfig micro_run() {
    RunConfig cfg;
    cfg.model = testutil::micro_model();
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.val_fraction = 0.0;
    cfg.seed = 3;
    return cfg;
}

std::vector<SceneSample> scenes(int n, int size = 40) {
    GeneratorConfig g;
    g.size = size;
    std::vector<SceneSample> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(gen_scene(500 + i, g));
        out.back().meta.name = "s" + std::to_string(i);
    }
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Config, TextRoundTrip) {
    auto cfg = micro_run();
    cfg.set("decoder.channels", "32,16,8");
    cfg.set("backbone.selected_blocks", "0,2,3");
    cfg.set("ablation.no_erp", "true");
    cfg.set("optim.decoder_lr", "0.000123456789");
    cfg.set("schedule.monitor", "train_loss");
    const auto back = RunConfig::from_text(cfg.to_text());
    EXPECT_EQ(back.to_text(), cfg.to_text());
    EXPECT_EQ(back.optim.decoder_lr, 0.000123456789);
    EXPECT_EQ(back.model.decoder.channels, (std::array<int64_t, 3>{32, 16, 8}));
    EXPECT_TRUE(back.model.ablation.no_erp);
    for (const auto& k : cfg.keys()) EXPECT_EQ(back.get(k), cfg.get(k)) << k;

    const auto dir = testutil::temp_dir("config");
    cfg.save(dir / "run.txt");
    EXPECT_EQ(RunConfig::load(dir / "run.txt").to_text(), cfg.to_text());
    fs::remove_all(dir);
}

TEST(Config, RejectsBadInput) {
    RunConfig cfg;
    EXPECT_THROW(cfg.set("decoder.nonexistent", "1"), ConfigError);
    EXPECT_THROW(cfg.set("train.epochs", "many"), ConfigError);
    EXPECT_THROW(cfg.set("ablation.no_icg", "maybe"), ConfigError);
    EXPECT_THROW(RunConfig::from_text("train.epochs 5\n"), ConfigError);
    EXPECT_THROW(RunConfig::load("/nonexistent/run.txt"), ConfigError);
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, EffectiveLossFollowsAblations) {
    RunConfig cfg;
    EXPECT_EQ(cfg.effective_loss().w_edge, 1.0);
    cfg.model.ablation.no_erp = true;
    EXPECT_EQ(cfg.effective_loss().w_edge, 0.0);
    cfg.model.ablation.no_clp = true;
    EXPECT_EQ(cfg.effective_loss().loc_tversky_weight, 0.0);
    EXPECT_EQ(cfg.preprocess().size, cfg.model.backbone.image_size);
}

TEST(Config, OutputRootFromEnvironment) {
    ::unsetenv("CAMOSEG_OUTPUT_ROOT");
    EXPECT_EQ(output_root("fallback"), fs::path("fallback"));
    ::setenv("CAMOSEG_OUTPUT_ROOT", "/tmp/camoseg_out", 1);
    EXPECT_EQ(output_root("fallback"), fs::path("/tmp/camoseg_out"));
    ::unsetenv("CAMOSEG_OUTPUT_ROOT");
}

TEST(Ablation, NoClpImpliesNoIcgWithANote) {
    AblationToggles t = AblationToggles::parse("no_clp");
    const auto notes = t.normalize();
    EXPECT_TRUE(t.no_icg);
    ASSERT_EQ(notes.size(), 1u);
    EXPECT_NE(notes[0].find("no_icg"), std::string::npos);
    EXPECT_TRUE(t.normalize().empty());
    EXPECT_THROW(AblationToggles::parse("no_such_toggle"), ConfigError);
}

TEST(Schedule, HalvesAfterPatienceNonImprovingEpochs) {
    PlateauSchedule s(0.5, 10, 1e-6);
    double lr = 1e-4;
    const int k = 4;
    for (int e = 1; e <= k; ++e) {
        lr = s.step(10.0 - e, lr);
        EXPECT_TRUE(s.last_step_improved());
    }
    for (int e = k + 1; e <= k + 9; ++e) {
        lr = s.step(10.0 - k, lr);  // equal is not an improvement
        EXPECT_EQ(lr, 1e-4) << e;
    }
    lr = s.step(10.0 - k, lr);
    EXPECT_EQ(lr, 0.5e-4);  // epoch k + 10
    for (int e = 0; e < 200; ++e) lr = s.step(100.0, lr);
    EXPECT_EQ(lr, 1e-6);
    EXPECT_THROW(PlateauSchedule(1.5, 10, 0), ConfigError);
}

TEST(Training, GradientClippingCapsTheNorm) {
    Trainer t(micro_run());
    auto params = t.model->parameters();
    int64_t n = 0;
    for (auto& p : params) n += p.numel();
    const double per = 5.0 / std::sqrt(static_cast<double>(n));
    for (auto& p : params) p.mutable_grad() = torch::full_like(p, per);
    const double before = torch::nn::utils::clip_grad_norm_(params, t.config().optim.grad_clip);
    EXPECT_NEAR(before, 5.0, 1e-4);
    double after = 0;
    for (auto& p : params) after += p.grad().pow(2).sum().item<double>();
    EXPECT_NEAR(std::sqrt(after), 1.0, 1e-4);
}

TEST(Training, StepRecordsAndParameterGroups) {
    auto cfg = micro_run();
    Trainer t(cfg);
    EXPECT_EQ(t.optimizer->param_groups().size(), 2u);
    EXPECT_EQ(t.decoder_lr(), cfg.optim.decoder_lr);
    EXPECT_EQ(t.encoder_lr(), cfg.optim.encoder_lr);
    auto data = scenes(2);
    const auto batch = make_training_batch({&data[0], &data[1]}, cfg.preprocess());
    StepRecord rec;
    auto r = t.train_step(batch, &rec);
    EXPECT_EQ(rec.step, 1);
    EXPECT_TRUE(std::isfinite(rec.loss));
    EXPECT_GT(rec.grad_norm, 0.0);
    EXPECT_EQ(rec.loss, r.total_value);
}

TEST(Training, DeterministicAcrossRuns) {
    auto cfg = micro_run();
    cfg.epochs = 2;
    auto data = scenes(4);
    std::vector<double> a, b;
    {
        Trainer t(cfg);
        for (const auto& s : t.fit(data).steps) a.push_back(s.loss);
    }
    {
        Trainer t(cfg);
        for (const auto& s : t.fit(data).steps) b.push_back(s.loss);
    }
    ASSERT_EQ(a.size(), 4u);
    EXPECT_EQ(a, b);
}

TEST(Training, WritesLogsCheckpointsAndPlots) {
    auto cfg = micro_run();
    cfg.epochs = 2;
    cfg.val_fraction = 0.25;
    const auto dir = testutil::temp_dir("fit");
    Trainer t(cfg);
    auto res = t.fit(scenes(4), nullptr, {dir});
    EXPECT_EQ(res.epochs.size(), 2u);
    EXPECT_TRUE(res.epochs[0].val_loss.has_value());
    for (const char* f : {"config.txt", "train_log.jsonl", "epochs.jsonl", "best.ckpt", "last.ckpt", "loss_steps.png",
                          "loss_epochs.png"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    std::ifstream log(dir / "train_log.jsonl");
    int lines = 0;
    for (std::string l; std::getline(log, l); ++lines) {
        const auto j = nlohmann::json::parse(l);
        EXPECT_TRUE(j.contains("grad_norm"));
        EXPECT_TRUE(j.contains("decoder_lr"));
        EXPECT_TRUE(j.contains("terms"));
    }
    EXPECT_EQ(lines, static_cast<int>(res.steps.size()));
    fs::remove_all(dir);
}

TEST(Training, NonFiniteLossAbortsWithDump) {
    auto cfg = micro_run();
    const auto dir = testutil::temp_dir("nan");
    Trainer t(cfg);
    {
        torch::NoGradGuard g;
        for (auto& p : t.model->decoder_parameters()) p.fill_(std::numeric_limits<double>::quiet_NaN());
    }
    EXPECT_THROW(t.fit(scenes(2), nullptr, {dir}), TrainingError);
    ASSERT_TRUE(fs::exists(dir / "nan_dump.json"));
    const auto j = nlohmann::json::parse(std::ifstream(dir / "nan_dump.json"));
    EXPECT_EQ(j["batch"].size(), 2u);
    EXPECT_TRUE(j["batch"][0].contains("seed"));
    EXPECT_TRUE(j.contains("shuffle_seed"));
    fs::remove_all(dir);
}

TEST(Checkpoint, Float64RoundTripIsBitExact) {
    auto cfg = micro_run();
    Trainer t(cfg);
    t.model->to(torch::kFloat64);
    auto data = scenes(2);
    t.train_step(make_training_batch({&data[0], &data[1]}, cfg.preprocess()));
    const auto dir = testutil::temp_dir("ckpt");
    save_checkpoint(dir / "m.ckpt", t.model, cfg, t.optimizer.get(), 7, 0.25);
    auto loaded = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(loaded.epoch, 7);
    EXPECT_EQ(loaded.best_metric, 0.25);
    EXPECT_TRUE(loaded.has_optimizer);
    EXPECT_EQ(loaded.config.to_text(), cfg.to_text());
    const auto a = t.model->named_parameters(), b = loaded.model->named_parameters();
    ASSERT_EQ(a.size(), b.size());
    for (const auto& item : a) {
        ASSERT_EQ(b[item.key()].scalar_type(), torch::kFloat64);
        EXPECT_TRUE(torch::equal(item.value(), b[item.key()])) << item.key();
    }
    t.model->eval();
    loaded.model->eval();
    auto x = torch::randn({1, 3, 56, 56}, torch::kFloat64);
    torch::NoGradGuard g;
    EXPECT_TRUE(torch::equal(t.model->forward(x).predictions.final, loaded.model->forward(x).predictions.final));
    Trainer fresh(cfg);
    fresh.model->to(torch::kFloat64);
    EXPECT_TRUE(load_optimizer_state(dir / "m.ckpt", *fresh.optimizer));
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), InputError);
    fs::remove_all(dir);
}

TEST(Evaluation, GroundTruthAsPredictionIsPerfect) {
    const auto dir = testutil::temp_dir("evaldirs");
    GeneratorConfig g;
    g.size = 48;
    write_dataset(dir / "data", 3, 7, g);
    std::vector<std::string> warnings;
    const auto rep = evaluate_directories(dir / "data" / "GT", dir / "data" / "GT", metrics::EPhiMode::Mean, true, &warnings);
    EXPECT_EQ(rep.count, 3u);
    EXPECT_EQ(rep.mean.s_alpha, 1.0);
    EXPECT_EQ(rep.mean.e_phi, 1.0);
    EXPECT_EQ(rep.mean.f_weighted, 1.0);
    EXPECT_EQ(rep.mean.f_mean, 1.0);
    EXPECT_EQ(rep.mean.mae, 0.0);
    write_reports(rep, dir / "report");
    for (const char* f : {"metrics.csv", "metrics.json", "metrics.png"}) EXPECT_TRUE(fs::exists(dir / "report" / f));
    fs::create_directories(dir / "empty");
    EXPECT_THROW(evaluate_directories(dir / "empty", dir / "data" / "GT"), InputError);
    fs::remove_all(dir);
}

TEST(Evaluation, ModelEvaluationScoresAtOriginalSize) {
    auto cfg = micro_run();
    Segmenter model(cfg.model);
    auto data = scenes(3, 40);
    auto rep = evaluate_model(model, data, cfg.preprocess());
    EXPECT_EQ(rep.count, 3u);
    EXPECT_EQ(rep.rows[0].first, "s0");
    double s = 0;
    for (const auto& [name, m] : rep.rows) s += m.mae;
    EXPECT_NEAR(rep.mean.mae, s / 3, 1e-12);
    EXPECT_THROW(evaluate_model(model, {}, cfg.preprocess()), InputError);
}

TEST(Evaluation, RegionFalsePositiveRate) {
    cv::Mat prob(10, 10, CV_32F, cv::Scalar(0.0f)), mask = cv::Mat::zeros(10, 10, CV_8U);
    prob(cv::Rect(0, 0, 4, 4)).setTo(0.9f);
    mask(cv::Rect(0, 0, 2, 4)).setTo(1);
    // Box 4x4 minus 8 mask pixels leaves 8 candidates, all above threshold.
    EXPECT_DOUBLE_EQ(region_false_positive_rate(prob, mask, cv::Rect(0, 0, 4, 4)), 1.0);
    EXPECT_DOUBLE_EQ(region_false_positive_rate(prob, mask, cv::Rect(0, 0, 8, 4)), 8.0 / 24.0);
}

TEST(Prediction, WritesOriginalSizeAndIsIdempotent) {
    auto cfg = micro_run();
    Segmenter model(cfg.model);
    const auto dir = testutil::temp_dir("predict");
    cv::Mat img(480, 640, CV_8UC3);
    cv::randu(img, cv::Scalar::all(0), cv::Scalar::all(255));
    cv::imwrite((dir / "photo.jpg").string(), img);
    PredictOptions opts;
    opts.emit_intermediate = true;
    const auto files = predict_files(model, list_images(dir), dir / "out", cfg.preprocess(), opts);
    ASSERT_EQ(files.size(), 3u);
    for (const char* f : {"photo.png", "photo_edge.png", "photo_loc.png"}) {
        const cv::Mat m = cv::imread((dir / "out" / f).string(), cv::IMREAD_UNCHANGED);
        ASSERT_FALSE(m.empty()) << f;
        EXPECT_EQ(m.size(), cv::Size(640, 480)) << f;
        EXPECT_EQ(m.channels(), 1) << f;
    }
    const auto first = slurp(dir / "out" / "photo.png");
    predict_files(model, list_images(dir), dir / "out", cfg.preprocess(), opts);
    EXPECT_EQ(slurp(dir / "out" / "photo.png"), first);
    EXPECT_EQ(predict_files(model, list_images(dir), dir / "plain", cfg.preprocess()).size(), 1u);
    fs::remove_all(dir);
}
