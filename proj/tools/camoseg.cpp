// camoseg command-line front end: train, eval, predict, gen-synth, make-edges, ablate.

#include "camoseg/checkpoint.hpp"
#include "camoseg/config.hpp"
#include "camoseg/datakit.hpp"
#include "camoseg/errors.hpp"
#include "camoseg/evaluation.hpp"
#include "camoseg/plots.hpp"
#include "camoseg/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>

using namespace camoseg;
namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
    std::string file;
    std::vector<std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", file, "run config file (key = value lines)")->check(CLI::ExistingFile);
        app->add_option("-s,--set", overrides, "override one config key, e.g. --set train.epochs=5")->take_all();
    }

    RunConfig resolve() const {
        RunConfig cfg = file.empty() ? RunConfig{} : RunConfig::load(file);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return cfg;
    }
};

struct EncoderArgs {
    std::string torchscript;
    int64_t channels = 0;

    void attach(CLI::App* app) {
        app->add_option("--encoder", torchscript, "TorchScript feature encoder returning four B x C x S x S maps")
            ->check(CLI::ExistingFile);
        app->add_option("--encoder-channels", channels, "channel count of the external encoder features");
    }

    std::shared_ptr<FeatureEncoder> build(const BackboneConfig& b) const {
        if (torchscript.empty()) return nullptr;
        if (channels <= 0) throw ConfigError("--encoder needs --encoder-channels");
        return load_torchscript_encoder(torchscript, b, channels);
    }
};

fs::path out_dir(const std::string& given, const std::string& sub) {
    return given.empty() ? output_root() / sub : fs::path(given);
}

LoadResult load_reporting(const fs::path& root) {
    auto r = load_dataset(root);
    for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    if (r.samples.empty()) throw InputError("no image/mask pairs under " + root.string());
    return r;
}

void print_summary(const metrics::MetricReport& r) {
    std::printf("%zu images  S_alpha %.4f  E_phi(%s) %.4f  F_weighted %.4f  F_mean %.4f  MAE %.4f\n", r.count,
                r.mean.s_alpha, metrics::to_string(r.ephi), r.mean.e_phi, r.mean.f_weighted, r.mean.f_mean, r.mean.mae);
}

// ---- train ----

struct TrainCmd {
    ConfigArgs config;
    EncoderArgs encoder;
    std::string data, val, out;
    bool no_plots = false;

    void attach(CLI::App* app) {
        config.attach(app);
        encoder.attach(app);
        app->add_option("-d,--data", data, "training dataset root (Image/, GT/, optional Edge/)")->required();
        app->add_option("--val", val, "separate validation dataset root (default: held-out split)");
        app->add_option("-o,--out", out, "run directory");
        app->add_flag("--no-plots", no_plots, "skip loss curve images");
    }

    int run() const {
        auto cfg = config.resolve();
        const auto dir = out_dir(out, "train");
        const auto train = load_reporting(data);
        std::optional<LoadResult> validation;
        if (!val.empty()) validation = load_reporting(val);
        Trainer trainer(cfg, encoder.build(cfg.model.backbone));
        TrainOptions opts;
        opts.out_dir = dir;
        opts.plots = !no_plots;
        opts.on_step = [](const StepRecord& s) {
            if (s.step % 10 == 0) std::printf("step %lld  epoch %d  loss %.5f  grad %.3f  lr %.2e\n",
                                              static_cast<long long>(s.step), s.epoch, s.loss, s.grad_norm, s.decoder_lr);
        };
        const auto res = trainer.fit(train.samples, validation ? &validation->samples : nullptr, opts);
        for (const auto& e : res.epochs)
            std::printf("epoch %d  train %.5f%s  lr %.2e%s\n", e.epoch, e.train_loss,
                        e.val_loss ? (std::string("  val ") + std::to_string(*e.val_loss)).c_str() : "", e.decoder_lr,
                        e.improved ? "  *" : "");
        std::printf("run written to %s\n", dir.c_str());
        return 0;
    }
};

// ---- eval ----

struct EvalCmd {
    EncoderArgs encoder;
    std::string checkpoint, data, pred, gt, out, ephi = "mean";
    bool no_figure = false, raw = false;

    void attach(CLI::App* app) {
        encoder.attach(app);
        app->add_option("-k,--checkpoint", checkpoint, "model checkpoint")->check(CLI::ExistingFile);
        app->add_option("-d,--data", data, "dataset root to run the model on");
        app->add_option("--pred", pred, "directory of saved prediction maps (instead of a checkpoint)");
        app->add_option("--gt", gt, "ground-truth mask directory for --pred");
        app->add_option("-o,--out", out, "report directory");
        app->add_option("--ephi", ephi, "E-measure variant reported as E_phi")
            ->check(CLI::IsMember({"mean", "adaptive", "max"}));
        app->add_flag("--no-figure", no_figure, "skip the metric bar chart");
        app->add_flag("--no-minmax", raw, "score saved maps without per-image min-max rescaling");
    }

    int run() const {
        const auto mode = metrics::parse_ephi_mode(ephi);
        const auto dir = out_dir(out, "eval");
        metrics::MetricReport report;
        if (!pred.empty()) {
            if (gt.empty()) throw ConfigError("--pred needs --gt");
            std::vector<std::string> warnings;
            report = evaluate_directories(pred, gt, mode, !raw, &warnings);
            for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
        } else {
            if (checkpoint.empty() || data.empty()) throw ConfigError("eval needs --checkpoint and --data, or --pred and --gt");
            auto loaded = load_checkpoint(checkpoint, encoder.build(read_checkpoint_config(checkpoint).model.backbone));
            const auto set = load_reporting(data);
            EvalOptions opts;
            opts.ephi = mode;
            opts.batch_size = loaded.config.batch_size;
            report = evaluate_model(loaded.model, set.samples, loaded.config.preprocess(), opts);
        }
        write_reports(report, dir, !no_figure);
        print_summary(report);
        std::printf("reports written to %s\n", dir.c_str());
        return 0;
    }
};

// ---- predict ----

struct PredictCmd {
    EncoderArgs encoder;
    std::string checkpoint, input, out;
    bool emit_intermediate = false, figures = false;
    int batch_size = 4;

    void attach(CLI::App* app) {
        encoder.attach(app);
        app->add_option("-k,--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
        app->add_option("-i,--input", input, "image file or directory")->required()->check(CLI::ExistingPath);
        app->add_option("-o,--out", out, "output directory");
        app->add_flag("--emit-intermediate", emit_intermediate, "also write the edge and localization maps");
        app->add_flag("--figures", figures, "write a side-by-side panel per image");
        app->add_option("--batch-size", batch_size, "images per forward pass")->check(CLI::PositiveNumber);
    }

    int run() const {
        auto loaded = load_checkpoint(checkpoint, encoder.build(read_checkpoint_config(checkpoint).model.backbone));
        std::vector<fs::path> images = fs::is_directory(input) ? list_images(input) : std::vector<fs::path>{input};
        if (images.empty()) throw InputError("no images in " + input);
        PredictOptions opts;
        opts.emit_intermediate = emit_intermediate;
        opts.figures = figures;
        opts.batch_size = batch_size;
        const auto dir = out_dir(out, "predict");
        const auto written = predict_files(loaded.model, images, dir, loaded.config.preprocess(), opts);
        std::printf("%zu images, %zu files written to %s\n", images.size(), written.size(), dir.c_str());
        return 0;
    }
};

// ---- gen-synth ----

struct GenCmd {
    GeneratorConfig gen;
    std::string out;
    int count = 100;
    std::uint64_t seed = 0;

    void attach(CLI::App* app) {
        app->add_option("-o,--out", out, "dataset root to create");
        app->add_option("-n,--count", count, "number of scenes")->check(CLI::PositiveNumber);
        app->add_option("--seed", seed, "seed of the first scene (scene i uses seed + i)");
        app->add_option("--size", gen.size, "scene width and height in pixels");
        app->add_option("--fg-min", gen.fg_min, "minimum foreground ratio");
        app->add_option("--fg-max", gen.fg_max, "maximum foreground ratio");
        app->add_option("--delta", gen.delta, "intensity offset of the hidden object");
        app->add_option("--octaves", gen.octaves, "noise octaves");
        app->add_option("--base-period", gen.base_period, "coarsest noise lattice spacing in pixels");
        app->add_option("--texture-amplitude", gen.texture_amplitude, "texture contrast");
        app->add_flag("--scod", gen.scod, "add a salient distractor per scene");
        app->add_option("--distractor-contrast", gen.distractor_contrast, "distractor offset from the background");
        app->add_option("--min-separation", gen.min_separation, "target-distractor gap as a fraction of the width");
    }

    int run() const {
        gen.validate();
        const auto dir = out_dir(out, "synth");
        write_dataset(dir, count, seed, gen);
        std::printf("%d scenes written to %s\n", count, dir.c_str());
        return 0;
    }
};

// ---- make-edges ----

struct EdgesCmd {
    std::string gt, out;

    void attach(CLI::App* app) {
        app->add_option("--gt", gt, "directory of binary masks")->required()->check(CLI::ExistingDirectory);
        app->add_option("-o,--out", out, "edge directory (default: Edge/ next to the mask directory)");
    }

    int run() const {
        const fs::path dir = out.empty() ? fs::path(gt).lexically_normal().parent_path() / "Edge" : fs::path(out);
        fs::create_directories(dir);
        size_t n = 0;
        for (const auto& p : list_images(gt)) {
            cv::Mat edge = make_edge_targets(read_binary(p));
            write_binary(dir / (p.stem().string() + ".png"), edge);
            ++n;
        }
        if (n == 0) throw InputError("no masks in " + gt);
        std::printf("%zu edge maps written to %s\n", n, dir.c_str());
        return 0;
    }
};

// ---- ablate ----

struct AblateCmd {
    ConfigArgs config;
    std::string data, test, out, rows, ephi = "mean";

    void attach(CLI::App* app) {
        config.attach(app);
        app->add_option("-d,--data", data, "training dataset root")->required();
        app->add_option("--test", test, "evaluation dataset root (default: the validation split)");
        app->add_option("-o,--out", out, "output directory");
        app->add_option("--rows", rows, "comma-separated ablation rows (default: all)");
        app->add_option("--ephi", ephi, "E-measure variant")->check(CLI::IsMember({"mean", "adaptive", "max"}));
    }

    int run() const {
        const auto base = config.resolve();
        const auto mode = metrics::parse_ephi_mode(ephi);
        const auto dir = out_dir(out, "ablate");
        const auto train = load_reporting(data);

        std::vector<SceneSample> fit_set, eval_set;
        if (!test.empty()) {
            fit_set = train.samples;
            eval_set = load_reporting(test).samples;
        } else {
            const auto [tr, va] = split_indices(train.samples.size(), base.val_fraction, base.seed);
            for (auto i : tr) fit_set.push_back(train.samples[i]);
            for (auto i : va) eval_set.push_back(train.samples[i]);
            if (eval_set.empty()) throw ConfigError("ablate without --test needs train.val_fraction > 0");
        }

        std::vector<std::string> wanted;
        if (!rows.empty()) {
            std::stringstream ss(rows);
            for (std::string r; std::getline(ss, r, ',');) wanted.push_back(r);
        }
        nlohmann::json summary = nlohmann::json::array();
        std::vector<std::pair<std::string, double>> bars;
        fs::create_directories(dir);
        std::ofstream csv(dir / "ablation.csv");
        csv << "row,toggles,S_alpha,E_phi,F_weighted,F_mean,MAE,parameters\n";
        for (const auto& [name, toggles] : ablation_table()) {
            if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
            auto cfg = base;
            cfg.model.ablation = toggles;
            std::printf("== %s (%s)\n", name.c_str(), toggles.to_string().c_str());
            Trainer trainer(cfg);
            TrainOptions opts;
            opts.out_dir = dir / name;
            trainer.fit(fit_set, &eval_set, opts);
            EvalOptions eo;
            eo.ephi = mode;
            const auto report = evaluate_model(trainer.model, eval_set, cfg.preprocess(), eo);
            write_reports(report, dir / name, false);
            const auto census = trainer.model->parameter_census();
            const auto& m = report.mean;
            csv << name << ",\"" << toggles.to_string() << "\"," << m.s_alpha << ',' << m.e_phi << ',' << m.f_weighted
                << ',' << m.f_mean << ',' << m.mae << ',' << census.at("total") << '\n';
            summary.push_back({{"row", name},
                               {"toggles", toggles.to_string()},
                               {"metrics", nlohmann::json::parse(report.to_json())["mean"]},
                               {"census", census}});
            bars.emplace_back(name, m.s_alpha);
            print_summary(report);
        }
        if (bars.empty()) throw ConfigError("no ablation row matches --rows " + rows);
        std::ofstream(dir / "ablation.json") << summary.dump(2) << '\n';
        plot_bars(dir / "ablation.png", bars, "S_alpha per ablation row");
        std::printf("ablation results written to %s\n", dir.c_str());
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"camoseg: camouflaged object detection training and evaluation"};
    app.require_subcommand(1);

    TrainCmd train;
    EvalCmd eval;
    PredictCmd predict;
    GenCmd gen;
    EdgesCmd edges;
    AblateCmd ablate;
    train.attach(app.add_subcommand("train", "train a model on a dataset"));
    eval.attach(app.add_subcommand("eval", "score a checkpoint or saved predictions"));
    predict.attach(app.add_subcommand("predict", "write prediction maps for images"));
    gen.attach(app.add_subcommand("gen-synth", "generate a synthetic camouflage dataset"));
    edges.attach(app.add_subcommand("make-edges", "derive edge targets from masks"));
    ablate.attach(app.add_subcommand("ablate", "train and score every ablation row"));

    CLI11_PARSE(app, argc, argv);
    try {
        if (app.got_subcommand("train")) return train.run();
        if (app.got_subcommand("eval")) return eval.run();
        if (app.got_subcommand("predict")) return predict.run();
        if (app.got_subcommand("gen-synth")) return gen.run();
        if (app.got_subcommand("make-edges")) return edges.run();
        if (app.got_subcommand("ablate")) return ablate.run();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const InputError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 3;
    } catch (const TrainingError& e) {
        std::fprintf(stderr, "training aborted: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
