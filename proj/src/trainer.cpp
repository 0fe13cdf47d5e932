#include "camoseg/trainer.hpp"

#include "camoseg/checkpoint.hpp"
#include "camoseg/errors.hpp"
#include "camoseg/plots.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace fs = std::filesystem;

namespace camoseg {

PlateauSchedule::PlateauSchedule(double factor, int patience, double min_lr)
    : factor_(factor), patience_(patience), min_lr_(min_lr) {
    if (!(factor > 0 && factor < 1)) throw ConfigError("plateau factor must lie in (0,1)");
    if (patience < 0) throw ConfigError("plateau patience must be >= 0");
}

double PlateauSchedule::step(double value, double current_lr) {
    improved_ = value < best_;
    if (improved_) {
        best_ = value;
        bad_ = 0;
        return current_lr;
    }
    if (++bad_ >= patience_) {
        bad_ = 0;
        return std::max(current_lr * factor_, min_lr_);
    }
    return current_lr;
}

std::vector<size_t> shuffled_indices(size_t n, std::uint64_t seed) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (size_t i = n; i > 1; --i) {
        const auto j = static_cast<size_t>(unit_double(rng) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
    return idx;
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_indices(size_t n, double fraction, std::uint64_t seed) {
    auto idx = shuffled_indices(n, seed ^ 0x5eedULL);
    size_t n_val = 0;
    if (fraction > 0 && n >= 2) n_val = std::clamp<size_t>(static_cast<size_t>(std::lround(fraction * n)), 1, n - 1);
    std::vector<size_t> val(idx.begin(), idx.begin() + static_cast<long>(n_val));
    std::vector<size_t> train(idx.begin() + static_cast<long>(n_val), idx.end());
    std::sort(val.begin(), val.end());
    return {train, val};
}

void apply_runtime_settings(const RunConfig& cfg) {
    torch::set_num_threads(cfg.num_threads);
    torch::manual_seed(cfg.seed);
    if (cfg.deterministic) at::globalContext().setDeterministicAlgorithms(true, true);
}

Trainer::Trainer(RunConfig cfg, std::shared_ptr<FeatureEncoder> encoder) : cfg_(std::move(cfg)) {
    for (const auto& note : cfg_.model.ablation.normalize()) std::fprintf(stderr, "note: %s\n", note.c_str());
    cfg_.validate();
    loss_cfg_ = cfg_.effective_loss();
    apply_runtime_settings(cfg_);
    model = Segmenter(cfg_.model, std::move(encoder));

    std::vector<torch::optim::OptimizerParamGroup> groups;
    auto dec_opts = std::make_unique<torch::optim::AdamWOptions>(cfg_.optim.decoder_lr);
    dec_opts->weight_decay(cfg_.optim.weight_decay);
    groups.emplace_back(model->decoder_parameters(), std::move(dec_opts));
    auto enc_params = model->encoder_parameters();
    if (!enc_params.empty()) {
        auto enc_opts = std::make_unique<torch::optim::AdamWOptions>(cfg_.optim.encoder_lr);
        enc_opts->weight_decay(cfg_.optim.weight_decay);
        groups.emplace_back(enc_params, std::move(enc_opts));
    }
    optimizer = std::make_unique<torch::optim::AdamW>(
        groups, torch::optim::AdamWOptions(cfg_.optim.decoder_lr).weight_decay(cfg_.optim.weight_decay));
}

void Trainer::set_learning_rates(double decoder_lr, double encoder_lr) {
    auto& groups = optimizer->param_groups();
    static_cast<torch::optim::AdamWOptions&>(groups[0].options()).lr(decoder_lr);
    if (groups.size() > 1) static_cast<torch::optim::AdamWOptions&>(groups[1].options()).lr(encoder_lr);
}

double Trainer::decoder_lr() const {
    return static_cast<const torch::optim::AdamWOptions&>(optimizer->param_groups()[0].options()).lr();
}

double Trainer::encoder_lr() const {
    const auto& groups = optimizer->param_groups();
    if (groups.size() < 2) return cfg_.optim.encoder_lr;
    return static_cast<const torch::optim::AdamWOptions&>(groups[1].options()).lr();
}

namespace {

TrainingBatch to_dtype(const TrainingBatch& b, torch::ScalarType dtype) {
    return {b.images.to(dtype), b.mask.to(dtype), b.edge.to(dtype)};
}

}  // namespace

LossReport Trainer::train_step(const TrainingBatch& raw, StepRecord* record) {
    model->train();
    const auto dtype = model->parameters().front().scalar_type();
    const auto batch = to_dtype(raw, dtype);
    optimizer->zero_grad();
    const auto targets = make_loss_targets(batch.mask, batch.edge, loss_cfg_);
    auto pred = model->predict_triplet(batch.images);
    auto report = total_loss(pred, targets, loss_cfg_);
    if (!std::isfinite(report.total_value))
        throw TrainingError("non-finite loss at step " + std::to_string(step_ + 1) + ": " + report.to_json().dump());
    report.total.backward();
    const double norm = torch::nn::utils::clip_grad_norm_(model->parameters(), cfg_.optim.grad_clip);
    if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm at step " + std::to_string(step_ + 1));
    optimizer->step();
    ++step_;
    if (record) {
        record->step = step_;
        record->loss = report.total_value;
        record->grad_norm = norm;
        record->decoder_lr = decoder_lr();
        record->encoder_lr = encoder_lr();
    }
    return report;
}

double Trainer::evaluate_loss(const std::vector<const SceneSample*>& samples) {
    if (samples.empty()) throw InputError("no samples to evaluate");
    torch::NoGradGuard guard;
    model->eval();
    const auto dtype = model->parameters().front().scalar_type();
    const auto pre = cfg_.preprocess();
    double acc = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < samples.size(); i += cfg_.batch_size) {
        const size_t end = std::min(samples.size(), i + static_cast<size_t>(cfg_.batch_size));
        std::vector<const SceneSample*> chunk(samples.begin() + static_cast<long>(i), samples.begin() + static_cast<long>(end));
        const auto batch = to_dtype(make_training_batch(chunk, pre), dtype);
        const auto targets = make_loss_targets(batch.mask, batch.edge, loss_cfg_);
        const auto report = total_loss(model->predict_triplet(batch.images), targets, loss_cfg_);
        acc += report.total_value * static_cast<double>(chunk.size());
        n += chunk.size();
    }
    return acc / static_cast<double>(n);
}

TrainResult Trainer::fit(const std::vector<SceneSample>& train, const std::vector<SceneSample>* val,
                         const TrainOptions& options) {
    if (train.empty()) throw InputError("training set is empty");
    std::vector<const SceneSample*> train_set, val_set;
    if (val) {
        for (const auto& s : train) train_set.push_back(&s);
        for (const auto& s : *val) val_set.push_back(&s);
    } else {
        const auto [tr, va] = split_indices(train.size(), cfg_.val_fraction, cfg_.seed);
        for (auto i : tr) train_set.push_back(&train[i]);
        for (auto i : va) val_set.push_back(&train[i]);
    }
    const bool monitor_val = cfg_.schedule.monitor == "val_loss" && !val_set.empty();

    const bool write = !options.out_dir.empty();
    std::ofstream step_log, epoch_log;
    if (write) {
        fs::create_directories(options.out_dir);
        cfg_.save(options.out_dir / "config.txt");
        step_log.open(options.out_dir / "train_log.jsonl");
        epoch_log.open(options.out_dir / "epochs.jsonl");
    }

    const auto pre = cfg_.preprocess();
    PlateauSchedule schedule(cfg_.schedule.factor, cfg_.schedule.patience, cfg_.schedule.min_lr);
    TrainResult result;
    bool done = false;
    for (int epoch = 1; epoch <= cfg_.epochs && !done; ++epoch) {
        const auto order = shuffled_indices(train_set.size(), cfg_.seed + static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        size_t seen = 0;
        for (size_t i = 0; i < order.size(); i += cfg_.batch_size) {
            const size_t end = std::min(order.size(), i + static_cast<size_t>(cfg_.batch_size));
            std::vector<const SceneSample*> chunk;
            for (size_t k = i; k < end; ++k) chunk.push_back(train_set[order[k]]);
            StepRecord rec;
            LossReport report;
            try {
                report = train_step(make_training_batch(chunk, pre), &rec);
            } catch (const TrainingError& e) {
                nlohmann::json dump{{"error", e.what()}, {"epoch", epoch}, {"step", step_ + 1},
                                    {"shuffle_seed", cfg_.seed + static_cast<std::uint64_t>(epoch)}};
                for (const auto* s : chunk) dump["batch"].push_back({{"name", s->meta.name}, {"seed", s->meta.seed}});
                if (write) std::ofstream(options.out_dir / "nan_dump.json") << dump.dump(2) << '\n';
                throw TrainingError(std::string(e.what()) + "; batch: " + dump["batch"].dump());
            }
            rec.epoch = epoch;
            result.steps.push_back(rec);
            if (write) {
                auto j = report.to_json();
                j["step"] = rec.step;
                j["epoch"] = epoch;
                j["grad_norm"] = rec.grad_norm;
                j["decoder_lr"] = rec.decoder_lr;
                j["encoder_lr"] = rec.encoder_lr;
                step_log << j.dump() << '\n';
            }
            if (options.on_step) options.on_step(rec);
            epoch_loss += report.total_value * static_cast<double>(chunk.size());
            seen += chunk.size();
            if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) {
                done = true;
                break;
            }
        }
        EpochRecord er;
        er.epoch = epoch;
        er.train_loss = epoch_loss / static_cast<double>(seen);
        if (!val_set.empty()) er.val_loss = evaluate_loss(val_set);
        const double monitored = monitor_val ? *er.val_loss : er.train_loss;
        const double ratio = cfg_.optim.encoder_lr / cfg_.optim.decoder_lr;
        const double lr = schedule.step(monitored, decoder_lr());
        set_learning_rates(lr, lr * ratio);
        er.improved = schedule.last_step_improved();
        er.decoder_lr = lr;
        result.epochs.push_back(er);
        if (er.improved) {
            result.best_metric = monitored;
            if (write && options.save_checkpoints) {
                result.best_checkpoint = options.out_dir / "best.ckpt";
                save_checkpoint(result.best_checkpoint, model, cfg_, optimizer.get(), epoch, monitored);
            }
        }
        if (write) {
            nlohmann::json j{{"epoch", epoch}, {"train_loss", er.train_loss}, {"decoder_lr", lr}, {"improved", er.improved}};
            if (er.val_loss) j["val_loss"] = *er.val_loss;
            epoch_log << j.dump() << '\n';
            epoch_log.flush();
        }
    }
    if (write && options.save_checkpoints) {
        const int last_epoch = result.epochs.empty() ? 0 : result.epochs.back().epoch;
        save_checkpoint(options.out_dir / "last.ckpt", model, cfg_, optimizer.get(), last_epoch, result.best_metric);
    }
    if (write && options.plots) {
        std::vector<double> steps;
        for (const auto& s : result.steps) steps.push_back(s.loss);
        std::vector<double> tr, va;
        for (const auto& e : result.epochs) {
            tr.push_back(e.train_loss);
            if (e.val_loss) va.push_back(*e.val_loss);
        }
        plot_curves(options.out_dir / "loss_steps.png", {{"step loss", steps}}, "training loss per step");
        std::vector<std::pair<std::string, std::vector<double>>> series{{"train", tr}};
        if (!va.empty()) series.emplace_back("validation", va);
        plot_curves(options.out_dir / "loss_epochs.png", series, "loss per epoch");
    }
    return result;
}

}  // namespace camoseg
