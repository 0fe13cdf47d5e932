#include "camoseg/checkpoint.hpp"

#include "camoseg/errors.hpp"

namespace camoseg {

void save_checkpoint(const std::filesystem::path& path, Segmenter& model, const RunConfig& cfg,
                     torch::optim::Optimizer* optimizer, int epoch, double best_metric) {
    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive weights;
    model->save(weights);
    archive.write("model", weights);
    if (optimizer) {
        torch::serialize::OutputArchive opt;
        optimizer->save(opt);
        archive.write("optimizer", opt);
    }
    const auto dtype = model->parameters().front().scalar_type();
    archive.write("dtype", c10::IValue(static_cast<int64_t>(dtype)));
    archive.write("epoch", c10::IValue(static_cast<int64_t>(epoch)));
    archive.write("best_metric", c10::IValue(best_metric));
    archive.write("config", c10::IValue(cfg.to_text()));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    archive.save_to(path.string());
}

RunConfig read_checkpoint_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue v;
    archive.read("config", v);
    return RunConfig::from_text(v.toStringRef());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, std::shared_ptr<FeatureEncoder> encoder) {
    if (!std::filesystem::exists(path)) throw InputError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue v;
    LoadedCheckpoint out;
    archive.read("config", v);
    out.config = RunConfig::from_text(v.toStringRef());
    archive.read("epoch", v);
    out.epoch = static_cast<int>(v.toInt());
    archive.read("best_metric", v);
    out.best_metric = v.toDouble();
    archive.read("dtype", v);
    const auto dtype = static_cast<c10::ScalarType>(v.toInt());

    out.model = Segmenter(out.config.model, std::move(encoder));
    out.model->to(dtype);
    torch::serialize::InputArchive weights;
    if (!archive.try_read("model", weights)) throw InputError("checkpoint has no weights: " + path.string());
    out.model->load(weights);
    torch::serialize::InputArchive opt;
    out.has_optimizer = archive.try_read("optimizer", opt);
    return out;
}

bool load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    torch::serialize::InputArchive opt;
    if (!archive.try_read("optimizer", opt)) return false;
    optimizer.load(opt);
    return true;
}

}  // namespace camoseg
