#include "camoseg/evaluation.hpp"

#include "camoseg/errors.hpp"
#include "camoseg/plots.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <map>

namespace fs = std::filesystem;

namespace camoseg {

metrics::Grid to_grid(const cv::Mat& m) {
    if (m.empty() || m.channels() != 1) throw InputError("to_grid expects a single-channel map");
    cv::Mat d;
    m.convertTo(d, CV_64F, m.depth() == CV_8U ? 1.0 / 255.0 : 1.0);
    metrics::Grid g(d.rows, d.cols);
    for (int r = 0; r < d.rows; ++r)
        for (int c = 0; c < d.cols; ++c) g.at(r, c) = d.at<double>(r, c);
    return g;
}

metrics::Grid to_grid(const torch::Tensor& t) {
    auto x = t.detach().to(torch::kFloat64).contiguous();
    if (x.dim() == 3 && x.size(0) == 1) x = x.squeeze(0);
    if (x.dim() != 2) throw InputError("to_grid expects an H x W tensor");
    const auto* p = x.data_ptr<double>();
    return metrics::Grid(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)), std::vector<double>(p, p + x.numel()));
}

cv::Mat resize_probability(const torch::Tensor& prob, cv::Size size) {
    auto x = prob.detach().to(torch::kFloat32).contiguous();
    if (x.dim() == 3 && x.size(0) == 1) x = x.squeeze(0);
    if (x.dim() != 2) throw InputError("resize_probability expects an H x W map");
    cv::Mat m(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)), CV_32F);
    std::memcpy(m.data, x.data_ptr<float>(), x.numel() * sizeof(float));
    if (m.size() == size) return m;
    cv::Mat r;
    cv::resize(m, r, size, 0, 0, cv::INTER_LINEAR);
    return r;
}

cv::Mat probability_to_u8(const cv::Mat& prob) {
    cv::Mat clipped, u8;
    cv::min(cv::max(prob, 0.0), 1.0, clipped);
    clipped.convertTo(u8, CV_8U, 255.0);
    return u8;
}

double region_false_positive_rate(const cv::Mat& prob, const cv::Mat& mask, const cv::Rect& box, double threshold) {
    const cv::Rect r = box & cv::Rect(0, 0, prob.cols, prob.rows);
    double fp = 0.0, n = 0.0;
    for (int y = r.y; y < r.y + r.height; ++y)
        for (int x = r.x; x < r.x + r.width; ++x) {
            if (mask.at<uchar>(y, x)) continue;
            n += 1.0;
            if (prob.at<float>(y, x) > threshold) fp += 1.0;
        }
    return n > 0 ? fp / n : 0.0;
}

metrics::MetricReport evaluate_model(Segmenter& model, const std::vector<SceneSample>& samples, const PreprocessConfig& pre,
                                     const EvalOptions& opts) {
    if (samples.empty()) throw InputError("cannot evaluate an empty dataset");
    torch::NoGradGuard guard;
    model->eval();
    const auto dtype = model->parameters().front().scalar_type();
    std::vector<std::pair<std::string, metrics::MetricValues>> rows;
    for (size_t i = 0; i < samples.size(); i += static_cast<size_t>(opts.batch_size)) {
        const size_t end = std::min(samples.size(), i + static_cast<size_t>(opts.batch_size));
        std::vector<cv::Mat> ims;
        for (size_t k = i; k < end; ++k) ims.push_back(samples[k].image);
        const auto batch = make_image_batch(ims, pre);
        const auto pred = model->predict_triplet(batch.images.to(dtype));
        for (size_t k = i; k < end; ++k) {
            const auto& s = samples[k];
            const cv::Mat p = resize_probability(pred.final[static_cast<long>(k - i)], s.mask.size());
            rows.emplace_back(s.meta.name, metrics::evaluate_pair(to_grid(p), to_grid(s.mask * 255), opts.ephi));
        }
    }
    return metrics::aggregate(std::move(rows), opts.ephi);
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

metrics::MetricReport evaluate_directories(const fs::path& pred_dir, const fs::path& gt_dir, metrics::EPhiMode ephi,
                                           bool minmax_normalize, std::vector<std::string>* warnings) {
    std::map<std::string, fs::path> preds;
    for (const auto& p : list_images(pred_dir)) preds.emplace(p.stem().string(), p);
    std::vector<std::pair<std::string, metrics::MetricValues>> rows;
    for (const auto& g : list_images(gt_dir)) {
        const auto stem = g.stem().string();
        auto it = preds.find(stem);
        if (it == preds.end()) {
            if (warnings) warnings->push_back("no prediction for " + g.filename().string());
            continue;
        }
        cv::Mat pred = cv::imread(it->second.string(), cv::IMREAD_GRAYSCALE);
        if (pred.empty()) {
            if (warnings) warnings->push_back("unreadable prediction " + it->second.string());
            continue;
        }
        const cv::Mat gt = read_binary(g);
        if (pred.size() != gt.size()) {
            cv::Mat r;
            cv::resize(pred, r, gt.size(), 0, 0, cv::INTER_LINEAR);
            pred = r;
        }
        auto pg = to_grid(pred);
        if (minmax_normalize) {
            const auto [lo, hi] = std::minmax_element(pg.data.begin(), pg.data.end());
            const double a = *lo, b = *hi;
            if (b > a)
                for (auto& v : pg.data) v = (v - a) / (b - a);
        }
        rows.emplace_back(stem, metrics::evaluate_pair(pg, to_grid(gt * 255), ephi));
    }
    if (rows.empty()) throw InputError("no prediction/GT pairs found in " + pred_dir.string() + " and " + gt_dir.string());
    return metrics::aggregate(std::move(rows), ephi);
}

void write_reports(const metrics::MetricReport& report, const fs::path& out_dir, bool figure) {
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "metrics.csv");
    report.write_csv(csv);
    std::ofstream(out_dir / "metrics.json") << report.to_json() << '\n';
    if (figure) {
        const auto& m = report.mean;
        plot_bars(out_dir / "metrics.png",
                  {{"S_alpha", m.s_alpha}, {"E_phi", m.e_phi}, {"F_w", m.f_weighted}, {"F_mean", m.f_mean}, {"MAE", m.mae}},
                  "mean metrics (" + std::to_string(report.count) + " images)");
    }
}

std::vector<fs::path> predict_files(Segmenter& model, const std::vector<fs::path>& images, const fs::path& out_dir,
                                    const PreprocessConfig& pre, const PredictOptions& opts) {
    if (images.empty()) throw InputError("no input images");
    fs::create_directories(out_dir);
    torch::NoGradGuard guard;
    model->eval();
    const auto dtype = model->parameters().front().scalar_type();
    std::vector<fs::path> written;
    for (size_t i = 0; i < images.size(); i += static_cast<size_t>(opts.batch_size)) {
        const size_t end = std::min(images.size(), i + static_cast<size_t>(opts.batch_size));
        std::vector<cv::Mat> ims;
        for (size_t k = i; k < end; ++k) ims.push_back(read_rgb(images[k]));
        const auto batch = make_image_batch(ims, pre);
        const auto pred = model->predict_triplet(batch.images.to(dtype));
        for (size_t k = i; k < end; ++k) {
            const long b = static_cast<long>(k - i);
            const auto size = batch.original_sizes[k - i];
            const auto stem = images[k].stem().string();
            auto emit = [&](const torch::Tensor& p, const std::string& suffix, bool save) {
                const cv::Mat u8 = probability_to_u8(resize_probability(p[b], size));
                if (save) {
                    const auto path = out_dir / (stem + suffix + ".png");
                    if (!cv::imwrite(path.string(), u8)) throw InputError("cannot write " + path.string());
                    written.push_back(path);
                }
                return u8;
            };
            const cv::Mat fin = emit(pred.final, "", true);
            if (opts.emit_intermediate || opts.figures) {
                const cv::Mat edge = emit(pred.edge, "_edge", opts.emit_intermediate);
                const cv::Mat loc = emit(pred.loc, "_loc", opts.emit_intermediate);
                if (opts.figures) {
                    cv::Mat bgr;
                    cv::Mat u8;
                    ims[k - i].convertTo(u8, CV_8UC3, 255.0);
                    cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
                    const auto path = out_dir / (stem + "_panel.png");
                    cv::imwrite(path.string(), tile_panels({bgr, edge, loc, fin}, 256));
                    written.push_back(path);
                }
            }
        }
    }
    return written;
}

}  // namespace camoseg
