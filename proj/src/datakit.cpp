#include "camoseg/datakit.hpp"

#include "camoseg/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

namespace fs = std::filesystem;

namespace camoseg {

// ---------------------------------------------------------------- preprocessing

void PreprocessConfig::validate() const {
    if (size <= 0) throw ConfigError("preprocess size must be positive");
    for (double s : std)
        if (!(s > 0)) throw ConfigError("preprocess std must be > 0");
}

namespace {

cv::Mat to_float_rgb(const cv::Mat& rgb) {
    if (rgb.empty() || rgb.channels() != 3) throw InputError("expected a non-empty 3-channel image");
    cv::Mat f;
    if (rgb.depth() == CV_8U) rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    else if (rgb.depth() == CV_32F) f = rgb;
    else rgb.convertTo(f, CV_32FC3);
    return f;
}

}  // namespace

torch::Tensor preprocess(const cv::Mat& rgb, const PreprocessConfig& cfg) {
    cfg.validate();
    cv::Mat f = to_float_rgb(rgb);
    cv::Mat resized;
    if (f.rows == cfg.size && f.cols == cfg.size) resized = f.clone();
    else cv::resize(f, resized, cv::Size(cfg.size, cfg.size), 0, 0, cv::INTER_LINEAR);
    if (!resized.isContinuous()) resized = resized.clone();
    auto t = torch::from_blob(resized.data, {cfg.size, cfg.size, 3}, torch::kFloat32).permute({2, 0, 1}).clone();
    auto mean = torch::tensor({cfg.mean[0], cfg.mean[1], cfg.mean[2]}, torch::kFloat32).view({3, 1, 1});
    auto std = torch::tensor({cfg.std[0], cfg.std[1], cfg.std[2]}, torch::kFloat32).view({3, 1, 1});
    return (t - mean) / std;
}

cv::Mat denormalize(const torch::Tensor& chw, const PreprocessConfig& cfg) {
    if (chw.dim() != 3 || chw.size(0) != 3) throw InputError("denormalize expects a 3 x H x W tensor");
    auto mean = torch::tensor({cfg.mean[0], cfg.mean[1], cfg.mean[2]}, torch::kFloat32).view({3, 1, 1});
    auto std = torch::tensor({cfg.std[0], cfg.std[1], cfg.std[2]}, torch::kFloat32).view({3, 1, 1});
    auto hwc = (chw.to(torch::kFloat32) * std + mean).permute({1, 2, 0}).contiguous();
    cv::Mat out(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_32FC3);
    std::memcpy(out.data, hwc.data_ptr<float>(), hwc.numel() * sizeof(float));
    return out;
}

ImageBatch make_image_batch(const std::vector<cv::Mat>& rgb_images, const PreprocessConfig& cfg) {
    if (rgb_images.empty()) throw InputError("empty image batch");
    ImageBatch b;
    std::vector<torch::Tensor> ts;
    for (const auto& im : rgb_images) {
        ts.push_back(preprocess(im, cfg));
        b.original_sizes.emplace_back(im.cols, im.rows);
    }
    b.images = torch::stack(ts);
    return b;
}

torch::Tensor binary_to_tensor(const cv::Mat& binary, int size) {
    if (binary.empty() || binary.channels() != 1) throw InputError("expected a single-channel binary map");
    cv::Mat f;
    binary.convertTo(f, CV_32F);
    if (f.rows != size || f.cols != size) {
        cv::Mat r;
        cv::resize(f, r, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
        cv::threshold(r, f, 0.5, 1.0, cv::THRESH_BINARY);
    }
    if (!f.isContinuous()) f = f.clone();
    return torch::from_blob(f.data, {1, size, size}, torch::kFloat32).clone();
}

TrainingBatch make_training_batch(const std::vector<const SceneSample*>& samples, const PreprocessConfig& cfg) {
    if (samples.empty()) throw InputError("empty training batch");
    std::vector<torch::Tensor> im, m, e;
    for (const auto* s : samples) {
        im.push_back(preprocess(s->image, cfg));
        m.push_back(binary_to_tensor(s->mask, cfg.size));
        e.push_back(binary_to_tensor(s->edge, cfg.size));
    }
    return {torch::stack(im), torch::stack(m), torch::stack(e)};
}

// ---------------------------------------------------------------- edge targets

cv::Mat make_edge_targets(const cv::Mat& mask) {
    if (mask.empty() || mask.channels() != 1) throw InputError("make_edge_targets expects a single-channel mask");
    cv::Mat m;
    mask.convertTo(m, CV_64F);
    cv::threshold(m, m, 0.5, 1.0, cv::THRESH_BINARY);
    // Centre to +-0.5: flipping the polarity negates every intermediate value exactly, and
    // Canny only looks at |gradient| and the sign of dx*dy.
    m -= 0.5;
    cv::Mat blurred, dx, dy;
    cv::GaussianBlur(m, blurred, cv::Size(7, 7), 1.0, 1.0, cv::BORDER_REPLICATE);
    cv::Sobel(blurred, dx, CV_64F, 1, 0, 3, 1.0, 0.0, cv::BORDER_REPLICATE);
    cv::Sobel(blurred, dy, CV_64F, 0, 1, 3, 1.0, 0.0, cv::BORDER_REPLICATE);
    // Largest Sobel response of a unit step is 4; map it to 4000 in 16-bit.
    constexpr double scale = 1000.0;
    constexpr double full_scale = 4.0 * scale;
    cv::Mat dx16, dy16;
    dx.convertTo(dx16, CV_16S, scale);
    dy.convertTo(dy16, CV_16S, scale);
    cv::Mat edges;
    cv::Canny(dx16, dy16, edges, 0.1 * full_scale, 0.2 * full_scale, true);
    cv::Mat disk = cv::Mat::zeros(5, 5, CV_8U);
    for (int y = -2; y <= 2; ++y)
        for (int x = -2; x <= 2; ++x)
            if (x * x + y * y <= 4) disk.at<uchar>(y + 2, x + 2) = 1;
    cv::Mat band;
    cv::dilate(edges, band, disk);
    band.setTo(1, band > 0);
    return band;
}

// ---------------------------------------------------------------- IO

cv::Mat read_rgb(const fs::path& p) {
    cv::Mat bgr = cv::imread(p.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw InputError("cannot read image " + p.string());
    cv::Mat rgb, f;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    return f;
}

cv::Mat read_binary(const fs::path& p) {
    cv::Mat g = cv::imread(p.string(), cv::IMREAD_GRAYSCALE);
    if (g.empty()) throw InputError("cannot read mask " + p.string());
    cv::Mat b = cv::Mat::zeros(g.size(), CV_8U);
    b.setTo(1, g > 128);
    return b;
}

void write_rgb(const fs::path& p, const cv::Mat& rgb) {
    cv::Mat u8, bgr;
    if (rgb.depth() == CV_8U) u8 = rgb;
    else rgb.convertTo(u8, CV_8UC3, 255.0);
    cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(p.string(), bgr)) throw InputError("cannot write " + p.string());
}

void write_binary(const fs::path& p, const cv::Mat& binary) {
    cv::Mat u8;
    binary.convertTo(u8, CV_8U, 255.0);
    if (!cv::imwrite(p.string(), u8)) throw InputError("cannot write " + p.string());
}

namespace {

bool is_image_ext(std::string ext) {
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::map<std::string, fs::path> index_dir(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_ext(e.path().extension().string())) out.emplace(e.path().stem().string(), e.path());
    return out;
}

}  // namespace

LoadResult load_dataset(const fs::path& root) {
    if (!fs::is_directory(root / "Image") || !fs::is_directory(root / "GT"))
        throw InputError("dataset root " + root.string() + " needs Image/ and GT/ subdirectories");
    const auto images = index_dir(root / "Image");
    const auto masks = index_dir(root / "GT");
    const auto edges = index_dir(root / "Edge");

    std::map<std::string, SceneMeta> manifest_meta;
    if (fs::exists(root / "manifest.json")) {
        std::ifstream in(root / "manifest.json");
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (!j.is_discarded() && j.contains("samples")) {
            for (const auto& s : j["samples"]) {
                SceneMeta m;
                m.name = s.value("name", "");
                m.seed = s.value("seed", std::uint64_t{0});
                m.foreground_ratio = s.value("foreground_ratio", 0.0);
                if (s.contains("distractor") && s["distractor"].is_array()) {
                    const auto& d = s["distractor"];
                    m.distractor = cv::Rect(d[0].get<int>(), d[1].get<int>(), d[2].get<int>(), d[3].get<int>());
                }
                manifest_meta[m.name] = m;
            }
        }
    }

    LoadResult r;
    for (const auto& [stem, ipath] : images) {
        auto mit = masks.find(stem);
        if (mit == masks.end()) {
            r.warnings.push_back("no mask for image " + ipath.filename().string());
            continue;
        }
        try {
            SceneSample s;
            s.image = read_rgb(ipath);
            s.mask = read_binary(mit->second);
            if (s.mask.size() != s.image.size())
                throw InputError("mask size differs from image size for " + stem);
            auto eit = edges.find(stem);
            s.edge = eit != edges.end() ? read_binary(eit->second) : make_edge_targets(s.mask);
            if (s.edge.size() != s.mask.size()) throw InputError("edge map size differs for " + stem);
            auto meta = manifest_meta.find(stem);
            if (meta != manifest_meta.end()) s.meta = meta->second;
            s.meta.name = stem;
            s.meta.foreground_ratio = cv::countNonZero(s.mask) / static_cast<double>(s.mask.total());
            r.samples.push_back(std::move(s));
        } catch (const InputError& e) {
            ++r.skipped;
            r.warnings.push_back(std::string("skipped: ") + e.what());
        }
    }
    for (const auto& [stem, mpath] : masks)
        if (!images.count(stem)) r.warnings.push_back("no image for mask " + mpath.filename().string());
    return r;
}

// ---------------------------------------------------------------- synthetic scenes

namespace {

struct Blob {
    double cx = 0, cy = 0, radius = 0;
    std::array<double, 3> amp{};
    std::array<double, 3> phase{};

    double extent() const { return radius * (1.0 + amp[0] + amp[1] + amp[2]); }
    double area_factor() const { return 1.0 + (amp[0] * amp[0] + amp[1] * amp[1] + amp[2] * amp[2]) / 2.0; }

    cv::Mat rasterize(int size) const {
        cv::Mat m = cv::Mat::zeros(size, size, CV_8U);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const double th = std::atan2(dy, dx);
                double r = radius;
                for (int k = 0; k < 3; ++k) r += radius * amp[k] * std::cos((k + 2) * th + phase[k]);
                if (dx * dx + dy * dy <= r * r) m.at<uchar>(y, x) = 1;
            }
        return m;
    }
};

constexpr double kMaxLobe = 0.12;  // per-harmonic amplitude bound

Blob random_shape(std::mt19937_64& rng) {
    Blob b;
    for (int k = 0; k < 3; ++k) {
        b.amp[k] = kMaxLobe * unit_double(rng);
        b.phase[k] = 2.0 * std::numbers::pi * unit_double(rng);
    }
    return b;
}

double worst_extent(double ratio, int size) {
    const double r = std::sqrt(ratio * size * size / std::numbers::pi);
    return r * (1.0 + 3 * kMaxLobe);
}

// Blob whose rasterised area ratio lies in [lo, hi], centred uniformly where it fits.
cv::Mat place_blob(std::mt19937_64& rng, int size, double lo, double hi, const std::string& what) {
    Blob b = random_shape(rng);
    const double target = lo + (hi - lo) * (0.1 + 0.8 * unit_double(rng));
    b.radius = std::sqrt(target * size * size / (std::numbers::pi * b.area_factor()));
    const double ux = unit_double(rng), uy = unit_double(rng);
    for (int iter = 0; iter < 12; ++iter) {
        const double e = b.extent() + 1.0;
        if (2 * e > size) throw GenerationError(what + " does not fit in the image");
        b.cx = e + ux * (size - 2 * e);
        b.cy = e + uy * (size - 2 * e);
        cv::Mat m = b.rasterize(size);
        const double ratio = cv::countNonZero(m) / static_cast<double>(size * size);
        if (ratio >= lo && ratio <= hi) return m;
        if (ratio == 0) b.radius *= 1.5;
        else b.radius *= std::sqrt(target / ratio);
    }
    throw GenerationError(what + ": foreground ratio bounds not reachable on a " + std::to_string(size) + " grid");
}

// Multi-octave value noise in [0,1], smoothstep-interpolated lattice values.
cv::Mat value_noise(std::mt19937_64& rng, int size, double period, int octaves) {
    cv::Mat acc = cv::Mat::zeros(size, size, CV_64F);
    double amp = 1.0, norm = 0.0;
    for (int o = 0; o < octaves; ++o) {
        const double per = std::max(1.0, period / std::pow(2.0, o));
        const int n = static_cast<int>(std::ceil(size / per)) + 2;
        std::vector<double> lattice(static_cast<size_t>(n) * n);
        for (auto& v : lattice) v = unit_double(rng);
        for (int y = 0; y < size; ++y) {
            const double fy = y / per;
            const int iy = static_cast<int>(fy);
            double ty = fy - iy;
            ty = ty * ty * (3 - 2 * ty);
            for (int x = 0; x < size; ++x) {
                const double fx = x / per;
                const int ix = static_cast<int>(fx);
                double tx = fx - ix;
                tx = tx * tx * (3 - 2 * tx);
                const double v00 = lattice[iy * n + ix], v01 = lattice[iy * n + ix + 1];
                const double v10 = lattice[(iy + 1) * n + ix], v11 = lattice[(iy + 1) * n + ix + 1];
                const double top = v00 + (v01 - v00) * tx, bot = v10 + (v11 - v10) * tx;
                acc.at<double>(y, x) += amp * (top + (bot - top) * ty);
            }
        }
        norm += amp;
        amp *= 0.5;
    }
    return acc / norm;
}

// Colour texture: shared luminance noise plus weaker per-channel noise around a base colour.
cv::Mat texture(std::mt19937_64& rng, const GeneratorConfig& cfg, const std::array<double, 3>& base, double offset) {
    const int s = cfg.size;
    cv::Mat lum = value_noise(rng, s, cfg.base_period, cfg.octaves);
    cv::Mat out(s, s, CV_32FC3);
    std::array<cv::Mat, 3> chroma;
    for (auto& c : chroma) c = value_noise(rng, s, cfg.base_period, cfg.octaves);
    const double a = cfg.texture_amplitude;
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            auto& px = out.at<cv::Vec3f>(y, x);
            for (int c = 0; c < 3; ++c) {
                const double v = base[c] + offset + 2.0 * a * (lum.at<double>(y, x) - 0.5) +
                                 a * (chroma[c].at<double>(y, x) - 0.5);
                px[c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    return out;
}

}  // namespace

void GeneratorConfig::validate() const {
    if (size < 16) throw GenerationError("generator size must be at least 16");
    if (!(fg_min > 0 && fg_min < fg_max && fg_max < 1)) throw GenerationError("need 0 < fg_min < fg_max < 1");
    if ((fg_max - fg_min) * size * size < 4) throw GenerationError("foreground ratio window narrower than the pixel grid");
    if (2 * (worst_extent(fg_max, size) + 1) > size) throw GenerationError("fg_max blob does not fit in the image");
    if (scod && 4 * (worst_extent(fg_min, size) + 1) + min_separation * size > size * std::numbers::sqrt2)
        throw GenerationError("target and distractor cannot be separated on this grid");
    if (octaves < 1 || base_period < 1) throw GenerationError("noise needs octaves >= 1 and base_period >= 1");
    if (max_attempts < 1) throw GenerationError("max_attempts must be positive");
}

nlohmann::json GeneratorConfig::to_json() const {
    return {{"size", size},
            {"fg_min", fg_min},
            {"fg_max", fg_max},
            {"delta", delta},
            {"octaves", octaves},
            {"base_period", base_period},
            {"texture_amplitude", texture_amplitude},
            {"scod", scod},
            {"distractor_contrast", distractor_contrast},
            {"min_separation", min_separation},
            {"max_attempts", max_attempts}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    c.size = j.value("size", c.size);
    c.fg_min = j.value("fg_min", c.fg_min);
    c.fg_max = j.value("fg_max", c.fg_max);
    c.delta = j.value("delta", c.delta);
    c.octaves = j.value("octaves", c.octaves);
    c.base_period = j.value("base_period", c.base_period);
    c.texture_amplitude = j.value("texture_amplitude", c.texture_amplitude);
    c.scod = j.value("scod", c.scod);
    c.distractor_contrast = j.value("distractor_contrast", c.distractor_contrast);
    c.min_separation = j.value("min_separation", c.min_separation);
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    return c;
}

SceneSample gen_scene(std::uint64_t seed, const GeneratorConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const int s = cfg.size;
    std::array<double, 3> base{};
    for (auto& b : base) b = 0.3 + 0.4 * unit_double(rng);

    SceneSample out;
    out.meta.seed = seed;
    cv::Mat distractor;
    double distractor_sign = 1.0;
    if (!cfg.scod) {
        out.mask = place_blob(rng, s, cfg.fg_min, cfg.fg_max, "target");
    } else {
        // A large target can leave no room for the distractor; re-place both then.
        const double min_gap = cfg.min_separation * s;
        for (int attempt = 0; attempt < cfg.max_attempts && distractor.empty(); ++attempt) {
            out.mask = place_blob(rng, s, cfg.fg_min, cfg.fg_max, "target");
            cv::Mat outside, dist;
            cv::compare(out.mask, 0, outside, cv::CMP_EQ);
            cv::distanceTransform(outside, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE);
            for (int k = 0; k < 8 && distractor.empty(); ++k) {
                cv::Mat cand = place_blob(rng, s, cfg.fg_min, cfg.fg_max, "distractor");
                double gap = 0;
                cv::minMaxLoc(dist, &gap, nullptr, nullptr, nullptr, cand);
                if (gap >= min_gap) distractor = cand;
            }
        }
        if (distractor.empty()) throw GenerationError("no distractor placement satisfies the separation");
        distractor_sign = unit_double(rng) < 0.5 ? -1.0 : 1.0;
        out.meta.distractor = cv::boundingRect(distractor);
    }

    // Independent draws of the same texture process for background and object.
    cv::Mat background = texture(rng, cfg, base, 0.0);
    cv::Mat object = texture(rng, cfg, base, cfg.delta);
    out.image = background.clone();
    object.copyTo(out.image, out.mask);
    if (!distractor.empty()) {
        GeneratorConfig flat = cfg;
        flat.texture_amplitude = cfg.texture_amplitude * 0.3;
        cv::Mat salient = texture(rng, flat, base, distractor_sign * cfg.distractor_contrast);
        salient.copyTo(out.image, distractor);
    }
    out.edge = make_edge_targets(out.mask);
    out.meta.foreground_ratio = cv::countNonZero(out.mask) / static_cast<double>(s * s);
    return out;
}

void write_dataset(const fs::path& root, int count, std::uint64_t base_seed, const GeneratorConfig& cfg) {
    if (count <= 0) throw ConfigError("scene count must be positive");
    cfg.validate();
    for (const char* d : {"Image", "GT", "Edge"}) fs::create_directories(root / d);
    nlohmann::json manifest;
    manifest["generator"] = cfg.to_json();
    manifest["base_seed"] = base_seed;
    manifest["count"] = count;
    manifest["samples"] = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
        SceneSample sc = gen_scene(seed, cfg);
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05d", i);
        write_rgb(root / "Image" / (std::string(name) + ".png"), sc.image);
        write_binary(root / "GT" / (std::string(name) + ".png"), sc.mask);
        write_binary(root / "Edge" / (std::string(name) + ".png"), sc.edge);
        nlohmann::json entry{{"name", name}, {"seed", seed}, {"foreground_ratio", sc.meta.foreground_ratio}};
        if (sc.meta.distractor) {
            const auto& r = *sc.meta.distractor;
            entry["distractor"] = {r.x, r.y, r.width, r.height};
        } else {
            entry["distractor"] = nullptr;
        }
        manifest["samples"].push_back(entry);
    }
    std::ofstream(root / "manifest.json") << manifest.dump(2) << '\n';
}

}  // namespace camoseg
