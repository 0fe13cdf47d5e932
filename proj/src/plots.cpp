#include "camoseg/plots.hpp"

#include "camoseg/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace camoseg {

namespace {

const cv::Scalar kPalette[] = {{180, 90, 30}, {40, 120, 220}, {60, 160, 60}, {40, 40, 200}, {150, 80, 150}};

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

void save(const std::filesystem::path& path, const cv::Mat& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), img)) throw InputError("cannot write figure " + path.string());
}

}  // namespace

void plot_curves(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::vector<double>>>& series,
                 const std::string& title) {
    const int w = 800, h = 480, left = 70, right = 20, top = 40, bottom = 40;
    cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    size_t longest = 0;
    for (const auto& [name, ys] : series) {
        longest = std::max(longest, ys.size());
        for (double y : ys)
            if (std::isfinite(y)) {
                lo = std::min(lo, y);
                hi = std::max(hi, y);
            }
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const cv::Point origin(left, h - bottom);
    cv::rectangle(img, cv::Point(left, top), cv::Point(w - right, h - bottom), cv::Scalar(0, 0, 0));
    cv::putText(img, title, cv::Point(left, 25), cv::FONT_HERSHEY_SIMPLEX, 0.6, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::putText(img, short_number(hi), cv::Point(5, top + 5), cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0));
    cv::putText(img, short_number(lo), cv::Point(5, h - bottom), cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0));
    cv::putText(img, std::to_string(longest), cv::Point(w - right - 40, h - 15), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(0, 0, 0));
    const double plot_w = w - left - right, plot_h = h - top - bottom;
    for (size_t s = 0; s < series.size(); ++s) {
        const auto& ys = series[s].second;
        const auto colour = kPalette[s % 5];
        auto pt = [&](size_t i) {
            const double x = longest > 1 ? static_cast<double>(i) / static_cast<double>(longest - 1) : 0.5;
            return cv::Point(static_cast<int>(left + x * plot_w),
                             static_cast<int>(origin.y - (ys[i] - lo) / (hi - lo) * plot_h));
        };
        for (size_t i = 1; i < ys.size(); ++i)
            if (std::isfinite(ys[i]) && std::isfinite(ys[i - 1])) cv::line(img, pt(i - 1), pt(i), colour, 2, cv::LINE_AA);
        if (ys.size() == 1) cv::circle(img, pt(0), 3, colour, cv::FILLED);
        cv::putText(img, series[s].first, cv::Point(w - right - 160, top + 20 + 18 * static_cast<int>(s)),
                    cv::FONT_HERSHEY_SIMPLEX, 0.5, colour, 1, cv::LINE_AA);
    }
    save(path, img);
}

void plot_bars(const std::filesystem::path& path, const std::vector<std::pair<std::string, double>>& bars,
               const std::string& title, double y_max) {
    const int w = std::max(400, 90 * static_cast<int>(bars.size()) + 80), h = 420, top = 40, bottom = 60, left = 40;
    cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::putText(img, title, cv::Point(left, 25), cv::FONT_HERSHEY_SIMPLEX, 0.6, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    const double plot_h = h - top - bottom;
    for (size_t i = 0; i < bars.size(); ++i) {
        const int x0 = left + 90 * static_cast<int>(i);
        const double v = std::clamp(bars[i].second / y_max, 0.0, 1.0);
        const int y0 = static_cast<int>(h - bottom - v * plot_h);
        cv::rectangle(img, cv::Point(x0, y0), cv::Point(x0 + 60, h - bottom), kPalette[i % 5], cv::FILLED);
        cv::putText(img, short_number(bars[i].second), cv::Point(x0, y0 - 5), cv::FONT_HERSHEY_SIMPLEX, 0.45,
                    cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
        cv::putText(img, bars[i].first, cv::Point(x0, h - bottom + 20), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                    cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    }
    cv::line(img, cv::Point(left - 5, h - bottom), cv::Point(w - 10, h - bottom), cv::Scalar(0, 0, 0));
    save(path, img);
}

cv::Mat tile_panels(const std::vector<cv::Mat>& panels, int panel_size) {
    if (panels.empty()) throw InputError("no panels to tile");
    cv::Mat out(panel_size, panel_size * static_cast<int>(panels.size()), CV_8UC3, cv::Scalar(0, 0, 0));
    for (size_t i = 0; i < panels.size(); ++i) {
        cv::Mat p = panels[i], u8, c3, r;
        if (p.depth() == CV_8U) u8 = p;
        else p.convertTo(u8, CV_8U, 255.0);
        if (u8.channels() == 1) cv::cvtColor(u8, c3, cv::COLOR_GRAY2BGR);
        else c3 = u8;
        cv::resize(c3, r, cv::Size(panel_size, panel_size), 0, 0, cv::INTER_LINEAR);
        r.copyTo(out(cv::Rect(panel_size * static_cast<int>(i), 0, panel_size, panel_size)));
    }
    return out;
}

}  // namespace camoseg
