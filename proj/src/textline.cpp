#include "sct/textline.hpp"

#include <algorithm>
#include <cmath>

#include "sct/errors.hpp"

namespace sct {

std::size_t WindowConfig::max_window_width() const {
    return *std::max_element(window_widths.begin(), window_widths.end());
}

void WindowConfig::validate() const {
    if (window_widths.empty()) throw InvalidConfig("no window widths");
    if (stride < 1) throw InvalidConfig("stride must be >= 1");
    if (patch_size < 8) throw InvalidConfig("patch size must be >= 8");
    for (std::size_t w : window_widths)
        if (w < stride) throw InvalidConfig("window width below stride");
}

namespace {

double median_border_intensity(const Image& img) {
    std::vector<double> border;
    border.reserve(2 * (img.height + img.width));
    for (std::size_t c = 0; c < img.width; ++c) {
        border.push_back(img.at(0, c));
        border.push_back(img.at(img.height - 1, c));
    }
    for (std::size_t r = 0; r < img.height; ++r) {
        border.push_back(img.at(r, 0));
        border.push_back(img.at(r, img.width - 1));
    }
    if (border.empty()) return 1.0;
    const std::size_t mid = border.size() / 2;
    std::nth_element(border.begin(), border.begin() + mid, border.end());
    return border[mid];
}

}  // namespace

TextLineImage normalize_line(const Image& raw, std::size_t target_height,
                             std::size_t max_width, bool pad) {
    if (raw.height == 0 || raw.width == 0) throw InvalidInput("normalize_line: empty raster");
    if (target_height < 8) throw InvalidInput("normalize_line: target height must be >= 8");
    for (double v : raw.pixels)
        if (!std::isfinite(v)) throw InvalidInput("normalize_line: non-finite pixel");

    std::size_t prop_width = static_cast<std::size_t>(std::llround(
        static_cast<double>(raw.width) * static_cast<double>(target_height) /
        static_cast<double>(raw.height)));
    prop_width = std::max<std::size_t>(prop_width, 1);

    if (pad && prop_width > max_width) {
        return {resize_bilinear(raw, target_height, max_width)};
    }
    Image scaled = resize_bilinear(raw, target_height, prop_width);
    if (!pad || prop_width == max_width) return {std::move(scaled)};

    const double background = median_border_intensity(scaled);
    Image out(target_height, max_width, background);
    for (std::size_t r = 0; r < target_height; ++r)
        for (std::size_t c = 0; c < prop_width; ++c)
            out.at(r, c) = scaled.at(r, c);
    return {std::move(out)};
}

std::size_t window_count(std::size_t width, std::size_t window, std::size_t stride) {
    if (stride < 1) throw InvalidInput("window_count: stride must be >= 1");
    if (window > width) throw InvalidInput("window_count: window wider than image");
    return (width - window) / stride + 1;
}

WindowSequence extract_windows(const TextLineImage& line, const WindowConfig& cfg) {
    cfg.validate();
    const Image& src = line.image;
    if (src.height == 0 || src.width == 0) throw InvalidInput("extract_windows: empty line");

    const std::size_t w_max = cfg.max_window_width();

    // A line narrower than the widest window is padded up to it.
    Image padded;
    const Image* img = &src;
    if (src.width < w_max) {
        const double background = median_border_intensity(src);
        padded = Image(src.height, w_max, background);
        for (std::size_t r = 0; r < src.height; ++r)
            for (std::size_t c = 0; c < src.width; ++c)
                padded.at(r, c) = src.at(r, c);
        img = &padded;
    }

    const std::size_t T = window_count(img->width, w_max, cfg.stride);
    const std::size_t S = cfg.window_widths.size();
    const std::size_t P = cfg.patch_size;

    WindowSequence seq;
    seq.count = T;
    seq.scales = S;
    seq.patch_size = P;
    seq.patches.resize(T * S * P * P);
    seq.source_offsets.resize(T);

    for (std::size_t t = 0; t < T; ++t) {
        const long left_max = static_cast<long>(t * cfg.stride);
        seq.source_offsets[t] = left_max;
        for (std::size_t s = 0; s < S; ++s) {
            const std::size_t w = cfg.window_widths[s];
            // All scales share the center of the widest window at this position.
            const long left = left_max + (static_cast<long>(w_max) - static_cast<long>(w)) / 2;
            Image crop(img->height, w);
            for (std::size_t r = 0; r < img->height; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    long x = left + static_cast<long>(c);
                    x = std::clamp(x, 0L, static_cast<long>(img->width) - 1);  // edge replication
                    crop.at(r, c) = img->at(r, static_cast<std::size_t>(x));
                }
            }
            const Image patch = resize_bilinear(crop, P, P);
            std::copy(patch.pixels.begin(), patch.pixels.end(),
                      seq.patches.begin() + (t * S + s) * P * P);
        }
    }
    return seq;
}

}  // namespace sct
