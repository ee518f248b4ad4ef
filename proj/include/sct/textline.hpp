#ifndef SCT_TEXTLINE_HPP
#define SCT_TEXTLINE_HPP

#include <cstddef>
#include <vector>

#include "sct/image.hpp"

namespace sct {

// Height-normalized text-line raster.
struct TextLineImage {
    Image image;
};

struct WindowConfig {
    std::vector<std::size_t> window_widths{32};  // one per scale
    std::size_t stride = 4;
    std::size_t patch_size = 32;   // square patch edge after resize
    std::size_t pad_width = 256;   // target padded width for training batches

    std::size_t max_window_width() const;
    void validate() const;
};

// Sliding-window crops, all scales resized to patch_size x patch_size and
// stacked as channels: patches[t * scales * P * P ...], row-major per patch.
struct WindowSequence {
    std::size_t count = 0;        // T
    std::size_t scales = 0;
    std::size_t patch_size = 0;
    std::vector<double> patches;  // [T, scales, P, P]
    std::vector<long> source_offsets;  // left edge of the widest window per position

    const double* patch(std::size_t t) const {
        return patches.data() + t * scales * patch_size * patch_size;
    }
};

// Scale to target_height preserving aspect; optionally pad or shrink to
// max_width. Padding uses the median border intensity.
TextLineImage normalize_line(const Image& raw, std::size_t target_height,
                             std::size_t max_width, bool pad);

std::size_t window_count(std::size_t width, std::size_t window, std::size_t stride);

WindowSequence extract_windows(const TextLineImage& line, const WindowConfig& cfg);

}  // namespace sct

#endif  // SCT_TEXTLINE_HPP
