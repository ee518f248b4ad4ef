#ifndef SCT_IMAGE_HPP
#define SCT_IMAGE_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace sct {

// Row-major grayscale raster, values in [0, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;  // height * width

    Image() = default;
    Image(std::size_t h, std::size_t w, double fill = 0.0)
        : height(h), width(w), pixels(h * w, fill) {}

    double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
    double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
};

// Bilinear resize; output values clamped to [0, 1].
Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w);

// Binary PGM (P5), 8-bit, pixels mapped by /255.
Image read_pgm(const std::string& path);
void write_pgm(const Image& img, const std::string& path);

}  // namespace sct

#endif  // SCT_IMAGE_HPP
