#include "sct/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "sct/errors.hpp"

namespace sct {

Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w) {
    if (src.height == 0 || src.width == 0) throw InvalidInput("resize_bilinear: empty source");
    if (out_h == 0 || out_w == 0) throw InvalidInput("resize_bilinear: empty target");
    Image dst(out_h, out_w);
    const double sy = static_cast<double>(src.height) / static_cast<double>(out_h);
    const double sx = static_cast<double>(src.width) / static_cast<double>(out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        // Pixel centers map at (i + 0.5) * scale - 0.5.
        double fy = (static_cast<double>(r) + 0.5) * sy - 0.5;
        fy = std::max(0.0, std::min(fy, static_cast<double>(src.height - 1)));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t c = 0; c < out_w; ++c) {
            double fx = (static_cast<double>(c) + 0.5) * sx - 0.5;
            fx = std::max(0.0, std::min(fx, static_cast<double>(src.width - 1)));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = src.at(y0, x0) * (1.0 - wx) + src.at(y0, x1) * wx;
            const double bot = src.at(y1, x0) * (1.0 - wx) + src.at(y1, x1) * wx;
            dst.at(r, c) = std::clamp(top * (1.0 - wy) + bot * wy, 0.0, 1.0);
        }
    }
    return dst;
}

namespace {

int next_pgm_token(std::istream& in, std::string& tok) {
    tok.clear();
    int ch = in.get();
    // Skip whitespace and '#' comment lines.
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    return tok.empty() ? EOF : 0;
}

}  // namespace

Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    std::string tok;
    if (next_pgm_token(in, tok) == EOF || tok != "P5")
        throw InvalidInput("not a binary PGM (P5): " + path);
    std::size_t w = 0, h = 0;
    unsigned long maxval = 0;
    try {
        if (next_pgm_token(in, tok) == EOF) throw InvalidInput("");
        w = std::stoul(tok);
        if (next_pgm_token(in, tok) == EOF) throw InvalidInput("");
        h = std::stoul(tok);
        if (next_pgm_token(in, tok) == EOF) throw InvalidInput("");
        maxval = std::stoul(tok);
    } catch (const std::exception&) {
        throw InvalidInput("malformed PGM header: " + path);
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
        throw InvalidInput("unsupported PGM header: " + path);
    std::vector<std::uint8_t> raw(w * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw IoError("truncated PGM payload: " + path);
    Image img(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i)
        img.pixels[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
    return img;
}

void write_pgm(const Image& img, const std::string& path) {
    if (img.height == 0 || img.width == 0) throw InvalidInput("write_pgm: empty image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> raw(img.pixels.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = std::clamp(img.pixels[i], 0.0, 1.0);
        raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("short write: " + path);
}

}  // namespace sct
