#include "sct/synth.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sct/errors.hpp"
#include "sct/rng.hpp"

namespace sct {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed ^ (salt * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::size_t H = GlyphSet::kGlyphHeight;
constexpr std::size_t W = GlyphSet::kGlyphWidth;

std::vector<std::uint8_t> draw_glyph(Rng& rng) {
    std::vector<std::uint8_t> bmp(H * W, 0);
    const std::size_t strokes = 3 + rng.uniform_int(4);  // 3..6
    for (std::size_t s = 0; s < strokes; ++s) {
        const std::uint64_t kind = rng.uniform_int(3);
        if (kind == 0) {  // horizontal bar
            const std::size_t y = 1 + rng.uniform_int(H - 4);
            const std::size_t x0 = rng.uniform_int(W / 2);
            const std::size_t x1 = W / 2 + rng.uniform_int(W / 2);
            for (std::size_t x = x0; x <= x1 && x < W; ++x) {
                bmp[y * W + x] = 1;
                bmp[(y + 1) * W + x] = 1;
            }
        } else if (kind == 1) {  // vertical bar
            const std::size_t x = 1 + rng.uniform_int(W - 3);
            const std::size_t y0 = rng.uniform_int(H / 2);
            const std::size_t y1 = H / 2 + rng.uniform_int(H / 2);
            for (std::size_t y = y0; y <= y1 && y < H; ++y) {
                bmp[y * W + x] = 1;
                bmp[y * W + x + 1] = 1;
            }
        } else {  // diagonal
            long y = static_cast<long>(rng.uniform_int(H / 2));
            long x = static_cast<long>(rng.uniform_int(W - 2));
            const long dx = rng.uniform_int(2) == 0 ? 1 : -1;
            const std::size_t len = 6 + rng.uniform_int(H - 6);
            for (std::size_t i = 0; i < len; ++i) {
                if (y >= 0 && y < static_cast<long>(H) && x >= 0 &&
                    x + 1 < static_cast<long>(W)) {
                    bmp[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] = 1;
                    bmp[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x) + 1] = 1;
                }
                ++y;
                x += dx;
            }
        }
    }
    return bmp;
}

std::size_t hamming(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

}  // namespace

GlyphSet::GlyphSet(Alphabet alphabet, std::uint64_t seed)
    : alphabet_(std::move(alphabet)), seed_(seed) {
    bitmaps_.reserve(alphabet_.size());
    for (std::size_t i = 0; i < alphabet_.size(); ++i) {
        std::vector<std::uint8_t> bmp;
        for (std::uint64_t salt = 0;; ++salt) {
            Rng rng(mix(seed_, i * 1000003ULL + salt));
            bmp = draw_glyph(rng);
            bool distinct = true;
            for (const auto& prev : bitmaps_)
                if (hamming(bmp, prev) < 10) {
                    distinct = false;
                    break;
                }
            if (distinct) break;
        }
        bitmaps_.push_back(std::move(bmp));
    }
}

const std::vector<std::uint8_t>& GlyphSet::bitmap(int label) const {
    if (label < 1 || static_cast<std::size_t>(label) > bitmaps_.size())
        throw InvalidInput("glyph label out of range");
    return bitmaps_[static_cast<std::size_t>(label) - 1];
}

Image render_line(const GlyphSet& glyphs, const std::string& text, std::uint64_t seed) {
    const std::vector<int> labels = glyphs.alphabet().encode(text);
    if (labels.empty()) throw InvalidInput("render_line: empty text");

    Rng rng(mix(seed, 0x52454E44ULL));
    const std::size_t n = labels.size();

    std::vector<std::size_t> spacing(n, 0);
    std::vector<long> voff(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i + 1 < n && glyphs.max_spacing > 0)
            spacing[i] = rng.uniform_int(glyphs.max_spacing + 1);
        if (glyphs.max_voffset > 0)
            voff[i] = static_cast<long>(rng.uniform_int(2 * glyphs.max_voffset + 1)) -
                      static_cast<long>(glyphs.max_voffset);
    }

    std::size_t width = n * W;
    for (std::size_t i = 0; i < n; ++i) width += spacing[i];

    constexpr std::size_t canvas_h = 32;
    const long top_center = (canvas_h - H) / 2;
    Image img(canvas_h, width, 1.0);  // white background, ink = 0

    std::size_t x = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& bmp = glyphs.bitmap(labels[i]);
        const long top = top_center + voff[i];
        for (std::size_t r = 0; r < H; ++r) {
            const long y = top + static_cast<long>(r);
            if (y < 0 || y >= static_cast<long>(canvas_h)) continue;
            for (std::size_t c = 0; c < W; ++c)
                if (bmp[r * W + c])
                    img.at(static_cast<std::size_t>(y), x + c) = 0.0;
        }
        x += W + spacing[i];
    }

    if (glyphs.noise_prob > 0.0) {
        for (auto& px : img.pixels)
            if (rng.uniform() < glyphs.noise_prob) px = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    return img;
}

std::string generate_dataset(const GlyphSet& glyphs, const DatasetSpec& spec,
                             const std::string& out_dir) {
    if (spec.min_len < 1 || spec.max_len < spec.min_len)
        throw InvalidInput("generate_dataset: bad length range");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);

    const std::string manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
    std::ofstream manifest(manifest_path);
    if (!manifest) throw IoError("cannot write manifest: " + manifest_path);

    const Alphabet& alpha = glyphs.alphabet();
    for (std::size_t i = 0; i < spec.count; ++i) {
        // Everything about image i derives from its own mixed seed, so
        // generation order (or parallel generation) cannot change the output.
        const std::uint64_t iseed = mix(spec.seed, i);
        Rng rng(iseed);
        const std::size_t len =
            spec.min_len + rng.uniform_int(spec.max_len - spec.min_len + 1);
        std::string text;
        for (std::size_t j = 0; j < len; ++j)
            text += alpha.character(1 + static_cast<int>(rng.uniform_int(alpha.size())));

        const Image img = render_line(glyphs, text, iseed);
        char name[32];
        std::snprintf(name, sizeof(name), "line_%06zu.pgm", i);
        write_pgm(img, (fs::path(out_dir) / name).string());
        manifest << name << "\t" << text << "\n";
    }
    if (!manifest) throw IoError("short write: " + manifest_path);
    return manifest_path;
}

}  // namespace sct
