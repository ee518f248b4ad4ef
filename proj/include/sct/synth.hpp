#ifndef SCT_SYNTH_HPP
#define SCT_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sct/image.hpp"
#include "sct/lm.hpp"

namespace sct {

// Procedurally generated glyphs: seeded random strokes on a 24x16 grid,
// regenerated until all pairs differ in at least 10 pixels.
class GlyphSet {
public:
    static constexpr std::size_t kGlyphHeight = 24;
    static constexpr std::size_t kGlyphWidth = 16;

    GlyphSet(Alphabet alphabet, std::uint64_t seed);

    const Alphabet& alphabet() const { return alphabet_; }
    std::uint64_t seed() const { return seed_; }
    // Bitmap of the glyph for class label (1-based), row-major, 1 = ink.
    const std::vector<std::uint8_t>& bitmap(int label) const;

    std::size_t max_spacing = 4;   // horizontal gap range [0, max_spacing]
    std::size_t max_voffset = 2;   // vertical jitter range [-max_voffset, +max_voffset]
    double noise_prob = 0.01;      // salt-and-pepper probability

private:
    Alphabet alphabet_;
    std::uint64_t seed_;
    std::vector<std::vector<std::uint8_t>> bitmaps_;
};

// Concatenate glyphs with seeded jitter and noise onto a height-32 canvas.
Image render_line(const GlyphSet& glyphs, const std::string& text, std::uint64_t seed);

struct DatasetSpec {
    std::size_t count = 100;
    std::size_t min_len = 1;
    std::size_t max_len = 5;
    std::uint64_t seed = 0;
};

// Writes PGM images plus a TSV manifest (image TAB transcript); returns the
// manifest path. Fully reproducible from the seed.
std::string generate_dataset(const GlyphSet& glyphs, const DatasetSpec& spec,
                             const std::string& out_dir);

}  // namespace sct

#endif  // SCT_SYNTH_HPP
