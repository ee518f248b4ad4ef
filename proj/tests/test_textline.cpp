#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sct/errors.hpp"
#include "sct/textline.hpp"

using namespace sct;

namespace {

Image gradient_image(std::size_t h, std::size_t w) {
    Image img(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            img.at(r, c) = static_cast<double>(r * w + c) / static_cast<double>(h * w);
    return img;
}

}  // namespace

TEST_CASE("window_count matches the closed form") {
    CHECK(window_count(256, 32, 4) == 57);
    CHECK(window_count(32, 32, 4) == 1);
    CHECK(window_count(40, 32, 4) == 3);
    CHECK(window_count(512, 40, 8) == 60);
    CHECK_THROWS_AS(window_count(16, 32, 4), InvalidInput);
}

TEST_CASE("normalize_line pads a short image to the target width") {
    // 64 wide x 16 high: proportional width at height 32 is 128.
    Image raw(16, 64, 0.5);
    TextLineImage line = normalize_line(raw, 32, 256, true);
    CHECK(line.image.height == 32);
    CHECK(line.image.width == 256);
    // Left half carries the rescale, right half the background fill.
    CHECK(line.image.at(16, 10) == doctest::Approx(0.5));
    CHECK(line.image.at(16, 200) == doctest::Approx(0.5));  // border median of constant image
}

TEST_CASE("normalize_line shrinks an over-wide image") {
    Image raw = gradient_image(32, 1024);
    TextLineImage line = normalize_line(raw, 32, 256, true);
    CHECK(line.image.height == 32);
    CHECK(line.image.width == 256);
}

TEST_CASE("normalize_line without padding keeps the proportional width") {
    Image raw = gradient_image(20, 100);
    TextLineImage line = normalize_line(raw, 32, 0, false);
    CHECK(line.image.height == 32);
    CHECK(line.image.width == 160);
}

TEST_CASE("normalize_line rejects bad rasters") {
    CHECK_THROWS_AS(normalize_line(Image(), 32, 256, true), InvalidInput);
    Image bad(4, 4, 0.5);
    bad.at(1, 1) = std::nan("");
    CHECK_THROWS_AS(normalize_line(bad, 32, 256, true), InvalidInput);
}

TEST_CASE("extract_windows produces the expected geometry") {
    WindowConfig cfg;
    cfg.window_widths = {32};
    cfg.stride = 4;
    TextLineImage line{gradient_image(32, 256)};
    WindowSequence seq = extract_windows(line, cfg);
    CHECK(seq.count == 57);
    CHECK(seq.scales == 1);
    for (std::size_t t = 1; t < seq.count; ++t)
        CHECK(seq.source_offsets[t] - seq.source_offsets[t - 1] == 4);
}

TEST_CASE("multi-scale windows stack as channels") {
    WindowConfig cfg;
    cfg.window_widths = {24, 32, 40};
    cfg.stride = 4;
    TextLineImage line{gradient_image(32, 256)};
    WindowSequence seq = extract_windows(line, cfg);
    CHECK(seq.count == window_count(256, 40, 4));
    CHECK(seq.scales == 3);
    CHECK(seq.patches.size() == seq.count * 3 * 32 * 32);
    for (double v : seq.patches) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("a line narrower than the window is padded, not rejected") {
    WindowConfig cfg;
    cfg.window_widths = {32};
    cfg.stride = 4;
    TextLineImage line{gradient_image(32, 20)};
    WindowSequence seq = extract_windows(line, cfg);
    CHECK(seq.count == 1);
}

TEST_CASE("window extraction is deterministic") {
    WindowConfig cfg;
    cfg.window_widths = {24, 32};
    cfg.stride = 4;
    TextLineImage line{gradient_image(32, 120)};
    WindowSequence a = extract_windows(line, cfg);
    WindowSequence b = extract_windows(line, cfg);
    CHECK(a.patches == b.patches);
    CHECK(a.source_offsets == b.source_offsets);
}

TEST_CASE("PGM round-trip") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "sct_test_roundtrip.pgm").string();
    Image img(8, 12);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<double>(i % 256) / 255.0;
    write_pgm(img, path);
    Image back = read_pgm(path);
    REQUIRE(back.height == 8);
    REQUIRE(back.width == 12);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(back.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1.0 / 255.0));
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_pgm(path), IoError);
}
