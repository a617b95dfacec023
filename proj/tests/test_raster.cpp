#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <tuple>

#include "oracles.hpp"
#include "segloc/png_io.hpp"
#include "segloc/raster.hpp"
#include "segloc/rng.hpp"

using namespace segloc;

namespace {

RasterImage random_image(Rng& rng, int w, int h) {
    RasterImage img(w, h);
    for (auto& px : img.data) px = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

GrayImage random_gray(Rng& rng, int w, int h) {
    GrayImage img(w, h);
    for (auto& px : img.data) px = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

BinaryMask random_mask(Rng& rng, int w, int h) {
    BinaryMask m(w, h);
    for (auto& px : m.data) px = rng.flip() ? 1 : 0;
    return m;
}

} // namespace

TEST_CASE("rounding clamps and rounds half away from zero") {
    CHECK(clamp_round_u8(76.245) == 76);
    CHECK(clamp_round_u8(165.75) == 166);
    CHECK(clamp_round_u8(0.5) == 1);
    CHECK(clamp_round_u8(-3.0) == 0);
    CHECK(clamp_round_u8(260.0) == 255);
}

TEST_CASE("grayscale uses 0.299/0.587/0.114 weights") {
    RasterImage img(3, 1);
    img.at(0, 0, 0) = 255;                     // red
    img.at(1, 0, 1) = 255;                     // green
    img.at(2, 0, 2) = 255;                     // blue
    const GrayImage g = to_grayscale(img);
    CHECK(g.at(0, 0) == 76);   // 0.299*255 = 76.245
    CHECK(g.at(1, 0) == 150);  // 0.587*255 = 149.685
    CHECK(g.at(2, 0) == 29);   // 0.114*255 = 29.07
}

TEST_CASE("grayscale matches the direct weighted-sum oracle") {
    Rng rng(101);
    const RasterImage img = random_image(rng, 37, 23);
    const GrayImage got = to_grayscale(img);
    const GrayImage want = oracle::grayscale(img);
    CHECK(got.data == want.data);
}

TEST_CASE("erosion of a constant image is the identity") {
    GrayImage img(12, 12, 128);
    CHECK(erode_min(img, 9).data == img.data);
}

TEST_CASE("a single dark pixel erodes into its kernel window") {
    GrayImage img(20, 20, 255);
    img.at(10, 10) = 0;
    const GrayImage out = erode_min(img, 9);
    for (int y = 0; y < 20; ++y) {
        for (int x = 0; x < 20; ++x) {
            const bool in_window = std::abs(x - 10) <= 4 && std::abs(y - 10) <= 4;
            CHECK(out.at(x, y) == (in_window ? 0 : 255));
        }
    }
}

TEST_CASE("3x3 erosion of a 3x3 image pins the center to the global minimum") {
    GrayImage img(3, 3);
    const std::uint8_t vals[9] = {52, 17, 93, 8, 240, 121, 77, 64, 199};
    for (int i = 0; i < 9; ++i) img.data[i] = vals[i];
    CHECK(erode_min(img, 3).at(1, 1) == 8);
}

TEST_CASE("erosion never exceeds the input and kernel 1 is the identity") {
    Rng rng(102);
    for (int trial = 0; trial < 10; ++trial) {
        const GrayImage img = random_gray(rng, 15 + static_cast<int>(rng.below(20)),
                                          15 + static_cast<int>(rng.below(20)));
        const GrayImage out = erode_min(img, 9);
        for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(out.data[i] <= img.data[i]);
        CHECK(erode_min(img, 1).data == img.data);
    }
}

TEST_CASE("erosion matches the brute-force window scan") {
    Rng rng(103);
    const GrayImage img = random_gray(rng, 33, 29);
    for (int k : {3, 5, 9}) {
        CHECK(erode_min(img, k).data == oracle::erode(img, k).data);
    }
}

TEST_CASE("even or zero erosion kernels are rejected") {
    GrayImage img(4, 4, 7);
    CHECK_THROWS_AS(erode_min(img, 2), Error);
    CHECK_THROWS_AS(erode_min(img, 0), Error);
}

TEST_CASE("threshold is strictly greater-than") {
    GrayImage img(3, 1);
    img.at(0, 0) = 50;
    img.at(1, 0) = 51;
    img.at(2, 0) = 0;
    const BinaryMask m = threshold_above(img, 50);
    CHECK_FALSE(m.at(0, 0));
    CHECK(m.at(1, 0));
    CHECK_FALSE(m.at(2, 0));
}

TEST_CASE("blend follows round(c*crop + (1-c)*bg) inside the mask") {
    RasterImage bg = RasterImage::filled(10, 10, 0, 200, 0);
    RasterImage crop = RasterImage::filled(3, 3, 100, 0, 0);
    BinaryMask mask(3, 3, true);
    mask.set(1, 1, false);
    const BBox at{2, 3, 3, 3};
    const RasterImage out = blend_segment(bg, crop, mask, at, 0.5);
    CHECK(out.at(2, 3, 0) == 50);
    CHECK(out.at(2, 3, 1) == 100);
    CHECK(out.at(2, 3, 2) == 0);
    // masked-out pixel keeps the background
    CHECK(out.at(3, 4, 0) == 0);
    CHECK(out.at(3, 4, 1) == 200);
    // pixels outside `at` untouched
    CHECK(out.at(0, 0, 1) == 200);
}

TEST_CASE("blend at c=0.65 rounds 165.75 up and c=1 copies the crop exactly") {
    RasterImage bg = RasterImage::filled(5, 5, 0, 0, 0);
    RasterImage crop = RasterImage::filled(2, 2, 255, 255, 255);
    BinaryMask mask(2, 2, true);
    const RasterImage at65 = blend_segment(bg, crop, mask, BBox{1, 1, 2, 2}, 0.65);
    CHECK(at65.at(1, 1, 0) == 166);
    const RasterImage at100 = blend_segment(bg, crop, mask, BBox{1, 1, 2, 2}, 1.0);
    CHECK(at100.at(1, 1, 0) == 255);
    CHECK(at100.at(2, 2, 2) == 255);
}

TEST_CASE("blend rejects out-of-bounds placement") {
    RasterImage bg = RasterImage::filled(10, 10, 0, 0, 0);
    RasterImage crop = RasterImage::filled(3, 3, 9, 9, 9);
    BinaryMask mask(3, 3, true);
    try {
        blend_segment(bg, crop, mask, BBox{8, 8, 3, 3}, 0.5);
        FAIL("expected an invalid-placement error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidPlacement);
    }
}

TEST_CASE("identity transform is bit-exact") {
    Rng rng(104);
    const RasterImage crop = random_image(rng, 9, 7);
    BinaryMask mask = random_mask(rng, 9, 7);
    mask.set(4, 3, true); // keep nonempty
    const TransformParams id{};
    auto [out_crop, out_mask] = transform_segment(crop, mask, id);
    CHECK(out_crop.data == crop.data);
    CHECK(out_mask.data == mask.data);
}

TEST_CASE("horizontal flip is an involution") {
    Rng rng(105);
    const RasterImage crop = random_image(rng, 8, 5);
    const BinaryMask mask = random_mask(rng, 8, 5);
    CHECK(flip_horizontal(flip_horizontal(crop)).data == crop.data);
    CHECK(flip_horizontal(flip_horizontal(mask)).data == mask.data);
}

TEST_CASE("rotation by 90 degrees is the exact grid permutation") {
    // 2x3 crop: value encodes position; source (x,y) must land at (h-1-y, x).
    const int w = 2, h = 3;
    RasterImage crop(w, h);
    BinaryMask mask(w, h, true);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) crop.at(x, y, 0) = static_cast<std::uint8_t>(10 * y + x + 1);
    }
    auto [rot, rot_mask] = rotate_expand(crop, mask, 90.0);
    REQUIRE(rot.width == h);
    REQUIRE(rot.height == w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            CHECK(rot.at(h - 1 - y, x, 0) == crop.at(x, y, 0));
            CHECK(rot_mask.at(h - 1 - y, x) == mask.at(x, y));
        }
    }
}

TEST_CASE("four successive 90-degree rotations reproduce the original") {
    Rng rng(106);
    RasterImage crop = random_image(rng, 6, 4);
    BinaryMask mask(6, 4, true);
    RasterImage cur = crop;
    BinaryMask cur_mask = mask;
    for (int i = 0; i < 4; ++i) std::tie(cur, cur_mask) = rotate_expand(cur, cur_mask, 90.0);
    CHECK(cur.width == crop.width);
    CHECK(cur.height == crop.height);
    CHECK(cur.data == crop.data);
    CHECK(cur_mask.data == mask.data);
}

TEST_CASE("rotation expands the canvas and marks unsupported pixels false") {
    RasterImage crop = RasterImage::filled(8, 8, 50, 50, 50);
    BinaryMask mask(8, 8, true);
    auto [rot, rot_mask] = rotate_expand(crop, mask, 45.0);
    CHECK(rot.width > 8);
    CHECK(rot.height > 8);
    // corners of the expanded canvas fall outside the rotated support
    CHECK_FALSE(rot_mask.at(0, 0));
    CHECK_FALSE(rot_mask.at(rot.width - 1, rot.height - 1));
    CHECK(rot_mask.count_true() > 0);
}

TEST_CASE("a transform that resamples away every masked pixel is rejected") {
    RasterImage crop = RasterImage::filled(3, 1, 10, 10, 10);
    BinaryMask mask(3, 1);
    mask.set(2, 0, true);
    TransformParams params{};
    params.scale = 1.0 / 3.0; // shrink to 1x1; the surviving sample is unmasked
    try {
        transform_segment(crop, mask, params);
        FAIL("expected a degenerate-segment error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateSegment);
    }
}

TEST_CASE("photometric jitter applies brightness then contrast about 128") {
    RasterImage crop = RasterImage::filled(1, 1, 100, 100, 100);
    BinaryMask mask(1, 1, true);
    TransformParams params{};
    params.brightness = 1.2;
    params.contrast = 0.8;
    auto [out, out_mask] = transform_segment(crop, mask, params);
    // 100*1.2 = 120; (120-128)*0.8+128 = 121.6 -> 122
    CHECK(out.at(0, 0, 0) == 122);
    CHECK(out_mask.at(0, 0));
}

TEST_CASE("bilinear resize matches the half-pixel-center formula") {
    Rng rng(107);
    const RasterImage img = random_image(rng, 11, 7);
    const int nw = 17, nh = 5;
    const RasterImage out = resize_bilinear(img, nw, nh);
    // independent check: channel planes as doubles + standalone bilinear oracle
    for (int c = 0; c < 3; ++c) {
        std::vector<double> plane(static_cast<std::size_t>(img.width) * img.height);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x)
                plane[static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, c);
        }
        for (int y = 0; y < nh; ++y) {
            for (int x = 0; x < nw; ++x) {
                const double sx = (x + 0.5) * img.width / nw - 0.5;
                const double sy = (y + 0.5) * img.height / nh - 0.5;
                const double want = oracle::bilinear_at(plane, img.width, img.height, sx, sy);
                CHECK(out.at(x, y, c) == clamp_round_u8(want));
            }
        }
    }
}

TEST_CASE("same-size resizes are identities") {
    Rng rng(108);
    const RasterImage img = random_image(rng, 9, 13);
    CHECK(resize_bilinear(img, 9, 13).data == img.data);
    const BinaryMask mask = random_mask(rng, 9, 13);
    CHECK(resize_nearest(mask, 9, 13).data == mask.data);
}

TEST_CASE("tight bbox of a mask block") {
    BinaryMask m(12, 12);
    for (int y = 4; y <= 9; ++y) {
        for (int x = 2; x <= 7; ++x) m.set(x, y, true);
    }
    const auto box = tight_bbox(m);
    REQUIRE(box.has_value());
    CHECK(*box == BBox{2, 4, 6, 6});
    CHECK_FALSE(tight_bbox(BinaryMask(5, 5)).has_value());
}

TEST_CASE("crop helpers copy the boxed window") {
    Rng rng(109);
    const RasterImage img = random_image(rng, 10, 8);
    const BBox box{3, 2, 4, 5};
    const RasterImage crop = crop_image(img, box);
    REQUIRE(crop.width == 4);
    REQUIRE(crop.height == 5);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 4; ++x) {
            for (int c = 0; c < 3; ++c) CHECK(crop.at(x, y, c) == img.at(3 + x, 2 + y, c));
        }
    }
    CHECK_THROWS_AS(crop_image(img, BBox{8, 0, 4, 4}), Error);
}

TEST_CASE("png round-trips rgb images, gray images, and masks exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "segloc_png_test";
    fs::create_directories(dir);
    Rng rng(110);

    const RasterImage img = random_image(rng, 21, 13);
    write_png(dir / "rgb.png", img);
    const RasterImage back = read_png_rgb(dir / "rgb.png");
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.data == img.data);

    const GrayImage gray = random_gray(rng, 9, 17);
    write_png(dir / "gray.png", gray);
    CHECK(read_png_gray(dir / "gray.png").data == gray.data);

    const BinaryMask mask = random_mask(rng, 14, 6);
    write_png(dir / "mask.png", mask);
    CHECK(read_png_mask(dir / "mask.png").data == mask.data);

    CHECK_THROWS_AS(read_png_rgb(dir / "absent.png"), Error);
    fs::remove_all(dir);
}

TEST_CASE("png bytes are reproducible across writes") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "segloc_png_bytes";
    fs::create_directories(dir);
    Rng rng(111);
    const RasterImage img = random_image(rng, 33, 31);
    write_png(dir / "a.png", img);
    write_png(dir / "b.png", img);
    std::ifstream fa(dir / "a.png", std::ios::binary), fb(dir / "b.png", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
    fs::remove_all(dir);
}
