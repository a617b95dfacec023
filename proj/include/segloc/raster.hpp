#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "segloc/error.hpp"

namespace segloc {

/// Interleaved 8-bit RGB image.
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data; // width * height * 3, row major

    RasterImage() = default;
    RasterImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    static RasterImage filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Single-channel 8-bit image.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// Per-pixel boolean mask, stored as 0/1 bytes.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

    std::size_t count_true() const;
};

/// Axis-aligned box, top-left anchored, w/h >= 1.
struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool inside(int image_w, int image_h) const {
        return w >= 1 && h >= 1 && x >= 0 && y >= 0 && x + w <= image_w && y + h <= image_h;
    }
    bool operator==(const BBox&) const = default;
};

/// Geometric + photometric jitter applied to a segment before pasting.
/// Order of application: hflip, scale, rotation, brightness, contrast.
struct TransformParams {
    double angle = 0.0;      // degrees, [0, 360)
    double scale = 1.0;      // sampled in [0.5, 1.5]
    bool hflip = false;
    double brightness = 1.0; // multiplicative, sampled in [0.6, 1.4]
    double contrast = 1.0;   // multiplicative around 128, sampled in [0.6, 1.4]

    bool operator==(const TransformParams&) const = default;
};

/// Rounds half away from zero and clamps to [0, 255].
std::uint8_t clamp_round_u8(double v);

/// gray = round(0.299 R + 0.587 G + 0.114 B)
GrayImage to_grayscale(const RasterImage& img);

/// Minimum filter over a kernel x kernel window; out-of-bounds samples
/// replicate the border pixel. Kernel must be odd and >= 1.
GrayImage erode_min(const GrayImage& img, int kernel);

/// mask = pixel > level (strict).
BinaryMask threshold_above(const GrayImage& img, std::uint8_t level);

RasterImage flip_horizontal(const RasterImage& img);
BinaryMask flip_horizontal(const BinaryMask& mask);

/// Bilinear resample with half-pixel centers, border clamped.
RasterImage resize_bilinear(const RasterImage& img, int new_w, int new_h);
BinaryMask resize_nearest(const BinaryMask& mask, int new_w, int new_h);

/// Rotates crop and mask about the crop center, expanding the canvas so the
/// full rotated support fits. Crop is sampled bilinearly, mask by nearest
/// neighbor; destination pixels outside the source support come back false.
std::pair<RasterImage, BinaryMask> rotate_expand(const RasterImage& crop, const BinaryMask& mask,
                                                 double angle_deg);

/// Full segment transform chain: hflip, scale, rotate, then brightness and
/// contrast on masked pixels. Throws DegenerateSegment if no masked pixel
/// survives.
std::pair<RasterImage, BinaryMask> transform_segment(const RasterImage& crop, const BinaryMask& mask,
                                                     const TransformParams& params);

/// out = round(c * crop + (1 - c) * bg) inside the mask, bg elsewhere.
/// `at` must lie fully inside bg and match the crop/mask dimensions.
RasterImage blend_segment(const RasterImage& bg, const RasterImage& crop, const BinaryMask& mask,
                          const BBox& at, double coeff);

/// Tight bounding box of true pixels; nullopt when the mask is empty.
std::optional<BBox> tight_bbox(const BinaryMask& mask);

/// Copies out the sub-rectangle `box`, which must lie inside the source.
RasterImage crop_image(const RasterImage& img, const BBox& box);
BinaryMask crop_mask(const BinaryMask& mask, const BBox& box);

} // namespace segloc
