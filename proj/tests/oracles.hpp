#pragma once

// Brute-force reference implementations written straight from the documented
// operation contracts. They deliberately share no code with src/: each one is
// the naive O(everything) version of the rule it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "segloc/raster.hpp"

namespace oracle {

inline int round_half_away(double v) {
    return static_cast<int>(v < 0.0 ? std::ceil(v - 0.5) : std::floor(v + 0.5));
}

inline std::uint8_t gray_px(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int v = round_half_away(0.299 * r + 0.587 * g + 0.114 * b);
    return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

inline segloc::GrayImage grayscale(const segloc::RasterImage& img) {
    segloc::GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            out.at(x, y) = gray_px(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
        }
    }
    return out;
}

// Per-pixel window scan; out-of-bounds samples replicate the border pixel,
// which index clamping realizes directly.
inline segloc::GrayImage erode(const segloc::GrayImage& img, int k) {
    const int r = k / 2;
    segloc::GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            int lo = 255;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    const int sx = std::clamp(x + dx, 0, img.width - 1);
                    const int sy = std::clamp(y + dy, 0, img.height - 1);
                    lo = std::min(lo, static_cast<int>(img.at(sx, sy)));
                }
            }
            out.at(x, y) = static_cast<std::uint8_t>(lo);
        }
    }
    return out;
}

inline segloc::BinaryMask threshold(const segloc::GrayImage& img, int t) {
    segloc::BinaryMask out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) out.set(x, y, img.at(x, y) > t);
    }
    return out;
}

inline std::optional<segloc::BBox> tight_box(const segloc::BinaryMask& m) {
    int x0 = m.width, y0 = m.height, x1 = -1, y1 = -1;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) return std::nullopt;
    return segloc::BBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

// Full authentic-region pipeline: grayscale, invert, 9x9 min filter,
// strict threshold at 50, tight box.
inline std::optional<segloc::BBox> region(const segloc::RasterImage& img) {
    segloc::GrayImage gray = grayscale(img);
    for (auto& px : gray.data) px = static_cast<std::uint8_t>(255 - px);
    return tight_box(threshold(erode(gray, 9), 50));
}

// Standalone scalar bilinear interpolation at a continuous point: fractional
// weights from the unclamped floor, neighbor indices clamped to the border.
inline double bilinear_at(const std::vector<double>& plane, int w, int h, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const double wx = x - fx, wy = y - fy;
    const auto cl = [](double v, int hi) {
        return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(hi)));
    };
    const int x0 = cl(fx, w - 1), x1 = cl(fx + 1, w - 1);
    const int y0 = cl(fy, h - 1), y1 = cl(fy + 1, h - 1);
    const auto at = [&](int xx, int yy) { return plane[static_cast<std::size_t>(yy) * w + xx]; };
    return (1.0 - wy) * ((1.0 - wx) * at(x0, y0) + wx * at(x1, y0)) +
           wy * ((1.0 - wx) * at(x0, y1) + wx * at(x1, y1));
}

// Direct negative log softmax probability of logits[0]. Test logits are small,
// so the naive unshifted form is exact enough to serve as the oracle.
inline double nll_first(const std::vector<double>& logits) {
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l);
    return -std::log(std::exp(logits[0]) / denom);
}

} // namespace oracle
