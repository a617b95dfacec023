#pragma once

#include <filesystem>

#include "segloc/raster.hpp"

namespace segloc {

/// Reads an 8-bit PNG as RGB; palette/gray/alpha inputs are expanded or
/// stripped to interleaved RGB.
RasterImage read_png_rgb(const std::filesystem::path& path);

/// Reads an 8-bit PNG as a single gray channel (RGB inputs are converted).
GrayImage read_png_gray(const std::filesystem::path& path);

/// Reads a mask PNG: gray value > 127 counts as true.
BinaryMask read_png_mask(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RasterImage& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);

/// Masks are stored as single-channel PNG, 0 = false, 255 = true.
void write_png(const std::filesystem::path& path, const BinaryMask& mask);

} // namespace segloc
