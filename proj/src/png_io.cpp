#include "segloc/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace segloc {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads any 8/16-bit PNG into tightly packed 8-bit rows with the requested
// channel count (3 = RGB, 1 = gray).
std::vector<std::uint8_t> read_png_raw(const std::filesystem::path& path, int channels, int& w, int& h) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) fail(ErrorKind::Io, "cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorKind::Io, "png_create_info_struct failed");
    }
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Io, "failed to decode " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (channels == 3) {
        if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
            png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_gray_to_rgb(png);
        }
    } else {
        if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) {
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        }
    }
    png_read_update_info(png, info);

    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<std::size_t>(w) * channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Io, "unexpected channel layout in " + path.string());
    }
    out.resize(rowbytes * h);
    row_ptrs.resize(h);
    for (int y = 0; y < h; ++y) row_ptrs[y] = out.data() + rowbytes * y;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png_raw(const std::filesystem::path& path, const std::uint8_t* data, int w, int h,
                   int channels) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) fail(ErrorKind::Io, "cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::Io, "png_create_info_struct failed");
    }
    std::vector<png_bytep> row_ptrs(h);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "failed to encode " + path.string());
    }
    png_init_io(png, fp.get());
    // Fixed settings keep output byte-reproducible.
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, w, h, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y) {
        row_ptrs[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * w * channels);
    }
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

RasterImage read_png_rgb(const std::filesystem::path& path) {
    RasterImage img;
    img.data = read_png_raw(path, 3, img.width, img.height);
    return img;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
    GrayImage img;
    img.data = read_png_raw(path, 1, img.width, img.height);
    return img;
}

BinaryMask read_png_mask(const std::filesystem::path& path) {
    GrayImage g = read_png_gray(path);
    BinaryMask mask(g.width, g.height);
    for (std::size_t i = 0; i < g.data.size(); ++i) mask.data[i] = g.data[i] > 127 ? 1 : 0;
    return mask;
}

void write_png(const std::filesystem::path& path, const RasterImage& img) {
    write_png_raw(path, img.data.data(), img.width, img.height, 3);
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
    write_png_raw(path, img.data.data(), img.width, img.height, 1);
}

void write_png(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> bytes(mask.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
    write_png_raw(path, bytes.data(), mask.width, mask.height, 1);
}

} // namespace segloc
