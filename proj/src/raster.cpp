#include "segloc/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace segloc {

namespace {

constexpr double kPi = 3.14159265358979323846;

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Snaps cos/sin of cardinal angles so 90/180/270 degree rotations stay exact
// pixel permutations.
double snap_trig(double v) {
    for (double target : {0.0, 1.0, -1.0}) {
        if (std::fabs(v - target) < 1e-12) return target;
    }
    return v;
}

double bilinear_sample(const RasterImage& img, double x, double y, int c) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0;
    double fy = y - y0;
    int x0c = clampi(x0, 0, img.width - 1);
    int x1c = clampi(x0 + 1, 0, img.width - 1);
    int y0c = clampi(y0, 0, img.height - 1);
    int y1c = clampi(y0 + 1, 0, img.height - 1);
    double top = (1.0 - fx) * img.at(x0c, y0c, c) + fx * img.at(x1c, y0c, c);
    double bot = (1.0 - fx) * img.at(x0c, y1c, c) + fx * img.at(x1c, y1c, c);
    return (1.0 - fy) * top + fy * bot;
}

} // namespace

RasterImage RasterImage::filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    RasterImage img(w, h);
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        img.data[i] = r;
        img.data[i + 1] = g;
        img.data[i + 2] = b;
    }
    return img;
}

std::size_t BinaryMask::count_true() const {
    std::size_t n = 0;
    for (std::uint8_t v : data) n += v;
    return n;
}

std::uint8_t clamp_round_u8(double v) {
    long long r = std::llround(v);
    if (r < 0) return 0;
    if (r > 255) return 255;
    return static_cast<std::uint8_t>(r);
}

GrayImage to_grayscale(const RasterImage& img) {
    GrayImage out(img.width, img.height);
    const std::uint8_t* p = img.data.data();
    for (std::size_t i = 0; i < out.data.size(); ++i, p += 3) {
        out.data[i] = clamp_round_u8(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
    }
    return out;
}

GrayImage erode_min(const GrayImage& img, int kernel) {
    require(kernel >= 1 && kernel % 2 == 1, ErrorKind::InvalidArgument,
            "erosion kernel must be odd and >= 1, got " + std::to_string(kernel));
    if (kernel == 1) return img;
    const int r = kernel / 2;

    // Separable: horizontal window minimum, then vertical, both with
    // replicated borders (clamped sample coordinates).
    GrayImage tmp(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            std::uint8_t m = 255;
            for (int dx = -r; dx <= r; ++dx) {
                m = std::min(m, img.at(clampi(x + dx, 0, img.width - 1), y));
            }
            tmp.at(x, y) = m;
        }
    }
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            std::uint8_t m = 255;
            for (int dy = -r; dy <= r; ++dy) {
                m = std::min(m, tmp.at(x, clampi(y + dy, 0, img.height - 1)));
            }
            out.at(x, y) = m;
        }
    }
    return out;
}

BinaryMask threshold_above(const GrayImage& img, std::uint8_t level) {
    BinaryMask mask(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        mask.data[i] = img.data[i] > level ? 1 : 0;
    }
    return mask;
}

RasterImage flip_horizontal(const RasterImage& img) {
    RasterImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
        }
    }
    return out;
}

BinaryMask flip_horizontal(const BinaryMask& mask) {
    BinaryMask out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) out.set(x, y, mask.at(mask.width - 1 - x, y));
    }
    return out;
}

RasterImage resize_bilinear(const RasterImage& img, int new_w, int new_h) {
    require(new_w >= 1 && new_h >= 1, ErrorKind::InvalidArgument, "resize target must be >= 1");
    if (new_w == img.width && new_h == img.height) return img;
    RasterImage out(new_w, new_h);
    const double sx = static_cast<double>(img.width) / new_w;
    const double sy = static_cast<double>(img.height) / new_h;
    for (int y = 0; y < new_h; ++y) {
        double src_y = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < new_w; ++x) {
            double src_x = (x + 0.5) * sx - 0.5;
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = clamp_round_u8(bilinear_sample(img, src_x, src_y, c));
            }
        }
    }
    return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int new_w, int new_h) {
    require(new_w >= 1 && new_h >= 1, ErrorKind::InvalidArgument, "resize target must be >= 1");
    if (new_w == mask.width && new_h == mask.height) return mask;
    BinaryMask out(new_w, new_h);
    const double sx = static_cast<double>(mask.width) / new_w;
    const double sy = static_cast<double>(mask.height) / new_h;
    for (int y = 0; y < new_h; ++y) {
        int src_y = clampi(static_cast<int>(std::llround((y + 0.5) * sy - 0.5)), 0, mask.height - 1);
        for (int x = 0; x < new_w; ++x) {
            int src_x = clampi(static_cast<int>(std::llround((x + 0.5) * sx - 0.5)), 0, mask.width - 1);
            out.set(x, y, mask.at(src_x, src_y));
        }
    }
    return out;
}

std::pair<RasterImage, BinaryMask> rotate_expand(const RasterImage& crop, const BinaryMask& mask,
                                                 double angle_deg) {
    const double theta = angle_deg * kPi / 180.0;
    const double c = snap_trig(std::cos(theta));
    const double s = snap_trig(std::sin(theta));

    const int w = crop.width;
    const int h = crop.height;
    const double ext_x = (w - 1) * std::fabs(c) + (h - 1) * std::fabs(s);
    const double ext_y = (w - 1) * std::fabs(s) + (h - 1) * std::fabs(c);
    const int new_w = static_cast<int>(std::ceil(ext_x)) + 1;
    const int new_h = static_cast<int>(std::ceil(ext_y)) + 1;

    const double csx = (w - 1) / 2.0;
    const double csy = (h - 1) / 2.0;
    const double cdx = (new_w - 1) / 2.0;
    const double cdy = (new_h - 1) / 2.0;

    RasterImage out(new_w, new_h);
    BinaryMask out_mask(new_w, new_h);
    for (int y = 0; y < new_h; ++y) {
        for (int x = 0; x < new_w; ++x) {
            // Inverse rotation: dest -> source.
            const double dx = x - cdx;
            const double dy = y - cdy;
            const double src_x = csx + c * dx + s * dy;
            const double src_y = csy - s * dx + c * dy;
            const int nx = static_cast<int>(std::llround(src_x));
            const int ny = static_cast<int>(std::llround(src_y));
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            out_mask.set(x, y, mask.at(nx, ny));
            for (int ch = 0; ch < 3; ++ch) {
                out.at(x, y, ch) = clamp_round_u8(bilinear_sample(crop, src_x, src_y, ch));
            }
        }
    }
    return {std::move(out), std::move(out_mask)};
}

std::pair<RasterImage, BinaryMask> transform_segment(const RasterImage& crop, const BinaryMask& mask,
                                                     const TransformParams& params) {
    require(crop.width == mask.width && crop.height == mask.height, ErrorKind::Contract,
            "segment crop and mask dimensions must match");
    require(params.scale > 0.0 && params.brightness > 0.0 && params.contrast > 0.0,
            ErrorKind::InvalidArgument, "transform factors must be positive");

    RasterImage img = params.hflip ? flip_horizontal(crop) : crop;
    BinaryMask msk = params.hflip ? flip_horizontal(mask) : mask;

    if (params.scale != 1.0) {
        int sw = std::max<int>(1, static_cast<int>(std::llround(img.width * params.scale)));
        int sh = std::max<int>(1, static_cast<int>(std::llround(img.height * params.scale)));
        img = resize_bilinear(img, sw, sh);
        msk = resize_nearest(msk, sw, sh);
    }

    if (params.angle != 0.0) {
        std::tie(img, msk) = rotate_expand(img, msk, params.angle);
    }

    if (params.brightness != 1.0 || params.contrast != 1.0) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                if (!msk.at(x, y)) continue;
                for (int c = 0; c < 3; ++c) {
                    double v = img.at(x, y, c) * params.brightness;
                    v = (v - 128.0) * params.contrast + 128.0;
                    img.at(x, y, c) = clamp_round_u8(v);
                }
            }
        }
    }

    if (msk.count_true() == 0) {
        fail(ErrorKind::DegenerateSegment, "transform produced an empty segment mask");
    }
    return {std::move(img), std::move(msk)};
}

RasterImage blend_segment(const RasterImage& bg, const RasterImage& crop, const BinaryMask& mask,
                          const BBox& at, double coeff) {
    require(at.inside(bg.width, bg.height), ErrorKind::InvalidPlacement,
            "paste box does not lie inside the background");
    require(crop.width == at.w && crop.height == at.h && mask.width == at.w && mask.height == at.h,
            ErrorKind::Contract, "crop/mask dimensions must equal the paste box");
    require(coeff > 0.0 && coeff <= 1.0, ErrorKind::InvalidArgument,
            "composition coefficient must be in (0, 1]");

    RasterImage out = bg;
    for (int y = 0; y < at.h; ++y) {
        for (int x = 0; x < at.w; ++x) {
            if (!mask.at(x, y)) continue;
            for (int c = 0; c < 3; ++c) {
                double v = coeff * crop.at(x, y, c) + (1.0 - coeff) * bg.at(at.x + x, at.y + y, c);
                out.at(at.x + x, at.y + y, c) = clamp_round_u8(v);
            }
        }
    }
    return out;
}

std::optional<BBox> tight_bbox(const BinaryMask& mask) {
    int min_x = mask.width, min_y = mask.height, max_x = -1, max_y = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            min_x = std::min(min_x, x);
            min_y = std::min(min_y, y);
            max_x = std::max(max_x, x);
            max_y = std::max(max_y, y);
        }
    }
    if (max_x < 0) return std::nullopt;
    return BBox{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
}

RasterImage crop_image(const RasterImage& img, const BBox& box) {
    require(box.inside(img.width, img.height), ErrorKind::InvalidArgument, "crop box out of bounds");
    RasterImage out(box.w, box.h);
    for (int y = 0; y < box.h; ++y) {
        for (int x = 0; x < box.w; ++x) {
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(box.x + x, box.y + y, c);
        }
    }
    return out;
}

BinaryMask crop_mask(const BinaryMask& mask, const BBox& box) {
    require(box.inside(mask.width, mask.height), ErrorKind::InvalidArgument, "crop box out of bounds");
    BinaryMask out(box.w, box.h);
    for (int y = 0; y < box.h; ++y) {
        for (int x = 0; x < box.w; ++x) out.set(x, y, mask.at(box.x + x, box.y + y));
    }
    return out;
}

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::InvalidPlacement: return "invalid placement";
        case ErrorKind::DegenerateSegment: return "degenerate segment";
        case ErrorKind::EmptyRegion: return "empty region";
        case ErrorKind::Ingest: return "ingest error";
        case ErrorKind::CorpusInvalid: return "corpus invalid";
        case ErrorKind::Io: return "i/o error";
        case ErrorKind::Synthesis: return "synthesis error";
        case ErrorKind::Contract: return "contract violation";
        case ErrorKind::EmptyNegatives: return "empty negatives";
        case ErrorKind::Initialization: return "initialization error";
        case ErrorKind::InvalidDataset: return "invalid dataset";
        case ErrorKind::Checkpoint: return "checkpoint error";
    }
    return "error";
}

} // namespace segloc
