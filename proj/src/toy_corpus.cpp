#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "json.hpp"

#include "segloc/corpus.hpp"
#include "segloc/png_io.hpp"
#include "segloc/rng.hpp"

namespace segloc {

namespace {

struct Rgb {
    double r, g, b;
};

// h in degrees (wrapped), s and v in [0, 1]; channels in [0, 255].
Rgb hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const double m = v - c;
    return {(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0};
}

struct Container {
    double cx, cy, hw, hh; // center and half extents
    double lum;            // container luminance, darker than the base
    double alpha;          // blend opacity over the base
    bool covers(int x, int y) const {
        const double u = (x - cx) / hw;
        const double v = (y - cy) / hh;
        return u * u * u * u + v * v * v * v <= 1.0;
    }
};

RasterImage render_background(int w, int h, Rng& rng) {
    const double base = 238.0 + static_cast<double>(rng.below(13)); // [238, 250]
    const int n_containers = 1 + static_cast<int>(rng.below(3));

    std::vector<Container> containers;
    for (int i = 0; i < n_containers; ++i) {
        Container ct;
        // The first container is large enough that its eroded interior always
        // leaves a usable paste region; later ones just add clutter.
        const double flo = i == 0 ? 0.75 : 0.20;
        const double fhi = i == 0 ? 0.88 : 0.45;
        ct.hw = 0.5 * rng.uniform(flo, fhi) * w;
        ct.hh = 0.5 * rng.uniform(flo, fhi) * h;
        ct.cx = rng.uniform(ct.hw, w - ct.hw);
        ct.cy = rng.uniform(ct.hh, h - ct.hh);
        ct.lum = rng.uniform(110.0, 160.0);
        ct.alpha = rng.uniform(0.70, 0.85);
        containers.push_back(ct);
    }

    RasterImage img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double speckle = static_cast<double>(rng.below(11)) - 5.0;
            double v = base + speckle;
            for (const Container& ct : containers) {
                if (ct.covers(x, y)) v = ct.alpha * ct.lum + (1.0 - ct.alpha) * v;
            }
            const std::uint8_t g = clamp_round_u8(v);
            img.at(x, y, 0) = g;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = g;
        }
    }
    return img;
}

// Returns the instance's crop and exact mask, already tightened.
std::pair<RasterImage, BinaryMask> render_foreground(int class_id, int C, const ToyOptions& opts,
                                                     Rng& rng) {
    const int S = opts.fore_lo + static_cast<int>(rng.below(opts.fore_hi - opts.fore_lo + 1));
    const double hue = 360.0 * class_id / C + rng.uniform(-12.0, 12.0);
    const double sat = rng.uniform(0.55, 0.85);
    const double val = rng.uniform(0.50, 0.75);
    const Rgb color = hsv_to_rgb(hue, sat, val);

    const double mid = (S - 1) / 2.0;
    const int shape = class_id % 6;
    std::function<bool(int, int)> inside;
    switch (shape) {
        case 0: { // rod
            const int t = std::max<int>(3, std::llround(S * rng.uniform(0.18, 0.28)));
            const int y0 = (S - t) / 2;
            inside = [=](int, int y) { return y >= y0 && y < y0 + t; };
            break;
        }
        case 1: { // disc
            const double r = 0.5 * S * rng.uniform(0.80, 0.98);
            inside = [=](int x, int y) {
                return (x - mid) * (x - mid) + (y - mid) * (y - mid) <= r * r;
            };
            break;
        }
        case 2: { // L-shape
            const int a = std::max<int>(3, std::llround(S * rng.uniform(0.30, 0.42)));
            inside = [=](int x, int y) { return x < a || y >= S - a; };
            break;
        }
        case 3: { // ring
            const double ro = 0.5 * S * rng.uniform(0.85, 0.98);
            const double ri = ro * rng.uniform(0.45, 0.60);
            inside = [=](int x, int y) {
                const double d2 = (x - mid) * (x - mid) + (y - mid) * (y - mid);
                return d2 <= ro * ro && d2 >= ri * ri;
            };
            break;
        }
        case 4: { // cross
            const int a = std::max<int>(3, std::llround(S * rng.uniform(0.24, 0.34)));
            const int lo = (S - a) / 2;
            inside = [=](int x, int y) {
                return (y >= lo && y < lo + a) || (x >= lo && x < lo + a);
            };
            break;
        }
        default: { // wedge
            const double tx = rng.uniform(0.2, 0.8) * (S - 1);
            // Triangle (0, S-1), (S-1, S-1), (tx, 0); sides tested as half-planes.
            inside = [=](int x, int y) {
                const double yb = S - 1;
                const double left = (x - 0.0) * (0.0 - yb) - (y - yb) * (tx - 0.0);
                const double right = (x - tx) * (yb - 0.0) - (y - 0.0) * ((S - 1) - tx);
                return y <= yb && left <= 0.0 && right <= 0.0;
            };
            break;
        }
    }

    RasterImage canvas(S, S);
    BinaryMask mask(S, S);
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            const double jitter = static_cast<double>(rng.below(17)) - 8.0;
            canvas.at(x, y, 0) = clamp_round_u8(color.r + jitter);
            canvas.at(x, y, 1) = clamp_round_u8(color.g + jitter);
            canvas.at(x, y, 2) = clamp_round_u8(color.b + jitter);
            mask.set(x, y, inside(x, y));
        }
    }
    std::optional<BBox> tb = tight_bbox(mask);
    require(tb.has_value(), ErrorKind::Contract, "toy foreground rendered an empty mask");
    return {crop_image(canvas, *tb), crop_mask(mask, *tb)};
}

void make_dirs(const std::filesystem::path& p) {
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    require(!ec, ErrorKind::Io, "cannot create directory " + p.string());
}

std::string zero_pad(int v, int digits) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < digits) s.insert(s.begin(), '0');
    return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << text;
    require(out.good(), ErrorKind::Io, "short write to " + path.string());
}

} // namespace

std::pair<ForegroundCorpus, BackgroundCorpus> gen_toy_corpus(
    const std::filesystem::path& out, int C, int n_fore, int n_back, std::uint64_t seed,
    const ToyOptions& opts) {
    require(C >= 1 && C <= 64, ErrorKind::InvalidArgument, "class count must be in [1, 64]");
    require(n_fore >= 2, ErrorKind::InvalidArgument, "need at least 2 instances per class");
    require(n_back >= 1, ErrorKind::InvalidArgument, "need at least 1 background");
    require(opts.back_w >= 48 && opts.back_h >= 48, ErrorKind::InvalidArgument,
            "backgrounds must be at least 48x48 to leave a usable paste region");
    require(opts.fore_lo >= 12 && opts.fore_hi >= opts.fore_lo, ErrorKind::InvalidArgument,
            "foreground size range must satisfy 12 <= lo <= hi");

    const std::filesystem::path fg_root = out / "foregrounds";
    make_dirs(fg_root / "images");
    make_dirs(fg_root / "masks");
    make_dirs(out / "backgrounds");

    nlohmann::json classes = nlohmann::json::array();
    for (int c = 0; c < C; ++c) classes.push_back("class_" + std::to_string(c));
    write_text(fg_root / "classes.json", classes.dump(2) + "\n");

    nlohmann::json instances = nlohmann::json::array();
    for (int c = 0; c < C; ++c) {
        for (int j = 0; j < n_fore; ++j) {
            Rng rng(mix_seed(seed, stream::toy_fore, static_cast<std::uint64_t>(c) * n_fore + j));
            auto [crop, mask] = render_foreground(c, C, opts, rng);

            // Tightness is part of the segment contract; verify it held.
            std::optional<BBox> tb = tight_bbox(mask);
            require(tb && tb->x == 0 && tb->y == 0 && tb->w == mask.width && tb->h == mask.height,
                    ErrorKind::Contract, "toy foreground crop is not tight");

            const std::string stem = "c" + zero_pad(c, 2) + "_i" + zero_pad(j, 3) + ".png";
            write_png(fg_root / "images" / stem, crop);
            write_png(fg_root / "masks" / stem, mask);
            instances.push_back({{"image", "images/" + stem},
                                 {"mask", "masks/" + stem},
                                 {"class", "class_" + std::to_string(c)}});
        }
    }
    write_text(fg_root / "instances.json", instances.dump(2) + "\n");

    for (int i = 0; i < n_back; ++i) {
        Rng rng(mix_seed(seed, stream::toy_back, static_cast<std::uint64_t>(i)));
        write_png(out / "backgrounds" / ("bg" + zero_pad(i, 4) + ".png"),
                  render_background(opts.back_w, opts.back_h, rng));
    }

    ClassRegistry registry = load_registry(fg_root / "classes.json");
    ForegroundCorpus fores = load_foregrounds(fg_root, registry);
    BackgroundCorpus backs = load_backgrounds(out / "backgrounds", true);
    return {std::move(fores), std::move(backs)};
}

} // namespace segloc
