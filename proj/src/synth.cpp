#include "segloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "segloc/png_io.hpp"

namespace segloc {

namespace {

constexpr int kMaxBackgroundResamples = 8;
constexpr int kRejectionGuard = 100000;

std::string zero_pad(int v, int digits) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < digits) s.insert(s.begin(), '0');
    return s;
}

// Distinct-draw helper: uniform over [0, n) excluding `avoid` when n >= 2.
int draw_distinct(Rng& rng, int n, int avoid) {
    if (n <= 1) return 0;
    for (int guard = 0; guard < kRejectionGuard; ++guard) {
        const int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        if (v != avoid) return v;
    }
    fail(ErrorKind::Synthesis, "rejection sampling failed to find a distinct index");
}

} // namespace

void validate(const SynthConfig& cfg) {
    require(cfg.c_min > 0.0 && cfg.c_min < cfg.c_max && cfg.c_max <= 1.0, ErrorKind::InvalidArgument,
            "composition bounds must satisfy 0 < c_min < c_max <= 1");
    require(cfg.target_width >= 1, ErrorKind::InvalidArgument, "target_width must be >= 1");
    require(cfg.angle_lo >= 0.0 && cfg.angle_lo <= cfg.angle_hi && cfg.angle_hi <= 360.0,
            ErrorKind::InvalidArgument, "angle range must lie within [0, 360]");
    require(cfg.scale_lo > 0.0 && cfg.scale_lo <= cfg.scale_hi, ErrorKind::InvalidArgument,
            "scale range must be positive");
    require(cfg.bright_lo > 0.0 && cfg.bright_lo <= cfg.bright_hi, ErrorKind::InvalidArgument,
            "brightness range must be positive");
    require(cfg.contrast_lo > 0.0 && cfg.contrast_lo <= cfg.contrast_hi, ErrorKind::InvalidArgument,
            "contrast range must be positive");
}

BBox authentic_region(const RasterImage& img) {
    GrayImage gray = to_grayscale(img);
    for (std::uint8_t& v : gray.data) v = static_cast<std::uint8_t>(255 - v);
    const GrayImage eroded = erode_min(gray, 9);
    const BinaryMask mask = threshold_above(eroded, 50);
    std::optional<BBox> box = tight_bbox(mask);
    if (!box) fail(ErrorKind::EmptyRegion, "no region survives erosion and threshold");
    return *box;
}

PositivePair synthesize_pair(const ForegroundCorpus& fores, const BackgroundCorpus& backs,
                             const SynthConfig& cfg, Rng& rng, PairStats* stats) {
    validate(cfg);
    const int C = fores.registry.size();
    const int n_back = backs.size();
    require(C >= 1 && !fores.instances.empty(), ErrorKind::InvalidArgument, "foreground corpus is empty");
    require(n_back >= 1, ErrorKind::InvalidArgument, "background corpus is empty");

    PairStats local;
    PairStats& st = stats ? *stats : local;

    int bg[2];
    bg[0] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_back)));
    bg[1] = n_back >= 2 ? draw_distinct(rng, n_back, bg[0]) : bg[0];

    const int class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(C)));
    const auto& insts = fores.by_class[class_id];
    require(!insts.empty(), ErrorKind::InvalidArgument,
            "class " + std::to_string(class_id) + " has no instances");
    int seg[2];
    const int k0 = static_cast<int>(rng.below(insts.size()));
    seg[0] = insts[k0];
    seg[1] = insts.size() >= 2 ? insts[draw_distinct(rng, static_cast<int>(insts.size()), k0)]
                               : seg[0];

    PositivePair pair;
    pair.class_id = class_id;

    for (int v = 0; v < 2; ++v) {
        const Segment& source = fores.instances[seg[v]];

        TransformParams tp;
        tp.hflip = rng.flip();
        tp.angle = rng.uniform(cfg.angle_lo, cfg.angle_hi);
        tp.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
        tp.brightness = rng.uniform(cfg.bright_lo, cfg.bright_hi);
        tp.contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
        const double coeff = rng.uniform(cfg.c_min, cfg.c_max);

        auto [tcrop, tmask] = transform_segment(source.crop, source.mask, tp);

        // Fit the transformed segment into the current background's region,
        // shrinking it once if oversized; otherwise resample the background.
        RasterImage crop;
        BinaryMask mask;
        BBox region;
        bool placed = false;
        for (int attempt = 0; attempt <= kMaxBackgroundResamples; ++attempt) {
            if (attempt > 0) {
                ++st.backgrounds_rejected;
                bg[v] = n_back >= 2 ? draw_distinct(rng, n_back, bg[1 - v]) : bg[v];
            }
            std::optional<BBox> r = backs.regions[bg[v]];
            if (!r) {
                try {
                    r = authentic_region(backs.images[bg[v]]);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::EmptyRegion) throw;
                    continue; // background unusable, resample
                }
            }
            if (tcrop.width <= r->w && tcrop.height <= r->h) {
                crop = tcrop;
                mask = tmask;
                region = *r;
                placed = true;
                break;
            }
            // Oversized: shrink to fit, preserving aspect, then retry once.
            const double s = std::min(static_cast<double>(r->w) / tcrop.width,
                                      static_cast<double>(r->h) / tcrop.height);
            const int nw = std::max<int>(1, static_cast<int>(std::floor(tcrop.width * s)));
            const int nh = std::max<int>(1, static_cast<int>(std::floor(tcrop.height * s)));
            RasterImage rcrop = resize_bilinear(tcrop, nw, nh);
            BinaryMask rmask = resize_nearest(tmask, nw, nh);
            if (nw <= r->w && nh <= r->h && rmask.count_true() > 0) {
                ++st.rescales;
                crop = std::move(rcrop);
                mask = std::move(rmask);
                region = *r;
                placed = true;
                break;
            }
        }
        if (!placed) {
            fail(ErrorKind::Synthesis, "segment does not fit any background after " +
                                            std::to_string(kMaxBackgroundResamples) + " resamples");
        }

        const int slack_x = region.w - crop.width + 1;
        const int slack_y = region.h - crop.height + 1;
        BBox at{region.x + static_cast<int>(rng.below(static_cast<std::uint64_t>(slack_x))),
                region.y + static_cast<int>(rng.below(static_cast<std::uint64_t>(slack_y))),
                crop.width, crop.height};

        PairView& view = pair.views[v];
        view.image = blend_segment(backs.images[bg[v]], crop, mask, at, coeff);
        view.paste_box = at;
        view.coefficient = coeff;
        view.transform = tp;
        view.background_id = backs.ids[bg[v]];
        view.segment_source_id = source.source_id;
    }
    return pair;
}

RasterImage resize_to_width(const RasterImage& img, int target_width) {
    require(target_width >= 1, ErrorKind::InvalidArgument, "target_width must be >= 1");
    if (img.width == target_width) return img;
    const int th = std::max<int>(
        1, static_cast<int>(std::llround(static_cast<double>(img.height) * target_width / img.width)));
    return resize_bilinear(img, target_width, th);
}

namespace {

nlohmann::json config_json(const SynthConfig& cfg) {
    return {{"c_min", cfg.c_min},
            {"c_max", cfg.c_max},
            {"target_width", cfg.target_width},
            {"angle_lo", cfg.angle_lo},
            {"angle_hi", cfg.angle_hi},
            {"scale_lo", cfg.scale_lo},
            {"scale_hi", cfg.scale_hi},
            {"bright_lo", cfg.bright_lo},
            {"bright_hi", cfg.bright_hi},
            {"contrast_lo", cfg.contrast_lo},
            {"contrast_hi", cfg.contrast_hi},
            {"seed", cfg.seed}};
}

// Scales a native-coordinate box into the resized frame by rounding each edge,
// clamped so the result stays a valid box inside the resized image.
BBox scale_box(const BBox& box, int from_w, int from_h, int to_w, int to_h) {
    const double sx = static_cast<double>(to_w) / from_w;
    const double sy = static_cast<double>(to_h) / from_h;
    long x0 = std::llround(box.x * sx);
    long y0 = std::llround(box.y * sy);
    long x1 = std::llround((box.x + box.w) * sx);
    long y1 = std::llround((box.y + box.h) * sy);
    x0 = std::clamp<long>(x0, 0, to_w - 1);
    y0 = std::clamp<long>(y0, 0, to_h - 1);
    x1 = std::clamp<long>(x1, x0 + 1, to_w);
    y1 = std::clamp<long>(y1, y0 + 1, to_h);
    return BBox{static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1 - x0),
                static_cast<int>(y1 - y0)};
}

} // namespace

SynthSummary synthesize_dataset(const ForegroundCorpus& fores, const BackgroundCorpus& backs,
                                const SynthConfig& cfg, int n_pairs,
                                const std::filesystem::path& out, int workers) {
    validate(cfg);
    require(n_pairs >= 1, ErrorKind::InvalidArgument, "n_pairs must be >= 1");
    require(workers >= 1, ErrorKind::InvalidArgument, "workers must be >= 1");

    std::error_code ec;
    std::filesystem::create_directories(out / "images", ec);
    require(!ec, ErrorKind::Io, "cannot create " + (out / "images").string());

    {
        std::ofstream hdr(out / "synth_config.json", std::ios::binary);
        if (!hdr) fail(ErrorKind::Io, "cannot write synth_config.json");
        hdr << config_json(cfg).dump(2) << "\n";
    }

    std::vector<std::string> lines(n_pairs);
    std::vector<PairStats> stats(n_pairs);
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto run_pair = [&](int i) {
        const std::uint64_t subseed = mix_seed(cfg.seed, stream::synth_pair, static_cast<std::uint64_t>(i));
        Rng rng(subseed);
        PositivePair pair = synthesize_pair(fores, backs, cfg, rng, &stats[i]);

        nlohmann::json views = nlohmann::json::array();
        for (int v = 0; v < 2; ++v) {
            const PairView& pv = pair.views[v];
            RasterImage resized = resize_to_width(pv.image, cfg.target_width);
            const std::string rel = "images/p" + zero_pad(i, 6) + "_v" + std::to_string(v) + ".png";
            write_png(out / rel, resized);
            const BBox sb = scale_box(pv.paste_box, pv.image.width, pv.image.height, resized.width,
                                      resized.height);
            views.push_back({{"image", rel},
                             {"bbox", {sb.x, sb.y, sb.w, sb.h}},
                             {"coeff", pv.coefficient},
                             {"transform",
                              {{"angle", pv.transform.angle},
                               {"scale", pv.transform.scale},
                               {"hflip", pv.transform.hflip},
                               {"brightness", pv.transform.brightness},
                               {"contrast", pv.transform.contrast}}},
                             {"background_id", pv.background_id},
                             {"segment_id", pv.segment_source_id}});
        }
        nlohmann::json line = {{"pair_id", i},
                               {"class_id", pair.class_id},
                               {"views", views},
                               {"subseed", subseed}};
        lines[i] = line.dump();
    };

    const int n_threads = std::min(workers, n_pairs);
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            for (int i = t; i < n_pairs; i += n_threads) {
                try {
                    run_pair(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    std::ofstream manifest(out / "pairs.jsonl", std::ios::binary);
    if (!manifest) fail(ErrorKind::Io, "cannot write pairs.jsonl");
    for (const std::string& line : lines) manifest << line << "\n";
    require(manifest.good(), ErrorKind::Io, "short write to pairs.jsonl");

    SynthSummary summary;
    summary.pairs_written = n_pairs;
    for (const PairStats& st : stats) {
        summary.backgrounds_rejected += st.backgrounds_rejected;
        summary.retries += st.rescales;
    }
    return summary;
}

} // namespace segloc
