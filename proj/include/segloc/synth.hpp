#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "segloc/corpus.hpp"
#include "segloc/raster.hpp"
#include "segloc/rng.hpp"

namespace segloc {

struct SynthConfig {
    double c_min = 0.25;       // composition-coefficient bounds
    double c_max = 0.65;
    int target_width = 500;    // stored images are resized to this width
    double angle_lo = 0.0;     // transform sampling ranges
    double angle_hi = 360.0;
    double scale_lo = 0.5;
    double scale_hi = 1.5;
    double bright_lo = 0.6;
    double bright_hi = 1.4;
    double contrast_lo = 0.6;
    double contrast_hi = 1.4;
    std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct PairView {
    RasterImage image;             // composited background, native resolution
    BBox paste_box;                // where the segment landed, native coords
    double coefficient = 0.0;
    TransformParams transform;
    std::string background_id;
    std::string segment_source_id;
};

struct PositivePair {
    int class_id = 0;
    PairView views[2];
};

/// Paste-region determination: grayscale, invert, 9x9 minimum erosion,
/// threshold > 50, tight bbox. Throws EmptyRegion when nothing survives.
BBox authentic_region(const RasterImage& img);

struct PairStats {
    int backgrounds_rejected = 0; // resampled because the segment would not fit
    int rescales = 0;             // segment shrunk to fit its region
};

/// Draws one class-consistent pair: two backgrounds, two distinct segments of
/// one class, independent per-view transform + coefficient, paste uniformly
/// inside each background's region. All randomness comes from `rng`.
PositivePair synthesize_pair(const ForegroundCorpus& fores, const BackgroundCorpus& backs,
                             const SynthConfig& cfg, Rng& rng, PairStats* stats = nullptr);

/// Bilinear resize to exactly target_width, height scaled to keep aspect.
RasterImage resize_to_width(const RasterImage& img, int target_width);

struct SynthSummary {
    int pairs_written = 0;
    int backgrounds_rejected = 0;
    int retries = 0;
};

/// Materializes n_pairs pairs under out/: images/ plus pairs.jsonl (one line
/// per pair, in pair order) and synth_config.json. Each pair runs on its own
/// sub-seed derived from (cfg.seed, pair index), so results do not depend on
/// the worker count.
SynthSummary synthesize_dataset(const ForegroundCorpus& fores, const BackgroundCorpus& backs,
                                const SynthConfig& cfg, int n_pairs,
                                const std::filesystem::path& out, int workers = 1);

} // namespace segloc
