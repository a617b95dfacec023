#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "segloc/raster.hpp"

namespace segloc {

struct ClassRegistry {
    std::vector<std::string> names;

    int size() const { return static_cast<int>(names.size()); }
    // Returns -1 when the label is not registered.
    int id_of(const std::string& name) const;
};

struct Segment {
    int class_id = 0;
    RasterImage crop;   // tight crop around the mask
    BinaryMask mask;    // same dims as crop, touches all four edges
    std::string source_id;
};

struct ForegroundCorpus {
    ClassRegistry registry;
    std::vector<Segment> instances;           // manifest order
    std::vector<std::vector<int>> by_class;   // indices into instances, per class id
    int skipped_empty_masks = 0;
};

struct BackgroundCorpus {
    std::vector<std::string> ids;             // file names, lexicographic order
    std::vector<RasterImage> images;
    std::vector<std::optional<BBox>> regions; // cached paste regions, when precomputed
    int excluded_count = 0;

    int size() const { return static_cast<int>(images.size()); }
};

ClassRegistry load_registry(const std::filesystem::path& classes_json);

// Reads instances.json next to its referenced images/masks. Instances with an
// empty mask are skipped and counted; an unknown class label is an error, as is
// any registered class ending up with fewer than two instances.
ForegroundCorpus load_foregrounds(const std::filesystem::path& root, const ClassRegistry& registry);

// Loads every *.png under root. With precompute_regions, each image's paste
// region is determined up front and images without one are dropped (counted in
// excluded_count). A regions.json cache next to the images is honored.
BackgroundCorpus load_backgrounds(const std::filesystem::path& root, bool precompute_regions);

struct ToyOptions {
    int back_w = 64;
    int back_h = 64;
    int fore_lo = 14;   // foreground canvas side, sampled in [fore_lo, fore_hi]
    int fore_hi = 20;
};

// Writes a self-contained corpus under out/ (foregrounds/ + backgrounds/) and
// loads it back through the standard loaders. Deterministic in seed.
std::pair<ForegroundCorpus, BackgroundCorpus> gen_toy_corpus(
    const std::filesystem::path& out, int C, int n_fore, int n_back, std::uint64_t seed,
    const ToyOptions& opts = {});

} // namespace segloc
