#include "segloc/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "segloc/png_io.hpp"
#include "segloc/synth.hpp"

namespace segloc {

namespace {

nlohmann::json parse_json_file(const std::filesystem::path& path, ErrorKind kind) {
    std::ifstream in(path);
    if (!in) fail(kind, "cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(kind, "malformed JSON in " + path.string());
    return j;
}

} // namespace

int ClassRegistry::id_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

ClassRegistry load_registry(const std::filesystem::path& classes_json) {
    nlohmann::json j = parse_json_file(classes_json, ErrorKind::Ingest);
    require(j.is_array(), ErrorKind::Ingest, "classes file must be a JSON array of strings");
    ClassRegistry reg;
    for (const auto& e : j) {
        require(e.is_string(), ErrorKind::Ingest, "class names must be strings");
        reg.names.push_back(e.get<std::string>());
    }
    require(reg.size() >= 1 && reg.size() <= 64, ErrorKind::Ingest,
            "class count must be in [1, 64], got " + std::to_string(reg.size()));
    for (std::size_t i = 0; i < reg.names.size(); ++i) {
        for (std::size_t k = i + 1; k < reg.names.size(); ++k) {
            require(reg.names[i] != reg.names[k], ErrorKind::Ingest,
                    "duplicate class name '" + reg.names[i] + "'");
        }
    }
    return reg;
}

ForegroundCorpus load_foregrounds(const std::filesystem::path& root, const ClassRegistry& registry) {
    nlohmann::json manifest = parse_json_file(root / "instances.json", ErrorKind::Ingest);
    require(manifest.is_array(), ErrorKind::Ingest, "instances.json must be a JSON array");

    ForegroundCorpus corpus;
    corpus.registry = registry;
    corpus.by_class.resize(registry.size());

    int idx = -1;
    for (const auto& rec : manifest) {
        ++idx;
        require(rec.contains("image") && rec.contains("mask") && rec.contains("class"),
                ErrorKind::Ingest, "instance " + std::to_string(idx) + " missing image/mask/class");
        const std::string label = rec.at("class").get<std::string>();
        const int class_id = registry.id_of(label);
        require(class_id >= 0, ErrorKind::Ingest,
                "unknown class '" + label + "' at instance " + std::to_string(idx));

        const std::string image_rel = rec.at("image").get<std::string>();
        RasterImage img = read_png_rgb(root / image_rel);
        BinaryMask mask = read_png_mask(root / rec.at("mask").get<std::string>());
        require(img.width == mask.width && img.height == mask.height, ErrorKind::Ingest,
                "image/mask dimensions differ at instance " + std::to_string(idx));

        std::optional<BBox> tb = tight_bbox(mask);
        if (!tb) {
            ++corpus.skipped_empty_masks;
            continue;
        }
        Segment seg;
        seg.class_id = class_id;
        seg.crop = crop_image(img, *tb);
        seg.mask = crop_mask(mask, *tb);
        seg.source_id = std::to_string(idx) + ":" + image_rel;
        corpus.by_class[class_id].push_back(static_cast<int>(corpus.instances.size()));
        corpus.instances.push_back(std::move(seg));
    }

    for (int c = 0; c < registry.size(); ++c) {
        require(corpus.by_class[c].size() >= 2, ErrorKind::CorpusInvalid,
                "class '" + registry.names[c] + "' has " + std::to_string(corpus.by_class[c].size()) +
                    " instances, need at least 2");
    }
    return corpus;
}

BackgroundCorpus load_backgrounds(const std::filesystem::path& root, bool precompute_regions) {
    std::vector<std::string> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(root, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path().filename().string());
        }
    }
    require(!ec, ErrorKind::Ingest, "cannot list " + root.string());
    require(!files.empty(), ErrorKind::Ingest, "no .png backgrounds under " + root.string());
    std::sort(files.begin(), files.end());

    // Optional precomputed-region cache: {filename: [x, y, w, h]}.
    std::vector<std::optional<BBox>> cached(files.size());
    const std::filesystem::path cache_path = root / "regions.json";
    if (std::filesystem::exists(cache_path)) {
        nlohmann::json j = parse_json_file(cache_path, ErrorKind::Ingest);
        require(j.is_object(), ErrorKind::Ingest, "regions.json must map filename to [x,y,w,h]");
        for (std::size_t i = 0; i < files.size(); ++i) {
            auto it = j.find(files[i]);
            if (it == j.end()) continue;
            require(it->is_array() && it->size() == 4, ErrorKind::Ingest,
                    "regions.json entry for " + files[i] + " must be [x,y,w,h]");
            cached[i] = BBox{(*it)[0].get<int>(), (*it)[1].get<int>(), (*it)[2].get<int>(),
                             (*it)[3].get<int>()};
        }
    }

    BackgroundCorpus corpus;
    for (std::size_t i = 0; i < files.size(); ++i) {
        RasterImage img = read_png_rgb(root / files[i]);
        std::optional<BBox> region = cached[i];
        if (region) {
            require(region->inside(img.width, img.height), ErrorKind::Ingest,
                    "cached region for " + files[i] + " falls outside the image");
        } else if (precompute_regions) {
            try {
                region = authentic_region(img);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::EmptyRegion) throw;
                ++corpus.excluded_count;
                continue;
            }
        }
        corpus.ids.push_back(files[i]);
        corpus.images.push_back(std::move(img));
        corpus.regions.push_back(region);
    }
    require(corpus.size() >= 1, ErrorKind::Ingest,
            "every background under " + root.string() + " was rejected");
    return corpus;
}

} // namespace segloc
