#include "segloc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

#include "segloc/png_io.hpp"

namespace segloc {

namespace {

struct ProbeExample {
    Embedding x{};
    int label = 0;
};

// Every view of every pair becomes one labeled example.
std::vector<ProbeExample> embed_dataset(const EncoderParams& params,
                                        const std::filesystem::path& dir) {
    std::ifstream in(dir / "pairs.jsonl");
    if (!in) fail(ErrorKind::InvalidDataset, "cannot open " + (dir / "pairs.jsonl").string());
    std::vector<ProbeExample> examples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        require(!j.is_discarded(), ErrorKind::InvalidDataset, "malformed manifest line");
        const int label = j.at("class_id").get<int>();
        const auto& views = j.at("views");
        require(views.is_array() && views.size() == 2, ErrorKind::InvalidDataset,
                "manifest pair must list exactly 2 views");
        for (const auto& view : views) {
            const RasterImage img = read_png_rgb(dir / view.at("image").get<std::string>());
            const auto& bb = view.at("bbox");
            const BBox roi{bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(), bb[3].get<int>()};
            require(roi.inside(img.width, img.height), ErrorKind::InvalidDataset,
                    "manifest bbox falls outside its image");
            ProbeExample ex;
            ex.x = encode(params, img, roi);
            ex.label = label;
            examples.push_back(std::move(ex));
        }
    }
    return examples;
}

} // namespace

double linear_probe(const EncoderParams& params, const std::filesystem::path& dataset_dir,
                    std::uint64_t seed) {
    std::vector<ProbeExample> examples = embed_dataset(params, dataset_dir);
    require(examples.size() >= 2, ErrorKind::InvalidDataset,
            "probe needs at least 2 examples");
    int n_classes = 0;
    std::set<int> distinct;
    for (const ProbeExample& ex : examples) {
        require(ex.label >= 0, ErrorKind::InvalidDataset, "negative class id");
        n_classes = std::max(n_classes, ex.label + 1);
        distinct.insert(ex.label);
    }
    require(distinct.size() >= 2, ErrorKind::InvalidDataset,
            "probe needs at least 2 distinct classes");

    const std::size_t n = examples.size();
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng rng(mix_seed(seed, stream::probe));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(order[i - 1], order[j]);
    }
    std::size_t n_train = (n * 4) / 5;
    if (n_train == 0) n_train = 1;
    if (n_train == n) n_train = n - 1;

    // Multinomial logistic regression, full-batch GD: 500 iterations, lr 0.5.
    const int C = n_classes;
    std::vector<double> w(static_cast<std::size_t>(C) * kEmbedDim, 0.0);
    std::vector<double> b(C, 0.0);
    std::vector<double> scores(C), probs(C);
    std::vector<double> gw(w.size()), gb(C);
    for (int iter = 0; iter < 500; ++iter) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t t = 0; t < n_train; ++t) {
            const ProbeExample& ex = examples[order[t]];
            double max_score = -1e300;
            for (int c = 0; c < C; ++c) {
                double s = b[c];
                const double* wc = &w[static_cast<std::size_t>(c) * kEmbedDim];
                for (int d = 0; d < kEmbedDim; ++d) s += wc[d] * ex.x[d];
                scores[c] = s;
                max_score = std::max(max_score, s);
            }
            double denom = 0.0;
            for (int c = 0; c < C; ++c) denom += std::exp(scores[c] - max_score);
            for (int c = 0; c < C; ++c) {
                probs[c] = std::exp(scores[c] - max_score) / denom;
                const double delta = probs[c] - (c == ex.label ? 1.0 : 0.0);
                double* gwc = &gw[static_cast<std::size_t>(c) * kEmbedDim];
                for (int d = 0; d < kEmbedDim; ++d) gwc[d] += delta * ex.x[d];
                gb[c] += delta;
            }
        }
        const double scale = 0.5 / static_cast<double>(n_train);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= scale * gw[i];
        for (int c = 0; c < C; ++c) b[c] -= scale * gb[c];
    }

    std::size_t correct = 0;
    for (std::size_t t = n_train; t < n; ++t) {
        const ProbeExample& ex = examples[order[t]];
        int best = 0;
        double best_score = -1e300;
        for (int c = 0; c < C; ++c) {
            double s = b[c];
            const double* wc = &w[static_cast<std::size_t>(c) * kEmbedDim];
            for (int d = 0; d < kEmbedDim; ++d) s += wc[d] * ex.x[d];
            if (s > best_score) { // ties resolve to the lowest class index
                best_score = s;
                best = c;
            }
        }
        if (best == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n - n_train);
}

double linear_probe(const std::filesystem::path& ckpt_path,
                    const std::filesystem::path& dataset_dir, std::uint64_t seed) {
    const TrainCheckpoint ckpt = load_checkpoint(ckpt_path);
    return linear_probe(ckpt.query, dataset_dir, seed);
}

} // namespace segloc
