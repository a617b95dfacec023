#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "segloc/raster.hpp"
#include "segloc/rng.hpp"

namespace segloc {

// Architecture constants. Three stride-2 conv stages (so the feature map sits
// at stride 8), a 3x3 RoIAlign pool, and a two-layer projection head emitting
// unit-norm 64-d embeddings. No normalization layers anywhere: every statistic
// is per-sample, which is what makes accumulated micro-batches bit-equal to a
// full batch.
inline constexpr int kEmbedDim = 64;
inline constexpr int kRoiBins = 3;
inline constexpr int kFeatChannels = 64;
inline constexpr int kFeatStride = 8;
inline constexpr int kFlatDim = kFeatChannels * kRoiBins * kRoiBins; // 576
inline constexpr int kHiddenDim = 128;

enum TensorId {
    kConv1W, kConv1B,
    kConv2W, kConv2B,
    kConv3W, kConv3B,
    kFc1W, kFc1B,
    kFc2W, kFc2B,
    kTensorCount
};

const char* tensor_name(int id);
const std::vector<int>& tensor_shape(int id);
std::size_t tensor_size(int id);
int tensor_stage(int id); // conv stage index 0..2, or -1 for the head

using Embedding = std::array<double, kEmbedDim>;

double dot(const Embedding& a, const Embedding& b);
double norm(const Embedding& a);

/// All learnable tensors, indexed by TensorId. Also reused as the gradient
/// container, since gradients share shapes with their parameters.
struct EncoderParams {
    std::array<std::vector<double>, kTensorCount> t;

    bool shapes_valid() const;
};

EncoderParams zero_params();

/// He-uniform fan-in init for weights, zero biases. Deterministic in seed.
EncoderParams init_params(std::uint64_t seed);

/// Channel-major stack of feature planes at a fixed pixel stride.
struct FeatureMap {
    int width = 0;
    int height = 0;
    int channels = 0;
    int stride = kFeatStride; // image pixels per feature cell
    std::vector<double> data; // [channel][y][x]

    double at(int c, int x, int y) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

/// RoIAlign with the aligned convention: feature coord = pixel/stride - 0.5.
/// The roi (image pixels) splits into bins x bins cells, each sampled once at
/// its center by bilinear interpolation with border-clamped neighbors, so
/// degenerate rois collapse to a point instead of erroring. Output is
/// channel-major [c][by][bx]; sample coordinates are exported when requested.
std::vector<double> roi_align(const FeatureMap& fm, const BBox& roi, int bins,
                              std::vector<double>* sample_x = nullptr,
                              std::vector<double>* sample_y = nullptr);

/// Activations retained by a cached forward pass, consumed by backprop.
struct EncodeCache {
    int img_w = 0, img_h = 0;
    BBox roi;
    std::uint64_t params_stamp = 0;                // fingerprint of the params used
    std::array<std::vector<double>, 3> stage_in;   // input planes per conv stage
    std::array<std::vector<double>, 3> stage_pre;  // pre-ReLU outputs per stage
    std::array<int, 4> plane_w{}, plane_h{};       // dims entering each stage (+ final)
    std::vector<double> fm;                        // post-ReLU stage-3 output
    std::array<double, kRoiBins * kRoiBins> sample_x{}, sample_y{};
    std::vector<double> pooled;                    // kFlatDim
    std::vector<double> fc1_pre, fc1_post;         // kHiddenDim
    Embedding pre_norm{};                          // u, before normalization
    double pre_norm_len = 0.0;
};

/// Runs the encoder over the image (pixels mapped to [0,1]) pooling over roi.
/// The roi must lie inside the image. Pass a cache to enable backprop.
Embedding encode(const EncoderParams& params, const RasterImage& img, const BBox& roi,
                 EncodeCache* cache = nullptr);

/// Exact reverse-mode gradients for every parameter, given the upstream
/// gradient with respect to the emitted embedding. The cache must come from a
/// forward pass over these same params.
EncoderParams backprop(const EncoderParams& params, const EncodeCache& cache,
                       const Embedding& grad_embedding);

/// theta_k <- m * theta_k + (1 - m) * theta_q, for every parameter.
void momentum_update(EncoderParams& key, const EncoderParams& query, double m);

/// Trainable mask with the first n conv stages frozen (n in 0..3).
std::array<bool, kTensorCount> freeze_stages(int n);

std::uint64_t params_fingerprint(const EncoderParams& params);

} // namespace segloc
