#include "segloc/encoder.hpp"

#include <cmath>
#include <cstring>

namespace segloc {

namespace {

struct StageSpec {
    int in_ch, out_ch, kernel, stride, pad;
};

constexpr StageSpec kStages[3] = {
    {3, 16, 5, 2, 2},
    {16, 32, 3, 2, 1},
    {32, 64, 3, 2, 1},
};

const char* kTensorNames[kTensorCount] = {
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b",
};

const std::vector<int> kShapes[kTensorCount] = {
    {16, 3, 5, 5}, {16},
    {32, 16, 3, 3}, {32},
    {64, 32, 3, 3}, {64},
    {kHiddenDim, kFlatDim}, {kHiddenDim},
    {kEmbedDim, kHiddenDim}, {kEmbedDim},
};

int out_extent(int in, const StageSpec& s) {
    return (in + 2 * s.pad - s.kernel) / s.stride + 1;
}

// Bilinear read of one feature plane at a continuous point: fractional weights
// from the unclamped floor, neighbor indices clamped to the border.
double bilinear_plane(const double* plane, int w, int h, double x, double y) {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const double wx = x - fx;
    const double wy = y - fy;
    auto cl = [](long v, int hi) { return static_cast<int>(v < 0 ? 0 : (v > hi ? hi : v)); };
    const int x0 = cl(static_cast<long>(fx), w - 1);
    const int x1 = cl(static_cast<long>(fx) + 1, w - 1);
    const int y0 = cl(static_cast<long>(fy), h - 1);
    const int y1 = cl(static_cast<long>(fy) + 1, h - 1);
    return (1.0 - wy) * ((1.0 - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1]) +
           wy * ((1.0 - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1]);
}

} // namespace

std::vector<double> roi_align(const FeatureMap& fm, const BBox& roi, int bins,
                              std::vector<double>* sample_x, std::vector<double>* sample_y) {
    require(bins >= 1, ErrorKind::InvalidArgument, "bin count must be >= 1");
    require(fm.width >= 1 && fm.height >= 1 && fm.channels >= 1 && fm.stride >= 1 &&
                fm.data.size() ==
                    static_cast<std::size_t>(fm.channels) * fm.width * fm.height,
            ErrorKind::Contract, "feature map dims do not match its data");
    const double fx0 = static_cast<double>(roi.x) / fm.stride - 0.5;
    const double fy0 = static_cast<double>(roi.y) / fm.stride - 0.5;
    const double fx1 = static_cast<double>(roi.x + roi.w) / fm.stride - 0.5;
    const double fy1 = static_cast<double>(roi.y + roi.h) / fm.stride - 0.5;
    const double bin_w = (fx1 - fx0) / bins;
    const double bin_h = (fy1 - fy0) / bins;
    if (sample_x) sample_x->assign(static_cast<std::size_t>(bins) * bins, 0.0);
    if (sample_y) sample_y->assign(static_cast<std::size_t>(bins) * bins, 0.0);
    std::vector<double> pooled(static_cast<std::size_t>(fm.channels) * bins * bins);
    for (int by = 0; by < bins; ++by) {
        for (int bx = 0; bx < bins; ++bx) {
            const double sx = fx0 + (bx + 0.5) * bin_w;
            const double sy = fy0 + (by + 0.5) * bin_h;
            if (sample_x) (*sample_x)[static_cast<std::size_t>(by) * bins + bx] = sx;
            if (sample_y) (*sample_y)[static_cast<std::size_t>(by) * bins + bx] = sy;
            for (int c = 0; c < fm.channels; ++c) {
                const double* plane = fm.data.data() + static_cast<std::size_t>(c) * fm.width * fm.height;
                pooled[(static_cast<std::size_t>(c) * bins + by) * bins + bx] =
                    bilinear_plane(plane, fm.width, fm.height, sx, sy);
            }
        }
    }
    return pooled;
}

const char* tensor_name(int id) { return kTensorNames[id]; }

const std::vector<int>& tensor_shape(int id) { return kShapes[id]; }

std::size_t tensor_size(int id) {
    std::size_t n = 1;
    for (int d : kShapes[id]) n *= static_cast<std::size_t>(d);
    return n;
}

int tensor_stage(int id) {
    switch (id) {
        case kConv1W: case kConv1B: return 0;
        case kConv2W: case kConv2B: return 1;
        case kConv3W: case kConv3B: return 2;
        default: return -1;
    }
}

double dot(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (int i = 0; i < kEmbedDim; ++i) s += a[i] * b[i];
    return s;
}

double norm(const Embedding& a) { return std::sqrt(dot(a, a)); }

bool EncoderParams::shapes_valid() const {
    for (int id = 0; id < kTensorCount; ++id) {
        if (t[id].size() != tensor_size(id)) return false;
    }
    return true;
}

EncoderParams zero_params() {
    EncoderParams p;
    for (int id = 0; id < kTensorCount; ++id) p.t[id].assign(tensor_size(id), 0.0);
    return p;
}

EncoderParams init_params(std::uint64_t seed) {
    EncoderParams p = zero_params();
    Rng rng(mix_seed(seed, stream::encoder_init));
    for (int id = 0; id < kTensorCount; ++id) {
        const auto& shape = kShapes[id];
        if (shape.size() == 1) continue; // biases stay zero
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= static_cast<std::size_t>(shape[d]);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& w : p.t[id]) w = rng.uniform(-bound, bound);
    }
    return p;
}

std::uint64_t params_fingerprint(const EncoderParams& params) {
    // FNV-1a over the raw parameter bytes, in tensor order.
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (int id = 0; id < kTensorCount; ++id) {
        const auto& v = params.t[id];
        const unsigned char* bytes = reinterpret_cast<const unsigned char*>(v.data());
        for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001B3ull;
        }
    }
    return h;
}

Embedding encode(const EncoderParams& params, const RasterImage& img, const BBox& roi,
                 EncodeCache* cache) {
    require(params.shapes_valid(), ErrorKind::Contract, "encoder parameter shapes are wrong");
    require(img.width >= 1 && img.height >= 1, ErrorKind::InvalidArgument, "empty image");
    require(roi.inside(img.width, img.height), ErrorKind::InvalidArgument,
            "roi falls outside the image");

    // Pixels to [0,1] planes, channel major.
    int w = img.width, h = img.height;
    std::vector<double> act(static_cast<std::size_t>(3) * w * h);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                act[(static_cast<std::size_t>(c) * h + y) * w + x] = img.at(x, y, c) / 255.0;
            }
        }
    }

    if (cache) {
        *cache = EncodeCache{};
        cache->img_w = img.width;
        cache->img_h = img.height;
        cache->roi = roi;
        cache->params_stamp = params_fingerprint(params);
    }

    for (int s = 0; s < 3; ++s) {
        const StageSpec& sp = kStages[s];
        const int ow = out_extent(w, sp);
        const int oh = out_extent(h, sp);
        const double* wgt = params.t[2 * s].data();
        const double* bias = params.t[2 * s + 1].data();
        std::vector<double> pre(static_cast<std::size_t>(sp.out_ch) * ow * oh);
        for (int oc = 0; oc < sp.out_ch; ++oc) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias[oc];
                    for (int ic = 0; ic < sp.in_ch; ++ic) {
                        const double* plane = act.data() + static_cast<std::size_t>(ic) * w * h;
                        const double* ker =
                            wgt + ((static_cast<std::size_t>(oc) * sp.in_ch + ic) * sp.kernel) * sp.kernel;
                        for (int ky = 0; ky < sp.kernel; ++ky) {
                            const int iy = oy * sp.stride - sp.pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < sp.kernel; ++kx) {
                                const int ix = ox * sp.stride - sp.pad + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += ker[ky * sp.kernel + kx] * plane[static_cast<std::size_t>(iy) * w + ix];
                            }
                        }
                    }
                    pre[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
        if (cache) {
            cache->plane_w[s] = w;
            cache->plane_h[s] = h;
            cache->stage_in[s] = act;
            cache->stage_pre[s] = pre;
        }
        act.resize(pre.size());
        for (std::size_t i = 0; i < pre.size(); ++i) act[i] = pre[i] > 0.0 ? pre[i] : 0.0;
        w = ow;
        h = oh;
    }
    FeatureMap fmap;
    fmap.width = w;
    fmap.height = h;
    fmap.channels = kFeatChannels;
    fmap.stride = kFeatStride;
    fmap.data = std::move(act);
    if (cache) {
        cache->plane_w[3] = w;
        cache->plane_h[3] = h;
        cache->fm = fmap.data;
    }

    std::vector<double> sx, sy;
    const std::vector<double> pooled =
        roi_align(fmap, roi, kRoiBins, cache ? &sx : nullptr, cache ? &sy : nullptr);
    if (cache) {
        for (int i = 0; i < kRoiBins * kRoiBins; ++i) {
            cache->sample_x[i] = sx[i];
            cache->sample_y[i] = sy[i];
        }
        cache->pooled = pooled;
    }

    // Projection head.
    const double* w1 = params.t[kFc1W].data();
    const double* b1 = params.t[kFc1B].data();
    std::vector<double> h1_pre(kHiddenDim), h1(kHiddenDim);
    for (int o = 0; o < kHiddenDim; ++o) {
        double acc = b1[o];
        const double* row = w1 + static_cast<std::size_t>(o) * kFlatDim;
        for (int i = 0; i < kFlatDim; ++i) acc += row[i] * pooled[i];
        h1_pre[o] = acc;
        h1[o] = acc > 0.0 ? acc : 0.0;
    }
    const double* w2 = params.t[kFc2W].data();
    const double* b2 = params.t[kFc2B].data();
    Embedding u{};
    for (int o = 0; o < kEmbedDim; ++o) {
        double acc = b2[o];
        const double* row = w2 + static_cast<std::size_t>(o) * kHiddenDim;
        for (int i = 0; i < kHiddenDim; ++i) acc += row[i] * h1[i];
        u[o] = acc;
    }
    const double len = norm(u);
    require(len > 1e-30, ErrorKind::Contract, "embedding collapsed to zero before normalization");
    Embedding v;
    for (int o = 0; o < kEmbedDim; ++o) v[o] = u[o] / len;

    if (cache) {
        cache->fc1_pre = std::move(h1_pre);
        cache->fc1_post = std::move(h1);
        cache->pre_norm = u;
        cache->pre_norm_len = len;
    }
    return v;
}

EncoderParams backprop(const EncoderParams& params, const EncodeCache& cache,
                       const Embedding& grad_embedding) {
    require(params.shapes_valid(), ErrorKind::Contract, "encoder parameter shapes are wrong");
    require(cache.params_stamp == params_fingerprint(params), ErrorKind::Contract,
            "cache does not match these parameters");

    EncoderParams g = zero_params();

    // Normalization: v = u/|u|, du = (g - (g.v) v) / |u|.
    Embedding v;
    for (int i = 0; i < kEmbedDim; ++i) v[i] = cache.pre_norm[i] / cache.pre_norm_len;
    const double gv = dot(grad_embedding, v);
    Embedding du;
    for (int i = 0; i < kEmbedDim; ++i) du[i] = (grad_embedding[i] - gv * v[i]) / cache.pre_norm_len;

    // fc2.
    const double* w2 = params.t[kFc2W].data();
    std::vector<double> dh1(kHiddenDim, 0.0);
    for (int o = 0; o < kEmbedDim; ++o) {
        g.t[kFc2B][o] = du[o];
        double* grow = g.t[kFc2W].data() + static_cast<std::size_t>(o) * kHiddenDim;
        const double* row = w2 + static_cast<std::size_t>(o) * kHiddenDim;
        for (int i = 0; i < kHiddenDim; ++i) {
            grow[i] = du[o] * cache.fc1_post[i];
            dh1[i] += du[o] * row[i];
        }
    }
    for (int i = 0; i < kHiddenDim; ++i) {
        if (cache.fc1_pre[i] <= 0.0) dh1[i] = 0.0;
    }

    // fc1.
    const double* w1 = params.t[kFc1W].data();
    std::vector<double> dpooled(kFlatDim, 0.0);
    for (int o = 0; o < kHiddenDim; ++o) {
        g.t[kFc1B][o] = dh1[o];
        if (dh1[o] == 0.0) continue;
        double* grow = g.t[kFc1W].data() + static_cast<std::size_t>(o) * kFlatDim;
        const double* row = w1 + static_cast<std::size_t>(o) * kFlatDim;
        for (int i = 0; i < kFlatDim; ++i) {
            grow[i] = dh1[o] * cache.pooled[i];
            dpooled[i] += dh1[o] * row[i];
        }
    }

    // RoIAlign: scatter each bin's gradient onto its four clamped neighbors.
    const int fw = cache.plane_w[3];
    const int fh = cache.plane_h[3];
    std::vector<double> dfm(cache.fm.size(), 0.0);
    for (int by = 0; by < kRoiBins; ++by) {
        for (int bx = 0; bx < kRoiBins; ++bx) {
            const int bin = by * kRoiBins + bx;
            const double x = cache.sample_x[bin];
            const double y = cache.sample_y[bin];
            const double fx = std::floor(x);
            const double fy = std::floor(y);
            const double wx = x - fx;
            const double wy = y - fy;
            auto cl = [](long vv, int hi) { return static_cast<int>(vv < 0 ? 0 : (vv > hi ? hi : vv)); };
            const int x0 = cl(static_cast<long>(fx), fw - 1);
            const int x1 = cl(static_cast<long>(fx) + 1, fw - 1);
            const int y0 = cl(static_cast<long>(fy), fh - 1);
            const int y1 = cl(static_cast<long>(fy) + 1, fh - 1);
            for (int c = 0; c < kFeatChannels; ++c) {
                const double gp = dpooled[(static_cast<std::size_t>(c) * kRoiBins + by) * kRoiBins + bx];
                if (gp == 0.0) continue;
                double* plane = dfm.data() + static_cast<std::size_t>(c) * fw * fh;
                plane[y0 * fw + x0] += gp * (1.0 - wy) * (1.0 - wx);
                plane[y0 * fw + x1] += gp * (1.0 - wy) * wx;
                plane[y1 * fw + x0] += gp * wy * (1.0 - wx);
                plane[y1 * fw + x1] += gp * wy * wx;
            }
        }
    }

    // Conv stages, last to first. dout enters post-ReLU; stage-3's post-ReLU
    // output is the feature map itself.
    std::vector<double> dout = std::move(dfm);
    for (int s = 2; s >= 0; --s) {
        const StageSpec& sp = kStages[s];
        const int w = cache.plane_w[s];
        const int h = cache.plane_h[s];
        const int ow = cache.plane_w[s + 1];
        const int oh = cache.plane_h[s + 1];
        const std::vector<double>& pre = cache.stage_pre[s];
        const std::vector<double>& input = cache.stage_in[s];

        // Through this stage's ReLU.
        for (std::size_t i = 0; i < dout.size(); ++i) {
            if (pre[i] <= 0.0) dout[i] = 0.0;
        }

        const double* wgt = params.t[2 * s].data();
        double* gw = g.t[2 * s].data();
        double* gb = g.t[2 * s + 1].data();
        std::vector<double> din;
        const bool need_din = s > 0;
        if (need_din) din.assign(static_cast<std::size_t>(sp.in_ch) * w * h, 0.0);

        for (int oc = 0; oc < sp.out_ch; ++oc) {
            const double* dplane = dout.data() + static_cast<std::size_t>(oc) * ow * oh;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const double d = dplane[static_cast<std::size_t>(oy) * ow + ox];
                    if (d == 0.0) continue;
                    gb[oc] += d;
                    for (int ic = 0; ic < sp.in_ch; ++ic) {
                        const double* iplane = input.data() + static_cast<std::size_t>(ic) * w * h;
                        double* gker =
                            gw + ((static_cast<std::size_t>(oc) * sp.in_ch + ic) * sp.kernel) * sp.kernel;
                        const double* ker =
                            wgt + ((static_cast<std::size_t>(oc) * sp.in_ch + ic) * sp.kernel) * sp.kernel;
                        double* diplane =
                            need_din ? din.data() + static_cast<std::size_t>(ic) * w * h : nullptr;
                        for (int ky = 0; ky < sp.kernel; ++ky) {
                            const int iy = oy * sp.stride - sp.pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < sp.kernel; ++kx) {
                                const int ix = ox * sp.stride - sp.pad + kx;
                                if (ix < 0 || ix >= w) continue;
                                gker[ky * sp.kernel + kx] += d * iplane[static_cast<std::size_t>(iy) * w + ix];
                                if (diplane) {
                                    diplane[static_cast<std::size_t>(iy) * w + ix] +=
                                        d * ker[ky * sp.kernel + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        dout = std::move(din);
    }
    return g;
}

void momentum_update(EncoderParams& key, const EncoderParams& query, double m) {
    require(m >= 0.0 && m <= 1.0, ErrorKind::InvalidArgument, "momentum must lie in [0, 1]");
    require(key.shapes_valid() && query.shapes_valid(), ErrorKind::Contract,
            "parameter shapes do not match the architecture");
    for (int id = 0; id < kTensorCount; ++id) {
        double* k = key.t[id].data();
        const double* q = query.t[id].data();
        const std::size_t n = key.t[id].size();
        for (std::size_t i = 0; i < n; ++i) k[i] = m * k[i] + (1.0 - m) * q[i];
    }
}

std::array<bool, kTensorCount> freeze_stages(int n) {
    require(n >= 0 && n <= 3, ErrorKind::InvalidArgument, "freeze count must lie in 0..3");
    std::array<bool, kTensorCount> trainable;
    for (int id = 0; id < kTensorCount; ++id) {
        const int stage = tensor_stage(id);
        trainable[id] = stage < 0 || stage >= n;
    }
    return trainable;
}

} // namespace segloc
