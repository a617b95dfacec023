#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "segloc/encoder.hpp"
#include "segloc/rng.hpp"

using namespace segloc;

namespace {

RasterImage random_image(Rng& rng, int w, int h) {
    RasterImage img(w, h);
    for (auto& px : img.data) px = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

FeatureMap map_from(const std::vector<double>& vals, int w, int h, int channels = 1) {
    FeatureMap fm;
    fm.width = w;
    fm.height = h;
    fm.channels = channels;
    fm.data = vals;
    return fm;
}

} // namespace

TEST_CASE("initialization is seed-deterministic with zero biases and bounded weights") {
    const EncoderParams a = init_params(7);
    const EncoderParams b = init_params(7);
    const EncoderParams c = init_params(8);
    bool all_equal = true, any_diff = false;
    for (int id = 0; id < kTensorCount; ++id) {
        if (a.t[id] != b.t[id]) all_equal = false;
        if (a.t[id] != c.t[id]) any_diff = true;
    }
    CHECK(all_equal);
    CHECK(any_diff);
    CHECK(a.shapes_valid());

    for (int id = 0; id < kTensorCount; ++id) {
        const auto& shape = tensor_shape(id);
        if (shape.size() == 1) {
            for (double v : a.t[id]) CHECK(v == 0.0);
            continue;
        }
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= static_cast<std::size_t>(shape[d]);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double v : a.t[id]) {
            CHECK(v >= -bound);
            CHECK(v <= bound);
        }
    }
}

TEST_CASE("embeddings are unit-norm and pure") {
    Rng rng(40);
    const EncoderParams params = init_params(3);
    for (int trial = 0; trial < 5; ++trial) {
        const RasterImage img = random_image(rng, 40 + static_cast<int>(rng.below(30)),
                                             40 + static_cast<int>(rng.below(30)));
        const BBox roi{4, 4, img.width - 8, img.height - 8};
        const Embedding e1 = encode(params, img, roi);
        const Embedding e2 = encode(params, img, roi);
        CHECK(std::fabs(norm(e1) - 1.0) <= 1e-9);
        CHECK(e1 == e2);
    }
}

TEST_CASE("an all-black image collapses the embedding and is rejected") {
    const EncoderParams params = init_params(1);
    const RasterImage img(32, 32); // zero-initialized pixels
    try {
        encode(params, img, BBox{4, 4, 24, 24});
        FAIL("expected a contract error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Contract);
    }
}

TEST_CASE("rois outside the image are rejected") {
    const EncoderParams params = init_params(1);
    Rng rng(41);
    const RasterImage img = random_image(rng, 32, 32);
    CHECK_THROWS_AS(encode(params, img, BBox{20, 20, 16, 16}), Error);
}

TEST_CASE("roi pooling of the whole 2x2 map in one bin is the center mean") {
    const FeatureMap fm = map_from({1.0, 2.0, 3.0, 4.0}, 2, 2);
    // whole map in image pixels: 2 cells * stride 8 = 16
    const std::vector<double> pooled = roi_align(fm, BBox{0, 0, 16, 16}, 1);
    REQUIRE(pooled.size() == 1);
    CHECK(pooled[0] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("a roi centered on a cell center samples that cell exactly") {
    const FeatureMap fm = map_from({1.0, 2.0, 3.0, 4.0}, 2, 2);
    // feature cell (0,0) center sits at image pixel 4 on both axes
    const std::vector<double> pooled = roi_align(fm, BBox{0, 0, 8, 8}, 1);
    REQUIRE(pooled.size() == 1);
    CHECK(pooled[0] == 1.0);
}

TEST_CASE("lattice-aligned 3x3 pooling reads cells with border clamping") {
    const FeatureMap fm = map_from({1.0, 2.0, 3.0, 4.0}, 2, 2);
    // bin centers land on feature coords 0, 1, 2; 2 clamps to the border
    const std::vector<double> pooled = roi_align(fm, BBox{0, 0, 24, 24}, 3);
    REQUIRE(pooled.size() == 9);
    const std::vector<double> want = {1, 2, 2, 3, 4, 4, 3, 4, 4};
    for (int i = 0; i < 9; ++i) CHECK(pooled[i] == want[i]);
}

TEST_CASE("roi pooling matches the standalone bilinear oracle") {
    Rng rng(42);
    std::vector<double> plane(25);
    for (double& v : plane) v = rng.uniform(-2.0, 2.0);
    const FeatureMap fm = map_from(plane, 5, 5);
    for (int trial = 0; trial < 50; ++trial) {
        const int bins = 1 + static_cast<int>(rng.below(3));
        const BBox roi{static_cast<int>(rng.below(30)), static_cast<int>(rng.below(30)),
                       1 + static_cast<int>(rng.below(30)), 1 + static_cast<int>(rng.below(30))};
        std::vector<double> sx, sy;
        const std::vector<double> pooled = roi_align(fm, roi, bins, &sx, &sy);
        for (int by = 0; by < bins; ++by) {
            for (int bx = 0; bx < bins; ++bx) {
                // sample coordinates straight from the documented convention
                const double fx0 = roi.x / 8.0 - 0.5;
                const double fy0 = roi.y / 8.0 - 0.5;
                const double bw = roi.w / (8.0 * bins);
                const double bh = roi.h / (8.0 * bins);
                const double want_x = fx0 + (bx + 0.5) * bw;
                const double want_y = fy0 + (by + 0.5) * bh;
                const std::size_t bin = static_cast<std::size_t>(by) * bins + bx;
                CHECK(sx[bin] == doctest::Approx(want_x).epsilon(1e-12));
                CHECK(sy[bin] == doctest::Approx(want_y).epsilon(1e-12));
                CHECK(pooled[bin] ==
                      doctest::Approx(oracle::bilinear_at(plane, 5, 5, want_x, want_y))
                          .epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("roi pooling ignores features outside its bilinear support") {
    Rng rng(43);
    std::vector<double> plane(16);
    for (double& v : plane) v = rng.uniform(-1.0, 1.0);
    FeatureMap fm = map_from(plane, 4, 4);
    // roi (12,12,8,8): feature coords [1.0, 2.0]; 2x2 bins sample at
    // 1.25/1.75, touching only cells 1 and 2 on each axis.
    const std::vector<double> before = roi_align(fm, BBox{12, 12, 8, 8}, 2);
    for (int i = 0; i < 4; ++i) {
        fm.data[0 * 4 + i] = 99.0;  // row 0
        fm.data[3 * 4 + i] = -99.0; // row 3
        fm.data[i * 4 + 0] = 55.0;  // col 0
        fm.data[i * 4 + 3] = -55.0; // col 3
    }
    const std::vector<double> after = roi_align(fm, BBox{12, 12, 8, 8}, 2);
    CHECK(before == after);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
    Rng rng(44);
    const EncoderParams params = init_params(5);
    const RasterImage img = random_image(rng, 24, 24);
    EncodeCache cache;
    encode(params, img, BBox{2, 2, 20, 20}, &cache);
    const EncoderParams grads = backprop(params, cache, Embedding{});
    for (int id = 0; id < kTensorCount; ++id) {
        for (double g : grads.t[id]) CHECK(g == 0.0);
    }
}

TEST_CASE("gradient of the normalization is orthogonal to the output direction") {
    // upstream gradient equal to the embedding itself lies outside the tangent
    // space, so every parameter gradient must vanish
    Rng rng(45);
    const EncoderParams params = init_params(6);
    const RasterImage img = random_image(rng, 24, 24);
    EncodeCache cache;
    const Embedding e = encode(params, img, BBox{0, 0, 24, 24}, &cache);
    const EncoderParams grads = backprop(params, cache, e);
    double max_abs = 0.0;
    for (int id = 0; id < kTensorCount; ++id) {
        for (double g : grads.t[id]) max_abs = std::max(max_abs, std::fabs(g));
    }
    CHECK(max_abs <= 1e-12);
}

TEST_CASE("analytic parameter gradients match finite differences on a 16x16 input") {
    Rng rng(46);
    double worst = 0.0;
    const RasterImage img = random_image(rng, 16, 16);
    const BBox roi{2, 2, 12, 12};
    EncoderParams params = init_params(11);
    Embedding dir{};
    double len = 0.0;
    for (double& d : dir) {
        d = rng.normal();
        len += d * d;
    }
    len = std::sqrt(len);
    for (double& d : dir) d /= len;

    EncodeCache cache;
    encode(params, img, roi, &cache);
    const EncoderParams analytic = backprop(params, cache, dir);
    auto scalar = [&]() { return dot(encode(params, img, roi), dir); };

    const double h = 1e-5;
    for (int id = 0; id < kTensorCount; ++id) {
        const std::size_t n = params.t[id].size();
        for (std::size_t s = 0; s < std::min<std::size_t>(12, n); ++s) {
            const std::size_t i = rng.below(n);
            const double saved = params.t[id][i];
            params.t[id][i] = saved + h;
            const double up = scalar();
            params.t[id][i] = saved - h;
            const double down = scalar();
            params.t[id][i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic.t[id][i];
            const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-3});
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("backprop rejects a cache from different parameters") {
    Rng rng(47);
    EncoderParams params = init_params(9);
    const RasterImage img = random_image(rng, 24, 24);
    EncodeCache cache;
    encode(params, img, BBox{0, 0, 24, 24}, &cache);
    params.t[kFc2B][0] += 1.0;
    Embedding g{};
    g[0] = 1.0;
    try {
        backprop(params, cache, g);
        FAIL("expected a contract error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Contract);
    }
}

TEST_CASE("momentum update follows its closed form") {
    EncoderParams key = init_params(20);
    const EncoderParams query = init_params(21);

    EncoderParams unchanged = key;
    momentum_update(unchanged, query, 1.0);
    for (int id = 0; id < kTensorCount; ++id) CHECK(unchanged.t[id] == key.t[id]);

    EncoderParams replaced = key;
    momentum_update(replaced, query, 0.0);
    for (int id = 0; id < kTensorCount; ++id) CHECK(replaced.t[id] == query.t[id]);

    // theta_k = 1, theta_q = 0, m = 0.9 -> 0.9
    EncoderParams ones = zero_params();
    for (auto& t : ones.t) std::fill(t.begin(), t.end(), 1.0);
    momentum_update(ones, zero_params(), 0.9);
    CHECK(ones.t[kConv1W][0] == 0.9);

    // t sequential updates against m^t * k0 + (1 - m^t) * q
    const double m = 0.97;
    EncoderParams seq = key;
    for (int t = 1; t <= 5; ++t) {
        momentum_update(seq, query, m);
        const double mt = std::pow(m, t);
        double worst = 0.0;
        for (int id = 0; id < kTensorCount; ++id) {
            for (std::size_t i = 0; i < seq.t[id].size(); ++i) {
                const double want = mt * key.t[id][i] + (1.0 - mt) * query.t[id][i];
                worst = std::max(worst, std::fabs(seq.t[id][i] - want));
            }
        }
        CHECK(worst <= 1e-12);
    }

    CHECK_THROWS_AS(momentum_update(key, query, 1.5), Error);
    EncoderParams misshapen = key;
    misshapen.t[kFc1B].pop_back();
    CHECK_THROWS_AS(momentum_update(misshapen, query, 0.5), Error);
}

TEST_CASE("freeze masks cover exactly the requested conv stages") {
    const auto all = freeze_stages(0);
    for (int id = 0; id < kTensorCount; ++id) CHECK(all[id]);
    const auto head_only = freeze_stages(3);
    for (int id = 0; id < kTensorCount; ++id) {
        CHECK(head_only[id] == (tensor_stage(id) == -1));
    }
    const auto one = freeze_stages(1);
    CHECK_FALSE(one[kConv1W]);
    CHECK_FALSE(one[kConv1B]);
    CHECK(one[kConv2W]);
    CHECK_THROWS_AS(freeze_stages(4), Error);
    CHECK_THROWS_AS(freeze_stages(-1), Error);
}

TEST_CASE("parameter fingerprints react to any single value change") {
    EncoderParams params = init_params(30);
    const std::uint64_t before = params_fingerprint(params);
    CHECK(before == params_fingerprint(params));
    params.t[kConv3W][17] = std::nextafter(params.t[kConv3W][17], 1e9);
    CHECK(params_fingerprint(params) != before);
}
