#include <doctest.h>

#include <cmath>

#include "mtseg/layers.hpp"
#include "mtseg/rng.hpp"
#include "support/oracles.hpp"

using namespace mtseg;

namespace {

Tensor4 random_tensor(Rng& r, int n, int c, int h, int w, float lo = -1, float hi = 1) {
    return Tensor4::random_uniform(n, c, h, w, r, lo, hi);
}

}  // namespace

TEST_CASE("conv2d matches the direct-definition oracle across shapes") {
    Rng r(Rng::key(21, 0));
    for (int trial = 0; trial < 50; ++trial) {
        int n = int(r.uniform_int(1, 4));
        int ic = int(r.uniform_int(1, 4));
        int oc = int(r.uniform_int(1, 4));
        int k = 1 + 2 * int(r.uniform_int(0, 2));  // 1, 3, 5
        int stride = int(r.uniform_int(1, 2));
        int pad = int(r.uniform_int(0, 2));
        int h = int(r.uniform_int(std::max(1, k - 2 * pad), 12));
        int w = int(r.uniform_int(std::max(1, k - 2 * pad), 12));
        CAPTURE(n);
        CAPTURE(ic);
        CAPTURE(oc);
        CAPTURE(k);
        CAPTURE(stride);
        CAPTURE(pad);
        CAPTURE(h);
        CAPTURE(w);

        auto x = random_tensor(r, n, ic, h, w);
        auto wt = random_tensor(r, oc, ic, k, k);
        std::vector<float> bias(static_cast<size_t>(oc), 0.0f);
        for (auto& b : bias) b = r.uniformf(-0.5f, 0.5f);

        auto got = conv2d_forward(x, wt, std::span<const float>(bias), stride, pad);
        auto want = oracle::conv2d(x, wt, bias, stride, pad);
        REQUIRE(got.same_shape(want));
        CHECK(max_abs_diff(got, want) < 1e-5);
    }
}

TEST_CASE("conv2d parallel batch path is identical to serial") {
    Rng r(Rng::key(21, 5));
    auto x = random_tensor(r, 5, 3, 11, 9);
    auto wt = random_tensor(r, 4, 3, 3, 3);
    std::vector<float> bias = {0.1f, -0.2f, 0.3f, 0.0f};
    auto serial = conv2d_forward(x, wt, std::span<const float>(bias), 1, 1);
    set_batch_threads(3);
    auto parallel = conv2d_forward(x, wt, std::span<const float>(bias), 1, 1);
    set_batch_threads(1);
    CHECK(max_abs_diff(serial, parallel) == 0.0);
}

TEST_CASE("conv2d rejects malformed arguments") {
    Rng r(Rng::key(21, 1));
    auto x = random_tensor(r, 1, 2, 6, 6);
    auto wt = random_tensor(r, 3, 2, 3, 3);
    std::vector<float> bias(3, 0.0f);

    auto bad_ch = random_tensor(r, 3, 5, 3, 3);
    CHECK_THROWS_AS(conv2d_forward(x, bad_ch, std::span<const float>(bias), 1, 1),
                    DataError);
    auto even_k = random_tensor(r, 3, 2, 4, 4);
    CHECK_THROWS_AS(conv2d_forward(x, even_k, std::span<const float>(bias), 1, 1),
                    DataError);
    std::vector<float> short_bias(2, 0.0f);
    CHECK_THROWS_AS(conv2d_forward(x, wt, std::span<const float>(short_bias), 1, 1),
                    DataError);
    CHECK_THROWS_AS(conv2d_forward(x, wt, std::span<const float>(bias), 0, 1), DataError);
    CHECK_THROWS_AS(conv2d_forward(x, wt, std::span<const float>(bias), 1, -1), DataError);

    auto tiny = random_tensor(r, 1, 2, 2, 2);
    CHECK_THROWS_AS(conv2d_forward(tiny, wt, std::span<const float>(bias), 1, 0),
                    DataError);

    auto gout = random_tensor(r, 1, 3, 5, 5);  // wrong spatial dims for pad=1
    CHECK_THROWS_AS(conv2d_backward(x, wt, gout, 1, 1), DataError);
}

TEST_CASE("maxpool2x2 matches window-scan oracle and breaks ties low") {
    Rng r(Rng::key(22, 0));
    for (int trial = 0; trial < 10; ++trial) {
        auto x = random_tensor(r, int(r.uniform_int(1, 3)), int(r.uniform_int(1, 4)),
                               2 * int(r.uniform_int(1, 6)), 2 * int(r.uniform_int(1, 6)));
        auto got = maxpool2x2_forward(x);
        Tensor4 want_out;
        PoolIndices want_idx;
        oracle::maxpool2x2(x, want_out, want_idx);
        CHECK(max_abs_diff(got.output, want_out) == 0.0);
        CHECK(got.indices.v == want_idx.v);
    }

    // All-equal window: offset 0 must win.
    auto flat = Tensor4::full(1, 1, 4, 4, 2.5f);
    auto p = maxpool2x2_forward(flat);
    for (uint8_t off : p.indices.v) CHECK(off == 0);

    // Tie between offsets 1 and 2 resolves to 1 (row-major order).
    Tensor4 t(1, 1, 2, 2);
    t.at(0, 0, 0, 0) = 0.0f;
    t.at(0, 0, 0, 1) = 7.0f;
    t.at(0, 0, 1, 0) = 7.0f;
    t.at(0, 0, 1, 1) = -1.0f;
    auto pt = maxpool2x2_forward(t);
    CHECK(pt.output.at(0, 0, 0, 0) == 7.0f);
    CHECK(pt.indices.at(0, 0, 0, 0) == 1);

    Tensor4 odd(1, 1, 3, 4);
    CHECK_THROWS_AS(maxpool2x2_forward(odd), DataError);
}

TEST_CASE("maxunpool2x2 scatters to recorded positions") {
    Rng r(Rng::key(22, 1));
    // Distinct values: unpool(pool(x)) keeps each max at its original spot.
    Tensor4 x(1, 2, 6, 6);
    std::vector<float> perm(x.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = float(i);
    r.shuffle(perm);
    x.v = perm;
    auto p = maxpool2x2_forward(x);
    auto up = maxunpool2x2(p.output, p.indices, 6, 6);
    int nonzero = 0;
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 6; ++y)
            for (int xx = 0; xx < 6; ++xx) {
                float v = up.at(0, c, y, xx);
                if (v != 0.0f) {
                    ++nonzero;
                    CHECK(v == x.at(0, c, y, xx));
                }
            }
    CHECK(nonzero == 2 * 3 * 3);

    // Round trip through the backward gather recovers the pooled map.
    auto back = maxunpool2x2_backward(up, p.indices);
    CHECK(max_abs_diff(back, p.output) == 0.0);

    PoolIndices corrupt = p.indices;
    corrupt.v[4] = 9;
    CHECK_THROWS_AS(maxunpool2x2(p.output, corrupt, 6, 6), DataError);
    CHECK_THROWS_AS(maxunpool2x2(p.output, p.indices, 5, 6), DataError);
}

TEST_CASE("batchnorm train mode normalizes and updates running stats") {
    Rng r(Rng::key(23, 0));
    auto x = random_tensor(r, 4, 3, 5, 5, -3.0f, 9.0f);
    std::vector<float> gamma(3, 1.0f), beta(3, 0.0f);
    auto stats = BnStats<float>::fresh(3);
    BnCache<float> cache;
    auto y = batchnorm_forward(x, std::span<const float>(gamma),
                               std::span<const float>(beta), 1e-5f, Mode::train, stats,
                               &cache);

    const size_t m = size_t(x.n) * x.h * x.w;
    for (int c = 0; c < 3; ++c) {
        double sum = 0, sumsq = 0;
        for (int i = 0; i < x.n; ++i)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    double v = y.at(i, c, yy, xx);
                    sum += v;
                    sumsq += v * v;
                }
        CHECK(std::abs(sum / double(m)) < 1e-5);
        CHECK(sumsq / double(m) == doctest::Approx(1.0).epsilon(1e-3));

        // Fresh stats are (0, 1); one update folds in a tenth of the batch.
        double bmean = 0, bvar = 0;
        for (int i = 0; i < x.n; ++i)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) bmean += x.at(i, c, yy, xx);
        bmean /= double(m);
        for (int i = 0; i < x.n; ++i)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    double d = x.at(i, c, yy, xx) - bmean;
                    bvar += d * d;
                }
        bvar /= double(m);  // biased, matching the normalizer
        CHECK(stats.mean[c] == doctest::Approx(0.1 * bmean).epsilon(1e-4));
        CHECK(stats.var[c] == doctest::Approx(0.9 + 0.1 * bvar).epsilon(1e-4));
    }
}

TEST_CASE("batchnorm infer mode uses running stats, not batch stats") {
    Rng r(Rng::key(23, 1));
    auto x = random_tensor(r, 2, 2, 4, 4, 5.0f, 6.0f);
    std::vector<float> gamma(2, 1.0f), beta(2, 0.0f);
    auto stats = BnStats<float>::fresh(2);  // mean 0, var 1
    auto y = batchnorm_forward(x, std::span<const float>(gamma),
                               std::span<const float>(beta), 1e-5f, Mode::infer, stats);
    // With identity stats the output equals the input (up to eps).
    CHECK(max_abs_diff(x, y) < 1e-4);
    CHECK(stats.mean[0] == 0.0f);  // infer never touches the stats
}

TEST_CASE("batchnorm argument validation") {
    std::vector<float> gamma(2, 1.0f), beta(2, 0.0f);
    auto stats = BnStats<float>::fresh(2);
    Tensor4 empty(0, 2, 4, 4);
    CHECK_THROWS_AS(batchnorm_forward(empty, std::span<const float>(gamma),
                                      std::span<const float>(beta), 1e-5f, Mode::train,
                                      stats),
                    DataError);
    Tensor4 x(1, 3, 4, 4);
    CHECK_THROWS_AS(batchnorm_forward(x, std::span<const float>(gamma),
                                      std::span<const float>(beta), 1e-5f, Mode::train,
                                      stats),
                    DataError);
}

TEST_CASE("relu forward and backward") {
    Tensor4 x(1, 1, 2, 3);
    x.v = {-1.5f, -0.0f, 0.0f, 0.5f, 2.0f, -3.0f};
    auto y = relu_forward(x);
    CHECK(y.v == std::vector<float>{0.0f, 0.0f, 0.0f, 0.5f, 2.0f, 0.0f});

    Tensor4 g(1, 1, 2, 3);
    g.v = {1, 2, 3, 4, 5, 6};
    auto gin = relu_backward(y, g);
    CHECK(gin.v == std::vector<float>{0, 0, 0, 4, 5, 0});
}

TEST_CASE("softmax sums to one and is stable at extreme logits") {
    Rng r(Rng::key(24, 0));
    auto z = random_tensor(r, 2, 7, 6, 6, -30.0f, 30.0f);
    z.at(0, 3, 0, 0) = 1e4f;
    z.at(0, 5, 2, 2) = -1e4f;
    auto p = softmax_channelwise(z);
    REQUIRE(p.all_finite());
    for (int i = 0; i < 2; ++i)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                double s = 0;
                for (int c = 0; c < 7; ++c) s += p.at(i, c, y, x);
                CHECK(std::abs(s - 1.0) <= 1e-6);
            }

    auto flat = Tensor4::full(1, 4, 2, 2, 3.25f);
    auto pf = softmax_channelwise(flat);
    for (float v : pf.v) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("cross entropy hand-checked values and ignore handling") {
    // Two pixels, three classes, known probabilities.
    Tensor4 probs(1, 3, 1, 2);
    probs.at(0, 0, 0, 0) = 0.7f;
    probs.at(0, 1, 0, 0) = 0.2f;
    probs.at(0, 2, 0, 0) = 0.1f;
    probs.at(0, 0, 0, 1) = 0.25f;
    probs.at(0, 1, 0, 1) = 0.25f;
    probs.at(0, 2, 0, 1) = 0.5f;
    ClassMap labels(1, 1, 2);
    labels.at(0, 0, 0) = 0;
    labels.at(0, 0, 1) = 2;
    auto res = cross_entropy_loss(probs, labels);
    double want = -(std::log(0.7) + std::log(0.5)) / 2.0;
    CHECK(res.loss == doctest::Approx(want).epsilon(1e-6));
    CHECK(res.grad.at(0, 0, 0, 0) == doctest::Approx(-0.5 / 0.7).epsilon(1e-5));
    CHECK(res.grad.at(0, 1, 0, 0) == 0.0f);

    // Ignoring class 2 drops the second pixel from the mean.
    auto res2 = cross_entropy_loss(probs, labels, 2);
    CHECK(res2.loss == doctest::Approx(-std::log(0.7)).epsilon(1e-6));
    CHECK(res2.grad.at(0, 2, 0, 1) == 0.0f);

    ClassMap bad(1, 1, 2);
    bad.at(0, 0, 0) = 7;
    CHECK_THROWS_AS(cross_entropy_loss(probs, bad), DataError);

    ClassMap all_ignored(1, 1, 2);
    all_ignored.at(0, 0, 0) = 1;
    all_ignored.at(0, 0, 1) = 1;
    CHECK_THROWS_AS(cross_entropy_loss(probs, all_ignored, 1), DataError);
}

TEST_CASE("fused softmax cross entropy equals the composed route") {
    Rng r(Rng::key(24, 1));
    auto z = random_tensor(r, 2, 5, 4, 4, -4.0f, 4.0f);
    ClassMap labels(2, 4, 4);
    for (auto& l : labels.v) l = uint8_t(r.uniform_int(0, 4));

    auto fused = softmax_xent(z, labels, 0);

    auto probs = softmax_channelwise(z);
    auto ce = cross_entropy_loss(probs, labels, 0);
    auto composed = softmax_backward(probs, ce.grad);

    CHECK(double(fused.loss) == doctest::Approx(double(ce.loss)).epsilon(1e-6));
    CHECK(max_abs_diff(fused.probs, probs) == 0.0);
    CHECK(max_abs_diff(fused.grad_logits, composed) < 1e-6);
}
