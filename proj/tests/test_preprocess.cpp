#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "mtseg/blob.hpp"
#include "mtseg/io_util.hpp"
#include "mtseg/pgm.hpp"
#include "mtseg/preprocess.hpp"
#include "mtseg/rng.hpp"
#include "support/oracles.hpp"

using namespace mtseg;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "mtseg_preprocess_test";
    std::filesystem::create_directories(dir);
    return dir;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// Depth frames with clustered values so modes and bands are nontrivial.
RgbdFrame random_frame(uint64_t seed, int w = 16, int h = 16) {
    Rng rng(seed);
    RgbdFrame f(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double pick = rng.uniform();
            if (pick < 0.3) continue;
            if (pick < 0.7)
                f.at(y, x) = uint16_t(700 + rng.uniform_int(-40, 40));
            else if (pick < 0.9)
                f.at(y, x) = uint16_t(1100 + rng.uniform_int(-20, 20));
            else
                f.at(y, x) = uint16_t(rng.uniform_int(300, 1500));
        }
    return f;
}

BBox random_box(Rng& rng, int w, int h) {
    const int x0 = int(rng.uniform_int(0, w - 2));
    const int y0 = int(rng.uniform_int(0, h - 2));
    const int x1 = int(rng.uniform_int(x0, w - 1));
    const int y1 = int(rng.uniform_int(y0, h - 1));
    return {x0, y0, x1, y1};
}

std::vector<uint16_t> in_box_values(const RgbdFrame& f, const BBox& b) {
    std::vector<uint16_t> v;
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x) v.push_back(f.at(y, x));
    return v;
}

// Union-find components over the 8-neighborhood, a different algorithm
// family than the library's BFS.
struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(size_t(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        while (parent[size_t(x)] != x) x = parent[size_t(x)] = parent[size_t(parent[size_t(x)])];
        return x;
    }
    void unite(int a, int b) { parent[size_t(find(a))] = find(b); }
};

using BlobKey = std::tuple<int, int, int, int, int, int64_t, int64_t>;

std::vector<BlobKey> oracle_blob_keys(const std::vector<uint8_t>& mask, int w, int h) {
    UnionFind uf(w * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask[size_t(y) * w + x]) continue;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    if (mask[size_t(ny) * w + nx]) uf.unite(y * w + x, ny * w + nx);
                }
        }
    std::map<int, Blob> by_root;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask[size_t(y) * w + x]) continue;
            auto [it, fresh] = by_root.try_emplace(uf.find(y * w + x));
            Blob& b = it->second;
            if (fresh) {
                b.min_x = b.max_x = x;
                b.min_y = b.max_y = y;
            }
            ++b.area;
            b.sum_x += x;
            b.sum_y += y;
            b.min_x = std::min(b.min_x, x);
            b.max_x = std::max(b.max_x, x);
            b.min_y = std::min(b.min_y, y);
            b.max_y = std::max(b.max_y, y);
        }
    std::vector<BlobKey> keys;
    for (const auto& [root, b] : by_root)
        keys.emplace_back(b.area, b.min_x, b.min_y, b.max_x, b.max_y, b.sum_x, b.sum_y);
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::vector<BlobKey> blob_keys(const std::vector<Blob>& blobs) {
    std::vector<BlobKey> keys;
    for (const auto& b : blobs)
        keys.emplace_back(b.area, b.min_x, b.min_y, b.max_x, b.max_y, b.sum_x, b.sum_y);
    std::sort(keys.begin(), keys.end());
    return keys;
}

}  // namespace

TEST_CASE("pgm round trips both sample widths") {
    const auto dir = temp_dir();

    Image8 a(5, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) a.at(y, x) = uint8_t(y * 50 + x);
    write_pgm(dir / "a.pgm", a);
    const Image8 a2 = read_pgm8(dir / "a.pgm");
    CHECK(a2.width == 5);
    CHECK(a2.height == 3);
    CHECK(a2.v == a.v);

    Image16 b(4, 2);
    b.v = {0, 1, 255, 256, 4660, 30000, 65535, 750};
    write_pgm(dir / "b.pgm", b);
    const Image16 b2 = read_pgm16(dir / "b.pgm");
    CHECK(b2.width == 4);
    CHECK(b2.height == 2);
    CHECK(b2.v == b.v);
}

TEST_CASE("pgm stores 16-bit samples big-endian") {
    const auto dir = temp_dir();
    Image16 img(1, 1);
    img.v = {0x1234};
    write_pgm(dir / "be.pgm", img);
    const std::string raw = read_bytes(dir / "be.pgm");
    REQUIRE(raw.size() >= 2);
    CHECK(uint8_t(raw[raw.size() - 2]) == 0x12);
    CHECK(uint8_t(raw[raw.size() - 1]) == 0x34);
}

TEST_CASE("pgm header parsing tolerates comments") {
    const auto dir = temp_dir();
    write_bytes(dir / "c.pgm", std::string("P5\n# made by hand\n2 1\n# depth\n255\n") +
                                   '\xAA' + '\xBB');
    const Image8 img = read_pgm8(dir / "c.pgm");
    CHECK(img.width == 2);
    CHECK(img.height == 1);
    CHECK(img.v == std::vector<uint8_t>{0xAA, 0xBB});
}

TEST_CASE("pgm rejects damaged files") {
    const auto dir = temp_dir();

    write_bytes(dir / "magic.pgm", "P2\n2 1\n255\n..");
    CHECK_THROWS_AS(read_pgm8(dir / "magic.pgm"), DataError);

    write_bytes(dir / "short.pgm", "P5\n4 4\n255\nab");
    CHECK_THROWS_WITH_AS(read_pgm8(dir / "short.pgm"), doctest::Contains("truncated"), DataError);

    write_bytes(dir / "dims.pgm", "P5\n0 1\n255\n");
    CHECK_THROWS_AS(read_pgm8(dir / "dims.pgm"), DataError);

    Image16 deep(1, 1);
    deep.v = {900};
    write_pgm(dir / "deep.pgm", deep);
    CHECK_THROWS_WITH_AS(read_pgm8(dir / "deep.pgm"), doctest::Contains("8-bit"), DataError);

    Image8 shallow(1, 1);
    write_pgm(dir / "shallow.pgm", shallow);
    CHECK_THROWS_WITH_AS(read_pgm16(dir / "shallow.pgm"), doctest::Contains("16-bit"), DataError);

    CHECK_THROWS_AS(read_pgm8(dir / "missing.pgm"), DataError);
}

TEST_CASE("single blob reports exact geometry") {
    std::vector<uint8_t> mask(20 * 20, 0);
    // Plus shape centered at (10, 10).
    for (const auto& [x, y] : {std::pair{10, 10}, {9, 10}, {11, 10}, {10, 9}, {10, 11}})
        mask[size_t(y) * 20 + x] = 1;
    const auto blobs = find_blobs(mask.data(), 20, 20);
    REQUIRE(blobs.size() == 1);
    CHECK(blobs[0].area == 5);
    CHECK(blobs[0].centroid_x() == doctest::Approx(10.0));
    CHECK(blobs[0].centroid_y() == doctest::Approx(10.0));
    CHECK(blobs[0].min_x == 9);
    CHECK(blobs[0].max_x == 11);
    CHECK(blobs[0].min_y == 9);
    CHECK(blobs[0].max_y == 11);
}

TEST_CASE("diagonal neighbors join, distant pixels do not") {
    std::vector<uint8_t> mask(6 * 6, 0);
    mask[0 * 6 + 0] = 1;
    mask[1 * 6 + 1] = 1;
    mask[2 * 6 + 2] = 1;
    mask[0 * 6 + 5] = 1;  // knight-move gap from (1,1), separate
    const auto blobs = find_blobs(mask.data(), 6, 6);
    REQUIRE(blobs.size() == 2);
    CHECK(blobs[0].area == 3);   // scanline order discovers (0,0) first
    CHECK(blobs[1].area == 1);
    CHECK(blobs[1].min_x == 5);
}

TEST_CASE("blobs and label map match a union-find oracle on random masks") {
    for (uint64_t seed : {11u, 12u, 13u, 14u, 15u, 16u, 17u, 18u}) {
        Rng rng(seed);
        const int w = 48, h = 40;
        std::vector<uint8_t> mask(size_t(w) * h, 0);
        for (auto& m : mask) m = rng.bernoulli(0.42) ? 1 : 0;

        std::vector<int32_t> labels;
        const auto blobs = find_blobs(mask.data(), w, h, &labels);
        REQUIRE(labels.size() == mask.size());
        CHECK(blob_keys(blobs) == oracle_blob_keys(mask, w, h));

        // The label map partitions exactly the nonzero pixels.
        std::vector<int> count(blobs.size(), 0);
        for (size_t i = 0; i < mask.size(); ++i) {
            if (mask[i] == 0) {
                CHECK(labels[i] == -1);
            } else {
                REQUIRE(labels[i] >= 0);
                REQUIRE(labels[i] < int32_t(blobs.size()));
                ++count[size_t(labels[i])];
            }
        }
        for (size_t b = 0; b < blobs.size(); ++b) CHECK(count[b] == blobs[b].area);
    }
}

TEST_CASE("depth mode picks the most frequent depth, ties to the nearer") {
    RgbdFrame f(3, 1);
    f.at(0, 0) = 800;
    f.at(0, 1) = 800;
    f.at(0, 2) = 1200;
    CHECK(depth_mode(f, {0, 0, 2, 0}, {}) == 800);

    RgbdFrame g(2, 1);
    g.at(0, 0) = 700;
    g.at(0, 1) = 500;
    CHECK(depth_mode(g, {0, 0, 1, 0}, {}) == 500);
}

TEST_CASE("depth mode matches exhaustive counting on random frames") {
    for (uint64_t seed = 100; seed < 300; ++seed) {
        const RgbdFrame f = random_frame(seed);
        Rng rng(seed * 7 + 1);
        const BBox box = random_box(rng, f.width, f.height);
        const auto values = in_box_values(f, box);
        const bool any = std::any_of(values.begin(), values.end(),
                                     [](uint16_t d) { return d != 0; });
        if (!any) {
            CHECK_THROWS_AS(depth_mode(f, box, {}), DataError);
            continue;
        }
        CHECK(depth_mode(f, box, {}) == oracle::depth_mode(values));
    }
}

TEST_CASE("depth mode honors the histogram bin width") {
    RgbdFrame f(4, 1);
    f.at(0, 0) = 101;
    f.at(0, 1) = 102;
    f.at(0, 2) = 103;
    f.at(0, 3) = 205;
    ThresholdParams p;
    p.mode_bin_width = 10;
    CHECK(depth_mode(f, {0, 0, 3, 0}, p) == 101);  // bin with 3 hits, smallest member

    RgbdFrame g(4, 1);
    g.at(0, 0) = 206;
    g.at(0, 1) = 101;
    g.at(0, 2) = 205;
    g.at(0, 3) = 102;
    CHECK(depth_mode(g, {0, 0, 3, 0}, p) == 101);  // two-hit tie, nearer bin wins
}

TEST_CASE("depth mode rejects bad inputs") {
    RgbdFrame f(4, 4);
    CHECK_THROWS_WITH_AS(depth_mode(f, {0, 0, 3, 3}, {}), doctest::Contains("no valid depth"),
                         DataError);

    f.at(1, 1) = 500;
    ThresholdParams bad_t;
    bad_t.t = 0;
    CHECK_THROWS_AS(depth_mode(f, {0, 0, 3, 3}, bad_t), DataError);
    ThresholdParams bad_bin;
    bad_bin.mode_bin_width = 0;
    CHECK_THROWS_AS(depth_mode(f, {0, 0, 3, 3}, bad_bin), DataError);

    CHECK_THROWS_WITH_AS(depth_mode(f, {2, 0, 1, 3}, {}), doctest::Contains("bbox"), DataError);
    CHECK_THROWS_AS(depth_mode(f, {0, 0, 4, 3}, {}), DataError);
}

TEST_CASE("threshold keeps the open band around the mode") {
    // Mode is 800 (three hits); band (500, 1100) exclusive at t = 300.
    RgbdFrame f(8, 1);
    const uint16_t depths[8] = {800, 800, 800, 501, 500, 1099, 1100, 0};
    for (int x = 0; x < 8; ++x) f.at(0, x) = depths[x];
    const BBox box{0, 0, 7, 0};
    const DepthCrop crop = threshold_hand(f, box, {});

    CHECK(crop.width == 8);
    CHECK(crop.height == 1);
    CHECK(crop.off_x == 0);
    CHECK(crop.off_y == 0);
    CHECK(crop.at(0, 0) == 800);
    CHECK(crop.at(0, 3) == 501);   // |501 - 800| = 299 < 300
    CHECK(crop.at(0, 4) == 0);     // exactly t away, dropped
    CHECK(crop.at(0, 5) == 1099);
    CHECK(crop.at(0, 6) == 0);
    CHECK(crop.at(0, 7) == 0);
}

TEST_CASE("threshold crops to the box extent") {
    RgbdFrame f(10, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 10; ++x) f.at(y, x) = 700;
    const BBox box{3, 1, 7, 4};
    const DepthCrop crop = threshold_hand(f, box, {});
    CHECK(crop.width == 5);
    CHECK(crop.height == 4);
    CHECK(crop.off_x == 3);
    CHECK(crop.off_y == 1);
    for (int y = 0; y < crop.height; ++y)
        for (int x = 0; x < crop.width; ++x) CHECK(crop.at(y, x) == 700);
}

TEST_CASE("threshold matches the per-pixel oracle on random frames") {
    int checked = 0;
    for (uint64_t seed = 500; checked < 100; ++seed) {
        const RgbdFrame f = random_frame(seed);
        Rng rng(seed * 13 + 5);
        const BBox box = random_box(rng, f.width, f.height);
        const auto values = in_box_values(f, box);
        if (std::none_of(values.begin(), values.end(), [](uint16_t d) { return d != 0; }))
            continue;
        ++checked;

        const uint16_t m = depth_mode(f, box, {});
        const DepthCrop crop = threshold_hand(f, box, {});
        const auto expect =
            oracle::threshold(f.depth, f.width, f.height, box.x0, box.y0, box.x1, box.y1, m, 300);
        for (int y = 0; y < crop.height; ++y)
            for (int x = 0; x < crop.width; ++x) {
                const size_t fi = size_t(box.y0 + y) * f.width + size_t(box.x0 + x);
                REQUIRE(crop.at(y, x) == expect[fi]);
            }
    }
    CHECK(checked == 100);
}

TEST_CASE("network input at canvas size is a pixelwise identity") {
    Rng rng(77);
    DepthCrop crop(96, 96);
    for (auto& d : crop.depth)
        d = rng.bernoulli(0.3) ? 0 : uint16_t(rng.uniform_int(300, 1000));
    const Tensor4 in = to_network_input(crop, 96, 96);

    uint16_t dmin = 65535, dmax = 0;
    for (uint16_t d : crop.depth)
        if (d != 0) {
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const uint16_t d = crop.at(y, x);
            const float want = d == 0 ? 0.0f : float(d - dmin) / float(dmax - dmin);
            REQUIRE(in.at(0, 0, y, x) == want);
        }
}

TEST_CASE("network input centers a wide crop and pads with zero") {
    DepthCrop crop(40, 20);
    for (auto& d : crop.depth) d = 700;
    const Tensor4 in = to_network_input(crop, 96, 96);

    const FitGeometry geo = fit_to_canvas(40, 20, 96, 96);
    CHECK(geo.dst_w == 96);
    CHECK(geo.dst_h == 48);
    CHECK(geo.off_x == 0);
    CHECK(geo.off_y == 24);
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const float v = in.at(0, 0, y, x);
            if (y >= 24 && y < 72)
                REQUIRE(v == 0.5f);  // constant depth maps to mid-range
            else
                REQUIRE(v == 0.0f);
        }
}

TEST_CASE("network input spans the unit range") {
    Rng rng(78);
    DepthCrop crop(31, 17);
    for (auto& d : crop.depth) d = uint16_t(rng.uniform_int(600, 900));
    crop.at(3, 4) = 600;
    crop.at(9, 20) = 900;
    const Tensor4 in = to_network_input(crop, 96, 96);

    float lo = 1e9f, hi = -1e9f;
    for (float v : in.v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
        if (v > 0.0f) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    CHECK(hi == 1.0f);
    CHECK(lo < 0.05f);
    CHECK_THROWS_AS(to_network_input(DepthCrop(), 96, 96), DataError);
}

TEST_CASE("training samples map labels and tips through one geometry") {
    // 100x50 box of depth 700 and class 2 on a 200x100 frame.
    RgbdFrame f(200, 100);
    Image8 comp(200, 100), tip(200, 100);
    for (int y = 20; y < 70; ++y)
        for (int x = 50; x < 150; ++x) {
            f.at(y, x) = 700;
            comp.at(y, x) = 2;
            tip.at(y, x) = 1;
        }
    for (int y = 43; y < 48; ++y)
        for (int x = 98; x < 103; ++x) tip.at(y, x) = 2;

    std::array<TipPoint, 5> tips{};
    tips[0] = {100.0f, 45.0f, true};
    const BBox box{50, 20, 149, 69};
    const TrainSample s = make_training_sample(f, comp, tip, tips, box, {});

    CHECK(s.input.h == 96);
    CHECK(s.input.w == 96);
    REQUIRE(s.tips[0].present);
    // Crop is 100x50 -> fit 96x48 with a 24-row offset.
    CHECK(s.tips[0].x == doctest::Approx(47.98).epsilon(1e-4));
    CHECK(s.tips[0].y == doctest::Approx(47.98).epsilon(1e-4));
    for (int i = 1; i < 5; ++i) CHECK_FALSE(s.tips[i].present);

    // The tip's pixel carries its own class in the resized map.
    const int px = int(std::lround(s.tips[0].x)), py = int(std::lround(s.tips[0].y));
    CHECK(s.tip.at(0, py, px) == 2);
    // Input coverage and component coverage agree everywhere.
    int nonzero = 0, labeled = 0;
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            nonzero += s.input.at(0, 0, y, x) != 0.0f;
            labeled += s.comp.at(0, y, x) != 0;
        }
    CHECK(nonzero == labeled);

    // A tip outside the detection box maps off-canvas and goes absent.
    std::array<TipPoint, 5> far{};
    far[2] = {5.0f, 5.0f, true};
    const TrainSample s2 = make_training_sample(f, comp, tip, far, box, {});
    CHECK_FALSE(s2.tips[2].present);
}

TEST_CASE("size mismatch between frame and labels is rejected") {
    RgbdFrame f(20, 20);
    f.at(5, 5) = 600;
    Image8 comp(20, 20), tip(19, 20);
    std::array<TipPoint, 5> tips{};
    CHECK_THROWS_AS(make_training_sample(f, comp, tip, tips, {0, 0, 19, 19}, {}), DataError);
}

namespace {

TrainSample block_sample(uint8_t cls = 4) {
    TrainSample s;
    s.input = Tensor4(1, 1, 96, 96);
    s.comp = ClassMap(1, 96, 96);
    s.tip = ClassMap(1, 96, 96);
    for (int y = 44; y < 52; ++y)
        for (int x = 44; x < 52; ++x) {
            s.input.at(0, 0, y, x) = 0.7f;
            s.comp.at(0, y, x) = cls;
            s.tip.at(0, y, x) = cls;
        }
    s.tips[cls - 2] = {47.5f, 47.5f, true};
    return s;
}

bool samples_equal(const TrainSample& a, const TrainSample& b) {
    if (a.input.v != b.input.v || a.comp.v != b.comp.v || a.tip.v != b.tip.v) return false;
    for (size_t i = 0; i < a.tips.size(); ++i) {
        if (a.tips[i].present != b.tips[i].present) return false;
        if (a.tips[i].present && (a.tips[i].x != b.tips[i].x || a.tips[i].y != b.tips[i].y))
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("identity augmentation returns the sample bit-exactly") {
    const TrainSample s = block_sample();
    const TrainSample out = apply_augment(s, AugmentParams{});
    CHECK(samples_equal(s, out));
}

TEST_CASE("mirroring twice restores the sample bit-exactly") {
    TrainSample s = block_sample();
    s.input.at(0, 0, 10, 5) = 0.3f;  // break the left-right symmetry
    s.comp.at(0, 10, 5) = 1;
    s.tips[2] = {40.0f, 47.5f, true};
    AugmentParams p;
    p.mirror = true;
    const TrainSample once = apply_augment(s, p);
    CHECK_FALSE(samples_equal(s, once));
    CHECK(samples_equal(s, apply_augment(once, p)));
    REQUIRE(once.tips[2].present);
    CHECK(once.tips[2].x == 95.0f - 40.0f);
    CHECK(once.input.at(0, 0, 10, 90) == 0.3f);
}

TEST_CASE("unit-scale augmentation keeps class areas within tolerance") {
    // Content well inside the canvas so nothing clips.
    TrainSample s;
    s.input = Tensor4(1, 1, 96, 96);
    s.comp = ClassMap(1, 96, 96);
    s.tip = ClassMap(1, 96, 96);
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            const double dx = x - 47.5, dy = y - 47.5;
            const double r = std::sqrt(dx * dx + dy * dy);
            if (r < 12) {
                s.comp.at(0, y, x) = 3;
                s.input.at(0, 0, y, x) = 0.6f;
            } else if (r < 20) {
                s.comp.at(0, y, x) = 1;
                s.input.at(0, 0, y, x) = 0.4f;
            }
        }

    std::array<int, 7> before{};
    for (uint8_t c : s.comp.v) ++before[c];

    for (uint64_t key = 1; key <= 30; ++key) {
        Rng rng(key);
        AugmentParams p = draw_augment(rng, 96, 96);
        p.scale = 1.0f;
        const TrainSample out = apply_augment(s, p);
        std::array<int, 7> after{};
        for (uint8_t c : out.comp.v) ++after[c];
        for (int c = 1; c < 7; ++c) {
            if (before[size_t(c)] == 0) continue;
            const double ratio = double(after[size_t(c)]) / before[size_t(c)];
            CHECK(ratio > 0.85);
            CHECK(ratio < 1.15);
        }
    }
}

TEST_CASE("augmented tips stay on their own class") {
    const TrainSample s = block_sample(5);
    for (uint64_t key = 100; key < 150; ++key) {
        const TrainSample out = augment(s, key);
        REQUIRE(out.tips[3].present);  // centered content cannot clip
        const int px = int(std::lround(out.tips[3].x));
        const int py = int(std::lround(out.tips[3].y));
        REQUIRE(px >= 0);
        REQUIRE(py >= 0);
        REQUIRE(px < 96);
        REQUIRE(py < 96);
        CHECK(out.tip.at(0, py, px) == 5);
        CHECK(out.comp.at(0, py, px) == 5);
    }
}

TEST_CASE("tips pushed off the canvas go absent") {
    TrainSample s = block_sample();
    s.tips[2] = {1.0f, 47.5f, true};
    AugmentParams p;
    p.tx = -9.0f;  // within the ±10% draw range
    const TrainSample out = apply_augment(s, p);
    CHECK_FALSE(out.tips[2].present);
}

TEST_CASE("augmentation draws stay inside the documented ranges") {
    Rng rng(4242);
    bool saw_mirror = false, saw_plain = false;
    for (int i = 0; i < 500; ++i) {
        const AugmentParams p = draw_augment(rng, 96, 96);
        CHECK(std::abs(p.tx) <= 9.6f);
        CHECK(std::abs(p.ty) <= 9.6f);
        CHECK(std::abs(p.rot_deg) <= 25.0f);
        CHECK(p.scale >= 0.85f);
        CHECK(p.scale <= 1.15f);
        (p.mirror ? saw_mirror : saw_plain) = true;
    }
    CHECK(saw_mirror);
    CHECK(saw_plain);
}

TEST_CASE("keyed augmentation is reproducible and key-sensitive") {
    const TrainSample s = block_sample();
    const TrainSample a = augment(s, 999);
    const TrainSample b = augment(s, 999);
    CHECK(samples_equal(a, b));

    bool any_different = false;
    for (uint64_t key = 1; key <= 4 && !any_different; ++key)
        any_different = !samples_equal(a, augment(s, key));
    CHECK(any_different);
}
