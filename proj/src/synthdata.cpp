#include "mtseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>

#include "mtseg/io_util.hpp"

namespace mtseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x = 0, y = 0;
};

uint16_t clamp_depth(double v) {
    return uint16_t(std::clamp(std::lround(v), 1l, 65535l));
}

// Distance from the palm center to the ellipse boundary along a global
// direction; the palm frame is the global frame rotated by orient.
double ellipse_reach(const HandPose& p, Vec2 dir) {
    const double t = -double(p.orient_deg) * kPi / 180.0;
    const double ex = std::cos(t) * dir.x - std::sin(t) * dir.y;
    const double ey = std::sin(t) * dir.x + std::cos(t) * dir.y;
    const double q = (ex / p.rx) * (ex / p.rx) + (ey / p.ry) * (ey / p.ry);
    return 1.0 / std::sqrt(q);
}

Vec2 finger_dir(const FingerGeom& f) {
    const double t = double(f.angle_deg) * kPi / 180.0;
    return {std::cos(t), std::sin(t)};
}

Vec2 tip_center(const HandPose& p, int i) {
    const Vec2 d = finger_dir(p.fingers[size_t(i)]);
    const double reach = ellipse_reach(p, d) + double(p.fingers[size_t(i)].length);
    return {double(p.cx) + reach * d.x, double(p.cy) + reach * d.y};
}

double dist_to_segment(Vec2 p, Vec2 a, Vec2 b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

// Visits every pixel of the clipped bounding box and calls fn(x, y) for the
// ones inside the shape.
template <typename Inside, typename Fn>
void rasterize(int size, double x0, double y0, double x1, double y1, Inside inside, Fn fn) {
    const int ix0 = std::max(0, int(std::floor(x0)));
    const int iy0 = std::max(0, int(std::floor(y0)));
    const int ix1 = std::min(size - 1, int(std::ceil(x1)));
    const int iy1 = std::min(size - 1, int(std::ceil(y1)));
    for (int y = iy0; y <= iy1; ++y)
        for (int x = ix0; x <= ix1; ++x)
            if (inside(double(x), double(y))) fn(x, y);
}

template <typename Fn>
void rasterize_disk(int size, Vec2 c, double r, Fn fn) {
    rasterize(
        size, c.x - r, c.y - r, c.x + r, c.y + r,
        [&](double x, double y) {
            const double dx = x - c.x, dy = y - c.y;
            return dx * dx + dy * dy <= r * r;
        },
        fn);
}

std::string scene_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%05d", index);
    return buf;
}

std::string tip_fields(const std::array<TipPoint, 5>& tips) {
    std::string out;
    for (const auto& t : tips) {
        out += ' ';
        if (t.present) {
            out += io::format_float(double(t.x));
            out += ' ';
            out += io::format_float(double(t.y));
        } else {
            out += "-1 -1";
        }
    }
    return out;
}

TrainSample sample_from(const RgbdFrame& frame, const Image8& comp, const Image8& tip,
                        const std::array<TipPoint, 5>& tips, const ThresholdParams& params,
                        int out_h, int out_w, const std::string& what) {
    int x0 = frame.width, y0 = frame.height, x1 = -1, y1 = -1;
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x)
            if (frame.at(y, x) != 0) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) throw DataError(what + ": frame has no valid depth");
    BBox box{std::max(0, x0 - 2), std::max(0, y0 - 2), std::min(frame.width - 1, x1 + 2),
             std::min(frame.height - 1, y1 + 2)};
    return make_training_sample(frame, comp, tip, tips, box, params, out_h, out_w);
}

}  // namespace

HandPose canonical_pose() {
    HandPose p;
    p.cx = 80;
    p.cy = 80;
    p.rx = 17;
    p.ry = 21;
    p.orient_deg = 0;
    p.base_depth = 750;
    p.noise_sigma = 0;
    const float angle[5] = {-142, -116, -90, -66, -44};
    const float length[5] = {20, 26, 30, 27, 22};
    for (size_t i = 0; i < 5; ++i) {
        p.fingers[i].angle_deg = angle[i];
        p.fingers[i].length = length[i];
        p.fingers[i].width = 3;
        p.fingers[i].depth_offset = 0;
    }
    return p;
}

HandPose sample_pose(Rng& rng, float occlude_prob) {
    HandPose p;
    p.cx = float(80 + rng.uniform(-6, 6));
    p.cy = float(80 + rng.uniform(-6, 6));
    p.rx = float(rng.uniform(14, 19));
    p.ry = float(rng.uniform(18, 24));
    p.orient_deg = float(rng.uniform(-25, 25));
    const double fan[5] = {-52, -26, 0, 24, 46};
    const double len[5] = {18, 26, 29, 26, 21};
    for (size_t i = 0; i < 5; ++i) {
        p.fingers[i].angle_deg = float(double(p.orient_deg) - 90 + fan[i] + rng.uniform(-6, 6));
        p.fingers[i].length = float(len[i] + rng.uniform(-3, 3));
        p.fingers[i].width = float(rng.uniform(3.0, 4.5));
        p.fingers[i].depth_offset = float(rng.uniform(-12, 12));
    }
    p.base_depth = uint16_t(rng.uniform_int(600, 900));
    p.noise_sigma = float(rng.uniform(0.5, 2.5));

    p.occluder.enabled = rng.bernoulli(double(occlude_prob));
    p.occluder.finger = int(rng.uniform_int(0, 4));
    p.occluder.radius_factor = float(rng.uniform(2.0, 3.0));
    const double w = double(p.fingers[size_t(p.occluder.finger)].width);
    p.occluder.dx = float(rng.uniform(-w / 2, w / 2));
    p.occluder.dy = float(rng.uniform(-w / 2, w / 2));
    p.occluder.depth_delta = float(rng.uniform(80, 150));
    return p;
}

Scene render(const HandPose& pose, int size, uint64_t seed) {
    if (size < 16) throw DataError("render: canvas too small");
    Scene s;
    s.frame = RgbdFrame(size, size);
    s.labels.components = Image8(size, size);
    s.labels.fingertips = Image8(size, size);
    Image8& comp = s.labels.components;
    Image8& tipm = s.labels.fingertips;

    const double orient = double(pose.orient_deg) * kPi / 180.0;
    const double reach = std::max(double(pose.rx), double(pose.ry));
    const Vec2 c{double(pose.cx), double(pose.cy)};
    rasterize(
        size, c.x - reach, c.y - reach, c.x + reach, c.y + reach,
        [&](double x, double y) {
            const double dx = x - c.x, dy = y - c.y;
            const double ex = std::cos(orient) * dx + std::sin(orient) * dy;
            const double ey = -std::sin(orient) * dx + std::cos(orient) * dy;
            return (ex / pose.rx) * (ex / pose.rx) + (ey / pose.ry) * (ey / pose.ry) <= 1.0;
        },
        [&](int x, int y) {
            comp.at(y, x) = 1;
            s.frame.at(y, x) = pose.base_depth;
        });

    std::array<Vec2, 5> tips;
    for (int i = 0; i < 5; ++i) {
        const FingerGeom& f = pose.fingers[size_t(i)];
        const Vec2 d = finger_dir(f);
        const double r0 = ellipse_reach(pose, d);
        const Vec2 base{c.x + r0 * d.x, c.y + r0 * d.y};
        tips[size_t(i)] = tip_center(pose, i);
        const Vec2& q = tips[size_t(i)];
        const uint16_t depth = clamp_depth(double(pose.base_depth) + double(f.depth_offset));
        const uint8_t cls = uint8_t(2 + i);
        const double half = double(f.width) / 2;

        const double pad = std::max(half, double(f.width));
        rasterize(
            size, std::min(base.x, q.x) - pad, std::min(base.y, q.y) - pad,
            std::max(base.x, q.x) + pad, std::max(base.y, q.y) + pad,
            [&](double x, double y) {
                const Vec2 pt{x, y};
                if (dist_to_segment(pt, base, q) <= half) return true;
                const double dx = x - q.x, dy = y - q.y;
                return dx * dx + dy * dy <= double(f.width) * double(f.width);
            },
            [&](int x, int y) {
                comp.at(y, x) = cls;
                s.frame.at(y, x) = depth;
            });
    }

    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (comp.at(y, x) != 0) tipm.at(y, x) = 1;
    for (int i = 0; i < 5; ++i)
        rasterize_disk(size, tips[size_t(i)], double(pose.fingers[size_t(i)].width),
                       [&](int x, int y) { tipm.at(y, x) = uint8_t(2 + i); });

    if (pose.occluder.enabled) {
        const Occluder& o = pose.occluder;
        if (o.finger < 0 || o.finger > 4) throw DataError("render: occluder finger out of range");
        const Vec2 t = tips[size_t(o.finger)];
        const Vec2 oc{t.x + double(o.dx), t.y + double(o.dy)};
        const double r = double(o.radius_factor) * double(pose.fingers[size_t(o.finger)].width);
        const uint16_t depth = clamp_depth(double(pose.base_depth) - double(o.depth_delta));
        rasterize_disk(size, oc, r, [&](int x, int y) {
            s.frame.at(y, x) = depth;
            comp.at(y, x) = 0;
            tipm.at(y, x) = 0;
        });
    }

    std::array<int, 7> tip_counts{};
    for (const uint8_t v : tipm.v) ++tip_counts[v];
    for (int i = 0; i < 5; ++i) {
        const Vec2& q = tips[size_t(i)];
        const int px = int(std::lround(q.x)), py = int(std::lround(q.y));
        const bool inside = px >= 0 && py >= 0 && px < size && py < size;
        if (inside && tip_counts[size_t(2 + i)] > 0 && tipm.at(py, px) == uint8_t(2 + i))
            s.labels.tip_points[size_t(i)] = {float(q.x), float(q.y), true};
    }

    if (pose.noise_sigma > 0) {
        Rng rng(seed);
        for (uint16_t& d : s.frame.depth)
            if (d != 0) d = clamp_depth(double(d) + rng.normal() * double(pose.noise_sigma));
    }
    return s;
}

DatasetSummary make_dataset(const std::filesystem::path& dir, int count, uint64_t seed,
                            double split_ratio, int size, float occlude_prob) {
    if (count < 1) throw DataError("make_dataset: count must be positive");
    if (split_ratio < 0 || split_ratio > 1) throw DataError("make_dataset: split_ratio outside [0,1]");
    if (occlude_prob < 0 || occlude_prob > 1) throw DataError("make_dataset: occlude_prob outside [0,1]");
    std::filesystem::create_directories(dir);

    std::vector<std::pair<uint64_t, int>> order(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) order[size_t(i)] = {Rng::key(seed, 22, uint64_t(i)), i};
    std::sort(order.begin(), order.end());
    const int n_train = int(std::clamp<long>(std::lround(split_ratio * count), 0, count));
    std::vector<char> is_train(size_t(count), 0);
    for (int k = 0; k < n_train; ++k) is_train[size_t(order[size_t(k)].second)] = 1;

    DatasetSummary out;
    out.dir = dir;
    std::string train_manifest, test_manifest;
    for (int i = 0; i < count; ++i) {
        Rng pose_rng(Rng::key(seed, 21, uint64_t(i)));
        const HandPose pose = sample_pose(pose_rng, occlude_prob);
        const Scene scene = render(pose, size, Rng::key(seed, 23, uint64_t(i)));

        const std::string id = scene_name(i);
        const std::string depth_name = "depth_" + id.substr(6) + ".pgm";
        const std::string comp_name = "comp_" + id.substr(6) + ".pgm";
        const std::string tip_name = "tip_" + id.substr(6) + ".pgm";
        Image16 depth(scene.frame.width, scene.frame.height);
        depth.v = scene.frame.depth;
        write_pgm(dir / depth_name, depth);
        write_pgm(dir / comp_name, scene.labels.components);
        write_pgm(dir / tip_name, scene.labels.fingertips);

        const std::string row = id + ' ' + depth_name + ' ' + comp_name + ' ' + tip_name +
                                tip_fields(scene.labels.tip_points) + '\n';
        if (is_train[size_t(i)]) {
            train_manifest += row;
            out.train_ids.push_back(id);
        } else {
            test_manifest += row;
            out.test_ids.push_back(id);
        }
    }
    out.train_manifest = dir / "manifest_train.txt";
    out.test_manifest = dir / "manifest_test.txt";
    io::write_file_atomic(out.train_manifest, train_manifest);
    io::write_file_atomic(out.test_manifest, test_manifest);
    return out;
}

std::vector<ManifestRow> load_manifest(const std::filesystem::path& manifest) {
    const std::string text = io::read_text_file(manifest);
    std::vector<ManifestRow> rows;
    size_t start = 0;
    int line_no = 0;
    while (start <= text.size()) {
        const size_t end = text.find('\n', start);
        const std::string_view line(text.data() + start,
                                    (end == std::string::npos ? text.size() : end) - start);
        start = end == std::string::npos ? text.size() + 1 : end + 1;
        ++line_no;
        const auto fields = io::split_ws(line);
        if (fields.empty()) continue;
        const std::string where = manifest.string() + ":" + std::to_string(line_no);
        if (fields.size() != 14)
            throw DataError(where + ": expected 14 fields, got " + std::to_string(fields.size()));
        ManifestRow row;
        row.id = fields[0];
        row.depth_path = fields[1];
        row.comp_path = fields[2];
        row.tip_path = fields[3];
        for (size_t k = 0; k < 5; ++k) {
            const double x = io::parse_double(fields[4 + 2 * k], where.c_str());
            const double y = io::parse_double(fields[5 + 2 * k], where.c_str());
            if (x == -1 && y == -1) continue;
            row.tips[k] = {float(x), float(y), true};
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<TrainSample> load_samples(const std::filesystem::path& manifest,
                                      const ThresholdParams& params, int out_h, int out_w) {
    const auto rows = load_manifest(manifest);
    const std::filesystem::path base = manifest.parent_path();
    std::vector<TrainSample> samples;
    samples.reserve(rows.size());
    for (const auto& row : rows) {
        const Image16 depth = read_pgm16(base / row.depth_path);
        const Image8 comp = read_pgm8(base / row.comp_path);
        const Image8 tip = read_pgm8(base / row.tip_path);
        if (comp.width != depth.width || comp.height != depth.height ||
            tip.width != depth.width || tip.height != depth.height)
            throw DataError(row.id + ": label map size does not match the depth frame");
        RgbdFrame frame(depth.width, depth.height);
        frame.depth = depth.v;
        samples.push_back(sample_from(frame, comp, tip, row.tips, params, out_h, out_w, row.id));
    }
    return samples;
}

TrainSample scene_to_sample(const Scene& scene, const ThresholdParams& params, int out_h,
                            int out_w) {
    Image8 comp = scene.labels.components;
    Image8 tip = scene.labels.fingertips;
    return sample_from(scene.frame, comp, tip, scene.labels.tip_points, params, out_h, out_w,
                       "scene");
}

}  // namespace mtseg
