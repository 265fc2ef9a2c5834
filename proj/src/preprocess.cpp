#include "mtseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "mtseg/io_util.hpp"

namespace mtseg {

void BBox::validate(int frame_w, int frame_h) const {
    if (x0 < 0 || y0 < 0 || x0 > x1 || y0 > y1 || x1 >= frame_w || y1 >= frame_h)
        throw DataError("invalid bbox (" + std::to_string(x0) + "," + std::to_string(y0) +
                        ")-(" + std::to_string(x1) + "," + std::to_string(y1) +
                        ") for a " + std::to_string(frame_w) + "x" +
                        std::to_string(frame_h) + " frame");
}

uint16_t depth_mode(const RgbdFrame& frame, const BBox& box, const ThresholdParams& params) {
    box.validate(frame.width, frame.height);
    if (params.t <= 0) throw DataError("threshold t must be positive");
    if (params.mode_bin_width < 1) throw DataError("mode_bin_width must be >= 1");

    // bin -> (count, smallest depth seen in the bin); ascending keys make the
    // near-tie rule a strict-greater scan.
    std::map<uint32_t, std::pair<int64_t, uint16_t>> bins;
    for (int y = box.y0; y <= box.y1; ++y)
        for (int x = box.x0; x <= box.x1; ++x) {
            const uint16_t d = frame.at(y, x);
            if (d == 0) continue;
            auto [it, fresh] = bins.try_emplace(d / uint32_t(params.mode_bin_width), 0, d);
            ++it->second.first;
            it->second.second = std::min(it->second.second, d);
        }
    if (bins.empty()) throw DataError("bbox contains no valid depth pixels");

    int64_t best_count = 0;
    uint16_t mode = 0;
    for (const auto& [bin, entry] : bins)
        if (entry.first > best_count) {
            best_count = entry.first;
            mode = entry.second;
        }
    return mode;
}

DepthCrop threshold_hand(const RgbdFrame& frame, const BBox& box,
                         const ThresholdParams& params) {
    const uint16_t m = depth_mode(frame, box, params);
    DepthCrop crop(box.width(), box.height());
    crop.off_x = box.x0;
    crop.off_y = box.y0;
    for (int y = 0; y < crop.height; ++y)
        for (int x = 0; x < crop.width; ++x) {
            const uint16_t d = frame.at(box.y0 + y, box.x0 + x);
            if (d != 0 && std::abs(int(d) - int(m)) < params.t) crop.at(y, x) = d;
        }
    return crop;
}

std::pair<int, int> FitGeometry::src_pixel(int x, int y) const {
    const int rx = x - off_x, ry = y - off_y;
    if (rx < 0 || ry < 0 || rx >= dst_w || ry >= dst_h) return {-1, -1};
    // floor((r + 0.5) * src / dst): exact identity when src == dst.
    const int sx = std::min(src_w - 1, int((int64_t(2 * rx + 1) * src_w) / (2 * dst_w)));
    const int sy = std::min(src_h - 1, int((int64_t(2 * ry + 1) * src_h) / (2 * dst_h)));
    return {sx, sy};
}

std::pair<float, float> FitGeometry::map_point(float x, float y) const {
    const float sx = float(dst_w) / float(src_w);
    const float sy = float(dst_h) / float(src_h);
    return {(x + 0.5f) * sx - 0.5f + float(off_x), (y + 0.5f) * sy - 0.5f + float(off_y)};
}

FitGeometry fit_to_canvas(int src_w, int src_h, int out_w, int out_h) {
    if (src_w < 1 || src_h < 1 || out_w < 1 || out_h < 1)
        throw DataError("fit_to_canvas: degenerate geometry");
    FitGeometry g;
    g.src_w = src_w;
    g.src_h = src_h;
    g.out_w = out_w;
    g.out_h = out_h;
    const double s = std::min(double(out_w) / src_w, double(out_h) / src_h);
    g.dst_w = std::clamp(int(std::lround(src_w * s)), 1, out_w);
    g.dst_h = std::clamp(int(std::lround(src_h * s)), 1, out_h);
    g.off_x = (out_w - g.dst_w) / 2;
    g.off_y = (out_h - g.dst_h) / 2;
    return g;
}

Tensor4 to_network_input(const DepthCrop& crop, int out_h, int out_w) {
    if (crop.width < 1 || crop.height < 1) throw DataError("empty depth crop");
    const FitGeometry geo = fit_to_canvas(crop.width, crop.height, out_w, out_h);

    Tensor4 out(1, 1, out_h, out_w);
    uint16_t dmin = std::numeric_limits<uint16_t>::max(), dmax = 0;
    std::vector<uint16_t> canvas(size_t(out_h) * size_t(out_w), 0);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const auto [sx, sy] = geo.src_pixel(x, y);
            if (sx < 0) continue;
            const uint16_t d = crop.at(sy, sx);
            canvas[size_t(y) * out_w + x] = d;
            if (d != 0) {
                dmin = std::min(dmin, d);
                dmax = std::max(dmax, d);
            }
        }
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const uint16_t d = canvas[size_t(y) * out_w + x];
            if (d == 0) continue;
            out.at(0, 0, y, x) =
                dmax == dmin ? 0.5f : float(d - dmin) / float(dmax - dmin);
        }
    return out;
}

ClassMap resize_labels(const Image8& labels, const FitGeometry& geo) {
    if (labels.width != geo.src_w || labels.height != geo.src_h)
        throw DataError("resize_labels: geometry does not match the label map");
    ClassMap out(1, geo.out_h, geo.out_w);
    for (int y = 0; y < geo.out_h; ++y)
        for (int x = 0; x < geo.out_w; ++x) {
            const auto [sx, sy] = geo.src_pixel(x, y);
            if (sx >= 0) out.at(0, y, x) = labels.at(sy, sx);
        }
    return out;
}

TrainSample make_training_sample(const RgbdFrame& frame, const Image8& comp,
                                 const Image8& tip, const std::array<TipPoint, 5>& tips,
                                 const BBox& box, const ThresholdParams& params,
                                 int out_h, int out_w) {
    if (comp.width != frame.width || comp.height != frame.height ||
        tip.width != frame.width || tip.height != frame.height)
        throw DataError("make_training_sample: label maps must match the frame size");

    const DepthCrop crop = threshold_hand(frame, box, params);
    const FitGeometry geo = fit_to_canvas(crop.width, crop.height, out_w, out_h);

    Image8 comp_crop(crop.width, crop.height), tip_crop(crop.width, crop.height);
    for (int y = 0; y < crop.height; ++y)
        for (int x = 0; x < crop.width; ++x) {
            comp_crop.at(y, x) = comp.at(box.y0 + y, box.x0 + x);
            tip_crop.at(y, x) = tip.at(box.y0 + y, box.x0 + x);
        }

    TrainSample s;
    s.input = to_network_input(crop, out_h, out_w);
    s.comp = resize_labels(comp_crop, geo);
    s.tip = resize_labels(tip_crop, geo);
    for (size_t i = 0; i < tips.size(); ++i) {
        if (!tips[i].present) continue;
        const auto [mx, my] = geo.map_point(tips[i].x - float(box.x0), tips[i].y - float(box.y0));
        if (mx < 0.0f || my < 0.0f || mx > float(out_w - 1) || my > float(out_h - 1)) continue;
        s.tips[i] = {mx, my, true};
    }
    return s;
}

AugmentParams draw_augment(Rng& rng, int width, int height) {
    AugmentParams p;
    p.tx = rng.uniformf(-0.1f, 0.1f) * float(width);
    p.ty = rng.uniformf(-0.1f, 0.1f) * float(height);
    p.rot_deg = rng.uniformf(-25.0f, 25.0f);
    p.scale = rng.uniformf(0.85f, 1.15f);
    p.mirror = rng.bernoulli(0.5);
    return p;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Warp {
    double cos_t, sin_t, scale, tx, ty, cx, cy;

    // Forward: dst = R(theta) * (src - c) * scale + c + t.
    std::pair<double, double> forward(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        return {(cos_t * dx - sin_t * dy) * scale + cx + tx,
                (sin_t * dx + cos_t * dy) * scale + cy + ty};
    }
    std::pair<double, double> inverse(double x, double y) const {
        const double dx = (x - cx - tx) / scale, dy = (y - cy - ty) / scale;
        return {cos_t * dx + sin_t * dy + cx, -sin_t * dx + cos_t * dy + cy};
    }
};

Warp make_warp(const AugmentParams& p, int width, int height) {
    const double theta = double(p.rot_deg) * kPi / 180.0;
    return {std::cos(theta), std::sin(theta), double(p.scale),
            double(p.tx),    double(p.ty),    (width - 1) * 0.5,
            (height - 1) * 0.5};
}

}  // namespace

TrainSample apply_augment(const TrainSample& sample, const AugmentParams& params) {
    const int h = sample.input.h, w = sample.input.w;
    TrainSample out = sample;

    const bool identity_warp = params.tx == 0.0f && params.ty == 0.0f &&
                               params.rot_deg == 0.0f && params.scale == 1.0f;
    if (!identity_warp) {
        const Warp warp = make_warp(params, w, h);
        out.input = Tensor4(1, 1, h, w);
        out.comp = ClassMap(1, h, w);
        out.tip = ClassMap(1, h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const auto [sx, sy] = warp.inverse(x, y);
                const int ix = int(std::floor(sx + 0.5)), iy = int(std::floor(sy + 0.5));
                if (ix < 0 || iy < 0 || ix >= w || iy >= h) continue;
                out.input.at(0, 0, y, x) = sample.input.at(0, 0, iy, ix);
                out.comp.at(0, y, x) = sample.comp.at(0, iy, ix);
                out.tip.at(0, y, x) = sample.tip.at(0, iy, ix);
            }
        for (auto& t : out.tips) {
            if (!t.present) continue;
            const auto [mx, my] = warp.forward(t.x, t.y);
            if (mx < 0.0 || my < 0.0 || mx > double(w - 1) || my > double(h - 1)) {
                t = TipPoint{};
            } else {
                t.x = float(mx);
                t.y = float(my);
            }
        }
    }

    if (params.mirror) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w / 2; ++x) {
                std::swap(out.input.at(0, 0, y, x), out.input.at(0, 0, y, w - 1 - x));
                std::swap(out.comp.at(0, y, x), out.comp.at(0, y, w - 1 - x));
                std::swap(out.tip.at(0, y, x), out.tip.at(0, y, w - 1 - x));
            }
        for (auto& t : out.tips)
            if (t.present) t.x = float(w - 1) - t.x;
    }
    return out;
}

TrainSample augment(const TrainSample& sample, uint64_t key) {
    Rng rng(key);
    const AugmentParams p = draw_augment(rng, sample.input.w, sample.input.h);
    return apply_augment(sample, p);
}

}  // namespace mtseg
