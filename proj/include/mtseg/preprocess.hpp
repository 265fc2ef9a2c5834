#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mtseg/pgm.hpp"
#include "mtseg/rng.hpp"
#include "mtseg/sample.hpp"
#include "mtseg/tensor.hpp"

namespace mtseg {

// Depth frame in millimeters; 0 marks an invalid reading. The color plane is
// optional (3 bytes per pixel when present) and never required here.
struct RgbdFrame {
    int width = 0, height = 0;
    std::vector<uint16_t> depth;
    std::vector<uint8_t> color;

    RgbdFrame() = default;
    RgbdFrame(int w, int h) : width(w), height(h), depth(size_t(w) * size_t(h), 0) {}
    uint16_t& at(int y, int x) { return depth[size_t(y) * width + x]; }
    uint16_t at(int y, int x) const { return depth[size_t(y) * width + x]; }
};

// Inclusive pixel corners: (x0,y0) top-left, (x1,y1) bottom-right.
struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    int64_t area() const { return int64_t(width()) * height(); }

    // Throws DataError unless 0 <= x0 <= x1 < frame_w and same for y.
    void validate(int frame_w, int frame_h) const;
};

struct ThresholdParams {
    int t = 300;             // max |depth - mode| kept, in depth units
    int mode_bin_width = 1;  // histogram bin width for the mode
};

// Most frequent binned nonzero depth inside the box; ties go to the nearer
// (smaller) depth, and the returned value is the smallest depth observed in
// the winning bin. Throws DataError when the box holds no valid depth.
uint16_t depth_mode(const RgbdFrame& frame, const BBox& box, const ThresholdParams& params);

// Depth pixels surviving the band test, cropped to the box extent.
struct DepthCrop {
    int width = 0, height = 0;
    int off_x = 0, off_y = 0;  // crop origin in frame coordinates
    std::vector<uint16_t> depth;

    DepthCrop() = default;
    DepthCrop(int w, int h) : width(w), height(h), depth(size_t(w) * size_t(h), 0) {}
    uint16_t& at(int y, int x) { return depth[size_t(y) * width + x]; }
    uint16_t at(int y, int x) const { return depth[size_t(y) * width + x]; }
};

// Keeps pixel (x,y) iff it lies in the box and |D(x,y) - mode| < t.
DepthCrop threshold_hand(const RgbdFrame& frame, const BBox& box, const ThresholdParams& params);

// Aspect-preserving placement of a src_w x src_h rectangle onto an
// out_w x out_h canvas: scaled to fit, centered, surrounded by padding.
struct FitGeometry {
    int src_w = 0, src_h = 0;
    int out_w = 0, out_h = 0;
    int dst_w = 0, dst_h = 0;  // scaled rectangle size
    int off_x = 0, off_y = 0;  // top-left of the rectangle on the canvas

    // Source pixel sampled for canvas pixel (x,y); (-1,-1) in the padding.
    std::pair<int, int> src_pixel(int x, int y) const;
    // Canvas-coordinate image of a source point (tip mapping).
    std::pair<float, float> map_point(float x, float y) const;
};

FitGeometry fit_to_canvas(int src_w, int src_h, int out_w, int out_h);

// Nearest-neighbor resample of the crop into the canvas, then nonzero pixels
// normalized to [0,1] via (d - dmin) / (dmax - dmin); constant-depth crops
// map to 0.5 and padding/invalid stays exactly 0.
Tensor4 to_network_input(const DepthCrop& crop, int out_h = 96, int out_w = 96);

// Labels resampled with the identical geometry (nearest; padding = class 0).
ClassMap resize_labels(const Image8& labels, const FitGeometry& geo);

// Full-frame ground truth to network-sized training sample: threshold inside
// the box, then depth, both label maps and tip points all go through one
// shared FitGeometry. Tips landing outside the canvas are marked absent.
TrainSample make_training_sample(const RgbdFrame& frame, const Image8& comp,
                                 const Image8& tip, const std::array<TipPoint, 5>& tips,
                                 const BBox& box, const ThresholdParams& params,
                                 int out_h = 96, int out_w = 96);

// Seeded augmentation: translation within ±10% of each side, rotation within
// ±25 degrees, scale in [0.85, 1.15], horizontal mirror with p = 0.5.
struct AugmentParams {
    float tx = 0.0f, ty = 0.0f;  // pixels
    float rot_deg = 0.0f;
    float scale = 1.0f;
    bool mirror = false;
};

AugmentParams draw_augment(Rng& rng, int width, int height);

// Applies one geometric transform to the input, both label maps and the tip
// points (inverse-mapped nearest resampling; out-of-frame tips -> absent).
// An identity parameter set returns the sample bit-exactly; mirroring is a
// pure column flip, so mirror-only twice is the identity.
TrainSample apply_augment(const TrainSample& sample, const AugmentParams& params);

// draw_augment with Rng(key), then apply_augment.
TrainSample augment(const TrainSample& sample, uint64_t key);

}  // namespace mtseg
