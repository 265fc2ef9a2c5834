#pragma once

#include <cstdint>
#include <vector>

namespace mtseg {

// One 8-connected component of a binary mask. Bounding box corners are
// inclusive pixel coordinates.
struct Blob {
    int area = 0;
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    int64_t sum_x = 0, sum_y = 0;

    double centroid_x() const { return double(sum_x) / area; }
    double centroid_y() const { return double(sum_y) / area; }
};

// Components of the nonzero pixels of a row-major width*height mask,
// in discovery (scanline) order. When labels is given it receives, per
// pixel, the index of the owning blob or -1.
std::vector<Blob> find_blobs(const uint8_t* mask, int width, int height,
                             std::vector<int32_t>* labels = nullptr);

}  // namespace mtseg
