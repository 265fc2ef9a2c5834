#include "mtseg/blob.hpp"

#include <algorithm>

namespace mtseg {

std::vector<Blob> find_blobs(const uint8_t* mask, int width, int height,
                             std::vector<int32_t>* labels) {
    std::vector<Blob> out;
    std::vector<uint8_t> seen(size_t(width) * size_t(height), 0);
    std::vector<int> stack;
    if (labels) labels->assign(size_t(width) * size_t(height), -1);

    for (int sy = 0; sy < height; ++sy)
        for (int sx = 0; sx < width; ++sx) {
            const size_t si = size_t(sy) * width + sx;
            if (!mask[si] || seen[si]) continue;

            Blob b;
            b.min_x = b.max_x = sx;
            b.min_y = b.max_y = sy;
            seen[si] = 1;
            stack.push_back(int(si));
            while (!stack.empty()) {
                const int at = stack.back();
                stack.pop_back();
                const int x = at % width, y = at / width;
                if (labels) (*labels)[size_t(at)] = int32_t(out.size());
                ++b.area;
                b.sum_x += x;
                b.sum_y += y;
                b.min_x = std::min(b.min_x, x);
                b.max_x = std::max(b.max_x, x);
                b.min_y = std::min(b.min_y, y);
                b.max_y = std::max(b.max_y, y);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
                        const size_t ni = size_t(ny) * width + nx;
                        if (mask[ni] && !seen[ni]) {
                            seen[ni] = 1;
                            stack.push_back(int(ni));
                        }
                    }
            }
            out.push_back(b);
        }
    return out;
}

}  // namespace mtseg
