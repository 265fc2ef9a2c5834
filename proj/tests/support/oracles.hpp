#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

#include "mtseg/tensor.hpp"

// Deliberately slow reference implementations used only by tests. These are
// written from the definitions, independent of the library code paths, so a
// bug in the fast implementations cannot hide in a shared helper.

namespace oracle {

// Plain triple loop, inner-product order, no blocking.
inline void gemm_nn(int m, int n, int k, const float* A, const float* B, float* C) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int l = 0; l < k; ++l) acc += double(A[i * k + l]) * double(B[l * n + j]);
            C[i * n + j] = float(acc);
        }
}

inline void gemm_tn(int m, int n, int k, const float* A, const float* B, float* C) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int l = 0; l < k; ++l) acc += double(A[l * m + i]) * double(B[l * n + j]);
            C[i * n + j] = float(acc);
        }
}

inline void gemm_nt(int m, int n, int k, const float* A, const float* B, float* C) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int l = 0; l < k; ++l) acc += double(A[i * k + l]) * double(B[j * k + l]);
            C[i * n + j] = float(acc);
        }
}

// Direct cross-correlation: seven nested loops straight from the definition.
inline mtseg::Tensor4 conv2d(const mtseg::Tensor4& x, const mtseg::Tensor4& w,
                             const std::vector<float>& bias, int stride, int pad) {
    const int k = w.h;
    const int oh = (x.h + 2 * pad - k) / stride + 1;
    const int ow = (x.w + 2 * pad - k) / stride + 1;
    mtseg::Tensor4 out(x.n, w.n, oh, ow);
    for (int i = 0; i < x.n; ++i)
        for (int oc = 0; oc < w.n; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias.empty() ? 0.0 : double(bias[oc]);
                    for (int ic = 0; ic < x.c; ++ic)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                int iy = oy * stride - pad + ky;
                                int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                                acc += double(x.at(i, ic, iy, ix)) * double(w.at(oc, ic, ky, kx));
                            }
                    out.at(i, oc, oy, ox) = float(acc);
                }
    return out;
}

// Window scan with explicit first-max tie handling.
inline void maxpool2x2(const mtseg::Tensor4& x, mtseg::Tensor4& out,
                       mtseg::PoolIndices& idx) {
    out = mtseg::Tensor4(x.n, x.c, x.h / 2, x.w / 2);
    idx = mtseg::PoolIndices(x.n, x.c, x.h / 2, x.w / 2);
    for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < x.c; ++j)
            for (int oy = 0; oy < out.h; ++oy)
                for (int ox = 0; ox < out.w; ++ox) {
                    float best = -1e30f;
                    int best_off = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            float v = x.at(i, j, 2 * oy + dy, 2 * ox + dx);
                            if (v > best) {
                                best = v;
                                best_off = dy * 2 + dx;
                            }
                        }
                    out.at(i, j, oy, ox) = best;
                    idx.at(i, j, oy, ox) = uint8_t(best_off);
                }
}

// Mode of the nonzero values with ties going to the smaller value, found by
// exhaustive counting over an ordered map.
inline uint16_t depth_mode(const std::vector<uint16_t>& depths) {
    std::map<uint16_t, int> counts;
    for (uint16_t d : depths)
        if (d != 0) ++counts[d];
    uint16_t best = 0;
    int best_count = -1;
    for (const auto& [value, count] : counts)
        if (count > best_count) {  // map iterates ascending, so ties keep the smaller
            best = value;
            best_count = count;
        }
    return best;
}

// Brute-force threshold: per-pixel re-evaluation of the band and box rules.
inline std::vector<uint16_t> threshold(const std::vector<uint16_t>& depth, int w, int h,
                                       int x0, int y0, int x1, int y1, uint16_t m,
                                       int band) {
    std::vector<uint16_t> out(depth.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint16_t d = depth[size_t(y) * w + x];
            if (d == 0) continue;
            if (x < x0 || x > x1 || y < y0 || y > y1) continue;
            int diff = int(d) - int(m);
            if (diff < 0) diff = -diff;
            if (diff < band) out[size_t(y) * w + x] = d;
        }
    return out;
}

// Count-by-loop precision: raw hits under the threshold, absents never hit.
inline int precision_hits(const std::vector<double>& errors, double t) {
    int hits = 0;
    for (double e : errors)
        if (e < t) ++hits;
    return hits;
}

}  // namespace oracle
