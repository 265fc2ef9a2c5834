#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mtseg/errors.hpp"
#include "mtseg/rng.hpp"

namespace mtseg {

// Dense rank-4 array in row-major (batch, channel, height, width) order.
// Float is the working precision of the network; the double instantiation
// is the shadow path used by finite-difference oracles.
template <typename T>
struct Tensor4T {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4T() = default;
    Tensor4T(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(size_t(n_) * c_ * h_ * w_, T(0)) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw DataError("tensor dims must be non-negative: " + shape_str());
    }

    static Tensor4T zeros(int n, int c, int h, int w) { return Tensor4T(n, c, h, w); }

    static Tensor4T full(int n, int c, int h, int w, T value) {
        Tensor4T t(n, c, h, w);
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }

    static Tensor4T random_uniform(int n, int c, int h, int w, Rng& rng, T lo = T(-1), T hi = T(1)) {
        Tensor4T t(n, c, h, w);
        for (auto& x : t.v) x = T(rng.uniform(double(lo), double(hi)));
        return t;
    }

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& at(int i, int j, int y, int x) {
        return v[((size_t(i) * c + j) * h + y) * w + x];
    }
    const T& at(int i, int j, int y, int x) const {
        return v[((size_t(i) * c + j) * h + y) * w + x];
    }

    // Start of the (sample, channel) plane.
    T* plane(int i, int j) { return v.data() + (size_t(i) * c + j) * h * w; }
    const T* plane(int i, int j) const { return v.data() + (size_t(i) * c + j) * h * w; }

    bool same_shape(const Tensor4T& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(double(x))) return false;
        return true;
    }

    template <typename U>
    Tensor4T<U> cast() const {
        Tensor4T<U> out(n, c, h, w);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = U(v[i]);
        return out;
    }
};

using Tensor4 = Tensor4T<float>;
using Tensor4d = Tensor4T<double>;

// Argmax offsets recorded by 2x2 max pooling: one value per pooled element,
// the flat offset (0..3, row-major) of the max inside its own window.
struct PoolIndices {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<uint8_t> v;

    PoolIndices() = default;
    PoolIndices(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(size_t(n_) * c_ * h_ * w_, 0) {}

    uint8_t& at(int i, int j, int y, int x) {
        return v[((size_t(i) * c + j) * h + y) * w + x];
    }
    uint8_t at(int i, int j, int y, int x) const {
        return v[((size_t(i) * c + j) * h + y) * w + x];
    }

    uint8_t* plane(int i, int j) { return v.data() + (size_t(i) * c + j) * h * w; }
    const uint8_t* plane(int i, int j) const {
        return v.data() + (size_t(i) * c + j) * h * w;
    }
};

// Per-pixel class labels for a batch (classes fit in a byte).
struct ClassMap {
    int n = 0, h = 0, w = 0;
    std::vector<uint8_t> v;

    ClassMap() = default;
    ClassMap(int n_, int h_, int w_) : n(n_), h(h_), w(w_), v(size_t(n_) * h_ * w_, 0) {}

    uint8_t& at(int i, int y, int x) { return v[(size_t(i) * h + y) * w + x]; }
    uint8_t at(int i, int y, int x) const { return v[(size_t(i) * h + y) * w + x]; }
    size_t size() const { return v.size(); }
};

template <typename T>
double max_abs_diff(const Tensor4T<T>& a, const Tensor4T<T>& b) {
    if (!a.same_shape(b))
        throw DataError("max_abs_diff shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double m = 0;
    for (size_t i = 0; i < a.v.size(); ++i)
        m = std::max(m, std::abs(double(a.v[i]) - double(b.v[i])));
    return m;
}

}  // namespace mtseg
