#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mtseg {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Deterministic RNG. All randomness in the project flows through this so
// that identical seeds give identical results run to run. Streams for
// independent uses are derived with key(), never by sharing one generator.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // Combine a seed with stream indices into an independent stream seed.
    static uint64_t key(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
        uint64_t k = splitmix64(seed ^ 0x5851f42d4c957f2dull);
        k = splitmix64(k ^ a);
        k = splitmix64(k ^ b);
        return splitmix64(k ^ c);
    }

    uint64_t next_u64() { return gen_(); }

    // Uniform in [lo, hi). 53-bit mantissa path, implementation-independent.
    double uniform(double lo = 0.0, double hi = 1.0) {
        double u = double(gen_() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }

    float uniformf(float lo = 0.0f, float hi = 1.0f) {
        return float(uniform(double(lo), double(hi)));
    }

    // Integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = uint64_t(hi - lo) + 1;
        return lo + int64_t(gen_() % span);
    }

    // Standard normal via Box-Muller (no cached spare, keeps the stream
    // position a pure function of draw count).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_int(0, int64_t(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace mtseg
