#include "kernels_internal.hpp"

// AVX2+FMA variants of the inner loops. GEMM uses a 4x16 register tile with
// cache blocking; relu and adam keep the scalar operation order so results
// are bit-identical to the reference table (GEMM reassociates and is
// tolerance-checked).

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace mtseg::kernels {

namespace {

// C[i,j] (+)= sum_l a_at(i,l) * B[l*n+j] restricted to columns [jb, je),
// walked in 4-row strips with a 4x16 register tile and scalar tail columns.
template <typename AGet>
inline void gemm_strips_avx2(int m, int n, int k, AGet a_at, const float* B, float* C, bool acc,
                             int jb, int je) {
    int i0 = 0;
    for (; i0 + 4 <= m; i0 += 4) {
        int j0 = jb;
        for (; j0 + 16 <= je; j0 += 16) {
            __m256 c00, c01, c10, c11, c20, c21, c30, c31;
            if (acc) {
                c00 = _mm256_loadu_ps(C + size_t(i0 + 0) * n + j0);
                c01 = _mm256_loadu_ps(C + size_t(i0 + 0) * n + j0 + 8);
                c10 = _mm256_loadu_ps(C + size_t(i0 + 1) * n + j0);
                c11 = _mm256_loadu_ps(C + size_t(i0 + 1) * n + j0 + 8);
                c20 = _mm256_loadu_ps(C + size_t(i0 + 2) * n + j0);
                c21 = _mm256_loadu_ps(C + size_t(i0 + 2) * n + j0 + 8);
                c30 = _mm256_loadu_ps(C + size_t(i0 + 3) * n + j0);
                c31 = _mm256_loadu_ps(C + size_t(i0 + 3) * n + j0 + 8);
            } else {
                c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
            }
            for (int l = 0; l < k; ++l) {
                const float* brow = B + size_t(l) * n + j0;
                __m256 b0 = _mm256_loadu_ps(brow);
                __m256 b1 = _mm256_loadu_ps(brow + 8);
                __m256 a0 = _mm256_set1_ps(a_at(i0 + 0, l));
                __m256 a1 = _mm256_set1_ps(a_at(i0 + 1, l));
                __m256 a2 = _mm256_set1_ps(a_at(i0 + 2, l));
                __m256 a3 = _mm256_set1_ps(a_at(i0 + 3, l));
                c00 = _mm256_fmadd_ps(a0, b0, c00);
                c01 = _mm256_fmadd_ps(a0, b1, c01);
                c10 = _mm256_fmadd_ps(a1, b0, c10);
                c11 = _mm256_fmadd_ps(a1, b1, c11);
                c20 = _mm256_fmadd_ps(a2, b0, c20);
                c21 = _mm256_fmadd_ps(a2, b1, c21);
                c30 = _mm256_fmadd_ps(a3, b0, c30);
                c31 = _mm256_fmadd_ps(a3, b1, c31);
            }
            _mm256_storeu_ps(C + size_t(i0 + 0) * n + j0, c00);
            _mm256_storeu_ps(C + size_t(i0 + 0) * n + j0 + 8, c01);
            _mm256_storeu_ps(C + size_t(i0 + 1) * n + j0, c10);
            _mm256_storeu_ps(C + size_t(i0 + 1) * n + j0 + 8, c11);
            _mm256_storeu_ps(C + size_t(i0 + 2) * n + j0, c20);
            _mm256_storeu_ps(C + size_t(i0 + 2) * n + j0 + 8, c21);
            _mm256_storeu_ps(C + size_t(i0 + 3) * n + j0, c30);
            _mm256_storeu_ps(C + size_t(i0 + 3) * n + j0 + 8, c31);
        }
        for (; j0 + 8 <= je; j0 += 8) {
            __m256 c0, c1, c2, c3;
            if (acc) {
                c0 = _mm256_loadu_ps(C + size_t(i0 + 0) * n + j0);
                c1 = _mm256_loadu_ps(C + size_t(i0 + 1) * n + j0);
                c2 = _mm256_loadu_ps(C + size_t(i0 + 2) * n + j0);
                c3 = _mm256_loadu_ps(C + size_t(i0 + 3) * n + j0);
            } else {
                c0 = c1 = c2 = c3 = _mm256_setzero_ps();
            }
            for (int l = 0; l < k; ++l) {
                __m256 b0 = _mm256_loadu_ps(B + size_t(l) * n + j0);
                c0 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i0 + 0, l)), b0, c0);
                c1 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i0 + 1, l)), b0, c1);
                c2 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i0 + 2, l)), b0, c2);
                c3 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i0 + 3, l)), b0, c3);
            }
            _mm256_storeu_ps(C + size_t(i0 + 0) * n + j0, c0);
            _mm256_storeu_ps(C + size_t(i0 + 1) * n + j0, c1);
            _mm256_storeu_ps(C + size_t(i0 + 2) * n + j0, c2);
            _mm256_storeu_ps(C + size_t(i0 + 3) * n + j0, c3);
        }
        for (int r = 0; r < 4; ++r) {
            for (int j = j0; j < je; ++j) {
                float sum = acc ? C[size_t(i0 + r) * n + j] : 0.0f;
                for (int l = 0; l < k; ++l) sum += a_at(i0 + r, l) * B[size_t(l) * n + j];
                C[size_t(i0 + r) * n + j] = sum;
            }
        }
    }
    for (; i0 < m; ++i0) {
        int j0 = jb;
        for (; j0 + 8 <= je; j0 += 8) {
            __m256 c0 = acc ? _mm256_loadu_ps(C + size_t(i0) * n + j0) : _mm256_setzero_ps();
            for (int l = 0; l < k; ++l)
                c0 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i0, l)),
                                     _mm256_loadu_ps(B + size_t(l) * n + j0), c0);
            _mm256_storeu_ps(C + size_t(i0) * n + j0, c0);
        }
        for (int j = j0; j < je; ++j) {
            float sum = acc ? C[size_t(i0) * n + j] : 0.0f;
            for (int l = 0; l < k; ++l) sum += a_at(i0, l) * B[size_t(l) * n + j];
            C[size_t(i0) * n + j] = sum;
        }
    }
}

// Column-blocked driver: the active slice of B stays cache-resident while
// every row strip passes over it. The block width is a multiple of 16, so
// each element sees the same tile path and fma sequence as an unblocked
// walk: results are bit-identical, only the traversal order of independent
// outputs changes.
template <typename AGet>
inline void gemm_rows_avx2(int m, int n, int k, AGet a_at, const float* B, float* C, bool acc) {
    constexpr int kColBlock = 1024;
    for (int jb = 0; jb < n; jb += kColBlock) {
        const int je = n - jb < kColBlock ? n : jb + kColBlock;
        gemm_strips_avx2(m, n, k, a_at, B, C, acc, jb, je);
    }
}

void a_gemm_nn(int m, int n, int k, const float* A, const float* B, float* C, bool acc) {
    gemm_rows_avx2(m, n, k, [&](int i, int l) { return A[size_t(i) * k + l]; }, B, C, acc);
}

void a_gemm_tn(int m, int n, int k, const float* A, const float* B, float* C, bool acc) {
    gemm_rows_avx2(m, n, k, [&](int i, int l) { return A[size_t(l) * m + i]; }, B, C, acc);
}

inline float hsum8(__m256 x) {
    __m128 lo = _mm256_castps256_ps128(x);
    __m128 hi = _mm256_extractf128_ps(x, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
    return _mm_cvtss_f32(s);
}

// Blocked over rows of B so the active slice is re-read from cache rather
// than memory on every pass down A. Each C[i,j] keeps the same two-accumulator
// dot-product scan, so results are bit-identical to an unblocked walk.
void a_gemm_nt(int m, int n, int k, const float* A, const float* B, float* C, bool acc) {
    constexpr int kRowBlock = 24;
    for (int jb = 0; jb < n; jb += kRowBlock) {
        const int je = n - jb < kRowBlock ? n : jb + kRowBlock;
        for (int i = 0; i < m; ++i) {
            const float* arow = A + size_t(i) * k;
            for (int j = jb; j < je; ++j) {
                const float* brow = B + size_t(j) * k;
                __m256 acc0 = _mm256_setzero_ps();
                __m256 acc1 = _mm256_setzero_ps();
                int l = 0;
                for (; l + 16 <= k; l += 16) {
                    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + l),
                                           _mm256_loadu_ps(brow + l), acc0);
                    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + l + 8),
                                           _mm256_loadu_ps(brow + l + 8), acc1);
                }
                for (; l + 8 <= k; l += 8)
                    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + l),
                                           _mm256_loadu_ps(brow + l), acc0);
                float sum = hsum8(_mm256_add_ps(acc0, acc1));
                for (; l < k; ++l) sum += arow[l] * brow[l];
                C[size_t(i) * n + j] = acc ? C[size_t(i) * n + j] + sum : sum;
            }
        }
    }
}

void a_relu_fwd(const float* x, float* y, size_t len) {
    __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= len; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < len; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void a_relu_bwd(const float* act, const float* gout, float* gin, size_t len) {
    __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= len; i += 8) {
        __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(act + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(gin + i, _mm256_and_ps(mask, _mm256_loadu_ps(gout + i)));
    }
    for (; i < len; ++i) gin[i] = act[i] > 0.0f ? gout[i] : 0.0f;
}

// No FMA here: keeps rounding identical to the scalar reference so the
// equivalence test can require bit-equal results.
void a_adam_step(float* p, const float* g, float* m, float* v, size_t len,
                 const AdamScalars& s) {
    __m256 b1 = _mm256_set1_ps(s.beta1);
    __m256 omb1 = _mm256_set1_ps(1.0f - s.beta1);
    __m256 b2 = _mm256_set1_ps(s.beta2);
    __m256 omb2 = _mm256_set1_ps(1.0f - s.beta2);
    __m256 lr = _mm256_set1_ps(s.lr);
    __m256 bias1 = _mm256_set1_ps(s.bias1);
    __m256 bias2 = _mm256_set1_ps(s.bias2);
    __m256 eps = _mm256_set1_ps(s.eps);
    size_t i = 0;
    for (; i + 8 <= len; i += 8) {
        __m256 gi = _mm256_loadu_ps(g + i);
        __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)),
                                  _mm256_mul_ps(omb1, gi));
        __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                  _mm256_mul_ps(omb2, _mm256_mul_ps(gi, gi)));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        __m256 mhat = _mm256_mul_ps(mi, bias1);
        __m256 vhat = _mm256_mul_ps(vi, bias2);
        __m256 step = _mm256_div_ps(_mm256_mul_ps(lr, mhat),
                                    _mm256_add_ps(_mm256_sqrt_ps(vhat), eps));
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
    }
    for (; i < len; ++i) {
        m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * (g[i] * g[i]);
        float mhat = m[i] * s.bias1;
        float vhat = v[i] * s.bias2;
        p[i] = p[i] - s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

}  // namespace

const Ops* avx2_ops_or_null() {
    static const Ops ops = {
        "avx2", a_gemm_nn, a_gemm_tn, a_gemm_nt, a_relu_fwd, a_relu_bwd, a_adam_step,
    };
    return &ops;
}

}  // namespace mtseg::kernels

#else

namespace mtseg::kernels {
const Ops* avx2_ops_or_null() { return nullptr; }
}  // namespace mtseg::kernels

#endif
