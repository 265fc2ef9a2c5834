#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace mtseg::kernels {

// Scalar factors for one Adam update, bias corrections precomputed. The
// update applied per element is
//   m = beta1*m + (1-beta1)*g
//   v = beta2*v + (1-beta2)*g^2
//   p -= lr * (m*bias1) / (sqrt(v*bias2) + eps)
// where eps is the epsilon term added to the bias-corrected root; callers
// following the step-dependent-epsilon formulation pass eps already scaled
// by sqrt(1 - beta2^t).
struct AdamScalars {
    float lr;
    float beta1;
    float beta2;
    float eps;
    float bias1;  // 1 / (1 - beta1^t)
    float bias2;  // 1 / (1 - beta2^t)
};

// One implementation of the data-parallel inner loops. All matrices are
// tightly packed row-major. gemm_* accumulate into C when acc is true and
// overwrite otherwise.
//
//   gemm_nn: C[m,n] = A[m,k] * B[k,n]
//   gemm_tn: C[m,n] = A[k,m]^T * B[k,n]
//   gemm_nt: C[m,n] = A[m,k] * B[n,k]^T
struct Ops {
    const char* name;
    void (*gemm_nn)(int m, int n, int k, const float* A, const float* B, float* C, bool acc);
    void (*gemm_tn)(int m, int n, int k, const float* A, const float* B, float* C, bool acc);
    void (*gemm_nt)(int m, int n, int k, const float* A, const float* B, float* C, bool acc);
    void (*relu_fwd)(const float* x, float* y, size_t len);
    // gin = gout where act > 0 else 0 (act is the forward output).
    void (*relu_bwd)(const float* act, const float* gout, float* gin, size_t len);
    void (*adam_step)(float* p, const float* g, float* m, float* v, size_t len,
                      const AdamScalars& s);
};

const Ops& scalar_ops();

// Table picked at startup: best instruction set the CPU supports, or the
// MTSEG_KERNELS env override ("scalar" / "avx2" / "auto").
const Ops& active();

// Force a specific table; returns false if that table is unavailable on
// this machine. Used by equivalence tests and the CLI.
bool select(std::string_view name);

std::vector<const Ops*> available();

// Generic scalar GEMM for the non-float shadow path.
template <typename T>
void gemm_nn_t(int m, int n, int k, const T* A, const T* B, T* C, bool acc) {
    for (int i = 0; i < m; ++i) {
        T* crow = C + size_t(i) * n;
        if (!acc)
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        for (int l = 0; l < k; ++l) {
            T a = A[size_t(i) * k + l];
            const T* brow = B + size_t(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

template <typename T>
void gemm_tn_t(int m, int n, int k, const T* A, const T* B, T* C, bool acc) {
    for (int i = 0; i < m; ++i) {
        T* crow = C + size_t(i) * n;
        if (!acc)
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        for (int l = 0; l < k; ++l) {
            T a = A[size_t(l) * m + i];
            const T* brow = B + size_t(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

template <typename T>
void gemm_nt_t(int m, int n, int k, const T* A, const T* B, T* C, bool acc) {
    for (int i = 0; i < m; ++i) {
        const T* arow = A + size_t(i) * k;
        T* crow = C + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = B + size_t(j) * k;
            T sum = T(0);
            for (int l = 0; l < k; ++l) sum += arow[l] * brow[l];
            crow[j] = acc ? crow[j] + sum : sum;
        }
    }
}

}  // namespace mtseg::kernels
