#include <cmath>

#include "mtseg/kernels.hpp"

// Reference kernels. Every other table must agree with these: exactly for
// order-independent ops (relu, adam), within float tolerance for GEMM.

namespace mtseg::kernels {

namespace {

void s_gemm_nn(int m, int n, int k, const float* A, const float* B, float* C, bool acc) {
    gemm_nn_t<float>(m, n, k, A, B, C, acc);
}

void s_gemm_tn(int m, int n, int k, const float* A, const float* B, float* C, bool acc) {
    gemm_tn_t<float>(m, n, k, A, B, C, acc);
}

void s_gemm_nt(int m, int n, int k, const float* A, const float* B, float* C, bool acc) {
    gemm_nt_t<float>(m, n, k, A, B, C, acc);
}

void s_relu_fwd(const float* x, float* y, size_t len) {
    for (size_t i = 0; i < len; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void s_relu_bwd(const float* act, const float* gout, float* gin, size_t len) {
    for (size_t i = 0; i < len; ++i) gin[i] = act[i] > 0.0f ? gout[i] : 0.0f;
}

void s_adam_step(float* p, const float* g, float* m, float* v, size_t len,
                 const AdamScalars& s) {
    for (size_t i = 0; i < len; ++i) {
        m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * (g[i] * g[i]);
        float mhat = m[i] * s.bias1;
        float vhat = v[i] * s.bias2;
        p[i] = p[i] - s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar", s_gemm_nn, s_gemm_tn, s_gemm_nt, s_relu_fwd, s_relu_bwd, s_adam_step,
    };
    return ops;
}

}  // namespace mtseg::kernels
