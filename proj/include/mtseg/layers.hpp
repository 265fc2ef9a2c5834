#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "mtseg/kernels.hpp"
#include "mtseg/tensor.hpp"

// Forward/backward primitives for the segmentation network. Everything is a
// pure function of its arguments; the only mutable state is the running
// batch-norm statistics the caller owns. Templated so the same math runs in
// float (working precision, SIMD-dispatched) and double (shadow path for
// finite-difference checks).

namespace mtseg {

enum class Mode { train, infer };

// Optional sample-parallel convolution forward. Results are identical to the
// serial path because samples never share accumulators. Default 1 (serial).
void set_batch_threads(int threads);
int batch_threads();

template <typename T>
struct ConvGrads {
    Tensor4T<T> input;
    Tensor4T<T> weights;
    std::vector<T> bias;
};

template <typename T>
struct BnStats {
    std::vector<T> mean;
    std::vector<T> var;

    static BnStats fresh(int channels) {
        BnStats s;
        s.mean.assign(channels, T(0));
        s.var.assign(channels, T(1));
        return s;
    }
};

// Batch statistics captured by a train-mode forward, needed by backward.
template <typename T>
struct BnCache {
    std::vector<T> mean;
    std::vector<T> inv_std;
};

namespace detail {

template <typename T>
void gemm_nn(int m, int n, int k, const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>)
        kernels::active().gemm_nn(m, n, k, A, B, C, acc);
    else
        kernels::gemm_nn_t<T>(m, n, k, A, B, C, acc);
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>)
        kernels::active().gemm_tn(m, n, k, A, B, C, acc);
    else
        kernels::gemm_tn_t<T>(m, n, k, A, B, C, acc);
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* A, const T* B, T* C, bool acc) {
    if constexpr (std::is_same_v<T, float>)
        kernels::active().gemm_nt(m, n, k, A, B, C, acc);
    else
        kernels::gemm_nt_t<T>(m, n, k, A, B, C, acc);
}

// Patch matrix: row l = (c,ky,kx) tap, column p = output position.
template <typename T>
void im2col(const Tensor4T<T>& x, int sample, int k, int stride, int pad,
            int oh, int ow, T* cols) {
    const int P = oh * ow;
    for (int c = 0; c < x.c; ++c) {
        const T* plane = x.plane(sample, c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + (size_t(c) * k * k + size_t(ky) * k + kx) * P;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ky;
                    T* dst = row + size_t(oy) * ow;
                    if (iy < 0 || iy >= x.h) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    const T* src = plane + size_t(iy) * x.w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < x.w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, int channels, int height, int width, int k,
                int stride, int pad, int oh, int ow, Tensor4T<T>& gx, int sample) {
    const int P = oh * ow;
    for (int c = 0; c < channels; ++c) {
        T* plane = gx.plane(sample, c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + (size_t(c) * k * k + size_t(ky) * k + kx) * P;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < width)
                            plane[size_t(iy) * width + ix] += row[size_t(oy) * ow + ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void check_conv_args(const Tensor4T<T>& x, const Tensor4T<T>& w,
                     std::span<const T> bias, int stride, int pad) {
    if (w.c != x.c)
        throw DataError("conv2d: input channels " + std::to_string(x.c) +
                        " != weight in_channels " + std::to_string(w.c));
    if (w.h != w.w)
        throw DataError("conv2d: kernel must be square, got " + w.shape_str());
    if (w.h % 2 == 0)
        throw DataError("conv2d: kernel size must be odd, got " + std::to_string(w.h));
    if (stride < 1) throw DataError("conv2d: stride must be >= 1");
    if (pad < 0) throw DataError("conv2d: pad must be >= 0");
    if (!bias.empty() && int(bias.size()) != w.n)
        throw DataError("conv2d: bias length " + std::to_string(bias.size()) +
                        " != out_channels " + std::to_string(w.n));
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// Cross-correlation plus bias. Output spatial dims follow the usual
// floor((d + 2*pad - k)/stride) + 1 rule.
template <typename T>
Tensor4T<T> conv2d_forward(const Tensor4T<T>& x, const Tensor4T<T>& w,
                           std::span<const T> bias, int stride = 1, int pad = 0) {
    detail::check_conv_args(x, w, bias, stride, pad);
    const int k = w.h;
    const int oh = detail::conv_out_dim(x.h, k, stride, pad);
    const int ow = detail::conv_out_dim(x.w, k, stride, pad);
    if (oh < 1 || ow < 1)
        throw DataError("conv2d: input " + x.shape_str() + " too small for kernel " +
                        std::to_string(k) + " stride " + std::to_string(stride) +
                        " pad " + std::to_string(pad));
    const int L = x.c * k * k;
    const int P = oh * ow;
    Tensor4T<T> out(x.n, w.n, oh, ow);

    auto run_sample = [&](int i, std::vector<T>& cols) {
        detail::im2col(x, i, k, stride, pad, oh, ow, cols.data());
        T* oplane = out.plane(i, 0);
        detail::gemm_nn<T>(w.n, P, L, w.data(), cols.data(), oplane, false);
        if (!bias.empty())
            for (int oc = 0; oc < w.n; ++oc) {
                T b = bias[oc];
                T* row = oplane + size_t(oc) * P;
                for (int p = 0; p < P; ++p) row[p] += b;
            }
    };

    int threads = std::min(batch_threads(), x.n);
    if (threads > 1) {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                std::vector<T> cols(size_t(L) * P);
                for (int i = t; i < x.n; i += threads) run_sample(i, cols);
            });
        for (auto& th : pool) th.join();
    } else {
        std::vector<T> cols(size_t(L) * P);
        for (int i = 0; i < x.n; ++i) run_sample(i, cols);
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4T<T>& x, const Tensor4T<T>& w,
                             const Tensor4T<T>& grad_out, int stride = 1, int pad = 0) {
    detail::check_conv_args(x, w, std::span<const T>{}, stride, pad);
    const int k = w.h;
    const int oh = detail::conv_out_dim(x.h, k, stride, pad);
    const int ow = detail::conv_out_dim(x.w, k, stride, pad);
    if (grad_out.n != x.n || grad_out.c != w.n || grad_out.h != oh || grad_out.w != ow)
        throw DataError("conv2d_backward: grad_out shape " + grad_out.shape_str() +
                        " does not match forward output (" + std::to_string(x.n) + "," +
                        std::to_string(w.n) + "," + std::to_string(oh) + "," +
                        std::to_string(ow) + ")");
    const int L = x.c * k * k;
    const int P = oh * ow;

    ConvGrads<T> g;
    g.input = Tensor4T<T>(x.n, x.c, x.h, x.w);
    g.weights = Tensor4T<T>(w.n, w.c, w.h, w.w);
    g.bias.assign(size_t(w.n), T(0));

    std::vector<T> cols(size_t(L) * P);
    std::vector<T> colgrad(size_t(L) * P);
    for (int i = 0; i < x.n; ++i) {
        const T* gplane = grad_out.plane(i, 0);
        detail::im2col(x, i, k, stride, pad, oh, ow, cols.data());
        detail::gemm_nt<T>(w.n, L, P, gplane, cols.data(), g.weights.data(), true);
        for (int oc = 0; oc < w.n; ++oc) {
            const T* row = gplane + size_t(oc) * P;
            T s = T(0);
            for (int p = 0; p < P; ++p) s += row[p];
            g.bias[oc] += s;
        }
        detail::gemm_tn<T>(L, P, w.n, w.data(), gplane, colgrad.data(), false);
        detail::col2im_add(colgrad.data(), x.c, x.h, x.w, k, stride, pad, oh, ow,
                           g.input, i);
    }
    return g;
}

template <typename T>
struct PoolResult {
    Tensor4T<T> output;
    PoolIndices indices;
};

// 2x2 stride-2 max pooling. Ties break toward the smallest in-window offset
// so the recorded argmax is deterministic.
template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor4T<T>& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
        throw DataError("maxpool2x2: spatial dims must be even, got " + x.shape_str());
    const int oh = x.h / 2, ow = x.w / 2;
    PoolResult<T> r{Tensor4T<T>(x.n, x.c, oh, ow), PoolIndices(x.n, x.c, oh, ow)};
    for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < x.c; ++j) {
            const T* in = x.plane(i, j);
            T* out = r.output.plane(i, j);
            uint8_t* idx = r.indices.plane(i, j);
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const T* win = in + size_t(2 * oy) * x.w + 2 * ox;
                    T best = win[0];
                    uint8_t off = 0;
                    if (win[1] > best) { best = win[1]; off = 1; }
                    if (win[x.w] > best) { best = win[x.w]; off = 2; }
                    if (win[x.w + 1] > best) { best = win[x.w + 1]; off = 3; }
                    out[size_t(oy) * ow + ox] = best;
                    idx[size_t(oy) * ow + ox] = off;
                }
        }
    return r;
}

// Scatter values to their recorded argmax positions; everything else is 0.
// Also serves as the pooling backward (scatter grad_out by the indices).
template <typename T>
Tensor4T<T> maxunpool2x2(const Tensor4T<T>& x, const PoolIndices& idx,
                         int out_h, int out_w) {
    if (idx.n != x.n || idx.c != x.c || idx.h != x.h || idx.w != x.w)
        throw DataError("maxunpool2x2: indices shape mismatch vs input " + x.shape_str());
    if (out_h != 2 * x.h || out_w != 2 * x.w)
        throw DataError("maxunpool2x2: out dims must be exactly 2x input, got " +
                        std::to_string(out_h) + "x" + std::to_string(out_w));
    Tensor4T<T> out(x.n, x.c, out_h, out_w);
    for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < x.c; ++j) {
            const T* in = x.plane(i, j);
            T* o = out.plane(i, j);
            const uint8_t* ix = idx.plane(i, j);
            for (int oy = 0; oy < x.h; ++oy)
                for (int ox = 0; ox < x.w; ++ox) {
                    uint8_t off = ix[size_t(oy) * x.w + ox];
                    if (off > 3)
                        throw DataError("maxunpool2x2: corrupt index " +
                                        std::to_string(int(off)) + " at (" +
                                        std::to_string(oy) + "," + std::to_string(ox) + ")");
                    int ty = 2 * oy + (off >> 1);
                    int tx = 2 * ox + (off & 1);
                    o[size_t(ty) * out_w + tx] = in[size_t(oy) * x.w + ox];
                }
        }
    return out;
}

// Gradient of maxunpool2x2 w.r.t. its input: gather each value back from the
// position it was scattered to.
template <typename T>
Tensor4T<T> maxunpool2x2_backward(const Tensor4T<T>& grad_out, const PoolIndices& idx) {
    if (grad_out.n != idx.n || grad_out.c != idx.c || grad_out.h != 2 * idx.h ||
        grad_out.w != 2 * idx.w)
        throw DataError("maxunpool2x2_backward: grad_out shape " + grad_out.shape_str() +
                        " does not match indices");
    Tensor4T<T> gin(idx.n, idx.c, idx.h, idx.w);
    for (int i = 0; i < idx.n; ++i)
        for (int j = 0; j < idx.c; ++j) {
            const T* go = grad_out.plane(i, j);
            T* o = gin.plane(i, j);
            const uint8_t* ix = idx.plane(i, j);
            for (int oy = 0; oy < idx.h; ++oy)
                for (int ox = 0; ox < idx.w; ++ox) {
                    uint8_t off = ix[size_t(oy) * idx.w + ox];
                    if (off > 3)
                        throw DataError("maxunpool2x2_backward: corrupt index " +
                                        std::to_string(int(off)));
                    int ty = 2 * oy + (off >> 1);
                    int tx = 2 * ox + (off & 1);
                    o[size_t(oy) * idx.w + ox] = go[size_t(ty) * grad_out.w + tx];
                }
        }
    return gin;
}

// Per-channel batch normalization. Train mode normalizes by batch statistics
// (biased variance) and folds them into the running stats with the given
// momentum; infer mode uses the running stats as-is.
template <typename T>
Tensor4T<T> batchnorm_forward(const Tensor4T<T>& x, std::span<const T> gamma,
                              std::span<const T> beta, T eps, Mode mode,
                              BnStats<T>& running, BnCache<T>* cache = nullptr,
                              T momentum = T(0.9)) {
    if (int(gamma.size()) != x.c || int(beta.size()) != x.c)
        throw DataError("batchnorm: gamma/beta length must equal channels " +
                        std::to_string(x.c));
    if (eps <= T(0)) throw DataError("batchnorm: eps must be > 0");
    const size_t plane = size_t(x.h) * x.w;
    const size_t m = size_t(x.n) * plane;
    if (m == 0) throw DataError("batchnorm: zero-size batch");
    if (int(running.mean.size()) != x.c || int(running.var.size()) != x.c)
        throw DataError("batchnorm: running stats length must equal channels");

    Tensor4T<T> out(x.n, x.c, x.h, x.w);
    std::vector<T> mean(x.c), inv_std(x.c);
    for (int j = 0; j < x.c; ++j) {
        T mu, var;
        if (mode == Mode::train) {
            double sum = 0, sumsq = 0;
            for (int i = 0; i < x.n; ++i) {
                const T* p = x.plane(i, j);
                for (size_t q = 0; q < plane; ++q) {
                    sum += double(p[q]);
                    sumsq += double(p[q]) * double(p[q]);
                }
            }
            double dmu = sum / double(m);
            double dvar = std::max(0.0, sumsq / double(m) - dmu * dmu);
            mu = T(dmu);
            var = T(dvar);
            running.mean[j] = momentum * running.mean[j] + (T(1) - momentum) * mu;
            running.var[j] = momentum * running.var[j] + (T(1) - momentum) * var;
        } else {
            mu = running.mean[j];
            var = running.var[j];
        }
        T istd = T(1) / std::sqrt(var + eps);
        mean[j] = mu;
        inv_std[j] = istd;
        T g = gamma[j], b = beta[j];
        for (int i = 0; i < x.n; ++i) {
            const T* p = x.plane(i, j);
            T* o = out.plane(i, j);
            for (size_t q = 0; q < plane; ++q) o[q] = g * (p[q] - mu) * istd + b;
        }
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

template <typename T>
struct BnGrads {
    Tensor4T<T> input;
    std::vector<T> gamma;
    std::vector<T> beta;
};

template <typename T>
BnGrads<T> batchnorm_backward(const Tensor4T<T>& x, std::span<const T> gamma,
                              const BnCache<T>& cache, const Tensor4T<T>& grad_out) {
    if (!x.same_shape(grad_out))
        throw DataError("batchnorm_backward: grad_out shape " + grad_out.shape_str() +
                        " != input shape " + x.shape_str());
    const size_t plane = size_t(x.h) * x.w;
    const double m = double(x.n) * double(plane);
    BnGrads<T> g;
    g.input = Tensor4T<T>(x.n, x.c, x.h, x.w);
    g.gamma.assign(size_t(x.c), T(0));
    g.beta.assign(size_t(x.c), T(0));
    for (int j = 0; j < x.c; ++j) {
        const T mu = cache.mean[j], istd = cache.inv_std[j];
        double dbeta = 0, dgamma = 0;
        for (int i = 0; i < x.n; ++i) {
            const T* xp = x.plane(i, j);
            const T* gp = grad_out.plane(i, j);
            for (size_t q = 0; q < plane; ++q) {
                T xhat = (xp[q] - mu) * istd;
                dbeta += double(gp[q]);
                dgamma += double(gp[q]) * double(xhat);
            }
        }
        g.beta[j] = T(dbeta);
        g.gamma[j] = T(dgamma);
        const T gs = gamma[j] * istd;
        const T mean_dy = T(dbeta / m);
        const T mean_dyxhat = T(dgamma / m);
        for (int i = 0; i < x.n; ++i) {
            const T* xp = x.plane(i, j);
            const T* gp = grad_out.plane(i, j);
            T* o = g.input.plane(i, j);
            for (size_t q = 0; q < plane; ++q) {
                T xhat = (xp[q] - mu) * istd;
                o[q] = gs * (gp[q] - mean_dy - xhat * mean_dyxhat);
            }
        }
    }
    return g;
}

template <typename T>
Tensor4T<T> relu_forward(const Tensor4T<T>& x) {
    Tensor4T<T> out(x.n, x.c, x.h, x.w);
    if constexpr (std::is_same_v<T, float>) {
        kernels::active().relu_fwd(x.data(), out.data(), x.size());
    } else {
        for (size_t i = 0; i < x.size(); ++i) out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    }
    return out;
}

// act is the forward *output*; gradient passes where it is positive.
template <typename T>
Tensor4T<T> relu_backward(const Tensor4T<T>& act, const Tensor4T<T>& grad_out) {
    if (!act.same_shape(grad_out))
        throw DataError("relu_backward: shape mismatch " + act.shape_str() + " vs " +
                        grad_out.shape_str());
    Tensor4T<T> gin(act.n, act.c, act.h, act.w);
    if constexpr (std::is_same_v<T, float>) {
        kernels::active().relu_bwd(act.data(), grad_out.data(), gin.data(), act.size());
    } else {
        for (size_t i = 0; i < act.size(); ++i)
            gin.v[i] = act.v[i] > T(0) ? grad_out.v[i] : T(0);
    }
    return gin;
}

// Softmax across the channel axis, independently per pixel.
template <typename T>
Tensor4T<T> softmax_channelwise(const Tensor4T<T>& z) {
    Tensor4T<T> p(z.n, z.c, z.h, z.w);
    const size_t plane = size_t(z.h) * z.w;
    std::vector<T> vals(size_t(z.c));
    for (int i = 0; i < z.n; ++i)
        for (size_t q = 0; q < plane; ++q) {
            T mx = z.v[(size_t(i) * z.c) * plane + q];
            for (int c = 1; c < z.c; ++c)
                mx = std::max(mx, z.v[(size_t(i) * z.c + c) * plane + q]);
            T sum = T(0);
            for (int c = 0; c < z.c; ++c) {
                T e = std::exp(z.v[(size_t(i) * z.c + c) * plane + q] - mx);
                vals[c] = e;
                sum += e;
            }
            for (int c = 0; c < z.c; ++c)
                p.v[(size_t(i) * z.c + c) * plane + q] = vals[c] / sum;
        }
    return p;
}

// Jacobian-vector product of softmax: g_c = p_c * (gp_c - sum_j gp_j p_j).
template <typename T>
Tensor4T<T> softmax_backward(const Tensor4T<T>& probs, const Tensor4T<T>& grad_probs) {
    if (!probs.same_shape(grad_probs))
        throw DataError("softmax_backward: shape mismatch");
    Tensor4T<T> g(probs.n, probs.c, probs.h, probs.w);
    const size_t plane = size_t(probs.h) * probs.w;
    for (int i = 0; i < probs.n; ++i)
        for (size_t q = 0; q < plane; ++q) {
            T dot = T(0);
            for (int c = 0; c < probs.c; ++c)
                dot += grad_probs.v[(size_t(i) * probs.c + c) * plane + q] *
                       probs.v[(size_t(i) * probs.c + c) * plane + q];
            for (int c = 0; c < probs.c; ++c) {
                size_t at = (size_t(i) * probs.c + c) * plane + q;
                g.v[at] = probs.v[at] * (grad_probs.v[at] - dot);
            }
        }
    return g;
}

template <typename T>
struct LossResult {
    T loss;
    Tensor4T<T> grad;  // w.r.t. the probabilities
};

namespace detail {
inline constexpr double kProbFloor = 1e-12;
}

// Mean over non-ignored pixels of -log p[label].
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor4T<T>& probs, const ClassMap& labels,
                                 std::optional<int> ignore_class = std::nullopt) {
    if (labels.n != probs.n || labels.h != probs.h || labels.w != probs.w)
        throw DataError("cross_entropy: label map dims do not match probs " +
                        probs.shape_str());
    const size_t plane = size_t(probs.h) * probs.w;
    size_t count = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels.v[i] >= probs.c)
            throw DataError("cross_entropy: label " + std::to_string(int(labels.v[i])) +
                            " >= class count " + std::to_string(probs.c));
        if (!(ignore_class && int(labels.v[i]) == *ignore_class)) ++count;
    }
    if (count == 0) throw DataError("cross_entropy: every pixel is ignored");

    Tensor4T<T> grad(probs.n, probs.c, probs.h, probs.w);
    double loss = 0;
    const double inv_count = 1.0 / double(count);
    for (int i = 0; i < probs.n; ++i)
        for (size_t q = 0; q < plane; ++q) {
            int label = labels.v[size_t(i) * plane + q];
            if (ignore_class && label == *ignore_class) continue;
            size_t at = (size_t(i) * probs.c + size_t(label)) * plane + q;
            double p = std::max(double(probs.v[at]), detail::kProbFloor);
            loss -= std::log(p) * inv_count;
            grad.v[at] = T(-inv_count / p);
        }
    return {T(loss), std::move(grad)};
}

template <typename T>
struct XentResult {
    T loss;
    Tensor4T<T> probs;
    Tensor4T<T> grad_logits;  // (p - onehot) / count, zero at ignored pixels
};

// Fused softmax + cross-entropy on logits; numerically stable route used by
// training. Equivalent to softmax_channelwise + cross_entropy_loss +
// softmax_backward composed.
template <typename T>
XentResult<T> softmax_xent(const Tensor4T<T>& logits, const ClassMap& labels,
                           std::optional<int> ignore_class = std::nullopt) {
    XentResult<T> r;
    r.probs = softmax_channelwise(logits);
    if (labels.n != logits.n || labels.h != logits.h || labels.w != logits.w)
        throw DataError("softmax_xent: label map dims do not match logits " +
                        logits.shape_str());
    const size_t plane = size_t(logits.h) * logits.w;
    size_t count = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels.v[i] >= logits.c)
            throw DataError("softmax_xent: label " + std::to_string(int(labels.v[i])) +
                            " >= class count " + std::to_string(logits.c));
        if (!(ignore_class && int(labels.v[i]) == *ignore_class)) ++count;
    }
    if (count == 0) throw DataError("softmax_xent: every pixel is ignored");

    r.grad_logits = Tensor4T<T>(logits.n, logits.c, logits.h, logits.w);
    double loss = 0;
    const T inv_count = T(1.0 / double(count));
    for (int i = 0; i < logits.n; ++i)
        for (size_t q = 0; q < plane; ++q) {
            int label = labels.v[size_t(i) * plane + q];
            if (ignore_class && label == *ignore_class) continue;
            for (int c = 0; c < logits.c; ++c) {
                size_t at = (size_t(i) * logits.c + c) * plane + q;
                T p = r.probs.v[at];
                r.grad_logits.v[at] = (c == label ? p - T(1) : p) * inv_count;
                if (c == label)
                    loss -= std::log(std::max(double(p), detail::kProbFloor)) / double(count);
            }
        }
    r.loss = T(loss);
    return r;
}

}  // namespace mtseg
