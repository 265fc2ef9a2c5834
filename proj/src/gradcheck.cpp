#include "mtseg/gradcheck.hpp"

#include <cmath>
#include <numeric>

#include "mtseg/io_util.hpp"
#include "mtseg/layers.hpp"
#include "mtseg/rng.hpp"

namespace mtseg {
namespace {

constexpr double kStep = 1e-6;
constexpr double kDenomFloor = 1e-3;
constexpr size_t kExhaustiveLimit = 200;
constexpr size_t kSampleCount = 40;
constexpr float kBnEps = 1e-5f;

template <typename T>
using Groups = std::vector<std::vector<T>>;

template <typename T>
struct Eval {
    T loss;
    Groups<T> grads;
};

template <typename T>
Tensor4T<T> as_tensor(const std::vector<T>& v, int n, int c, int h, int w) {
    Tensor4T<T> t(n, c, h, w);
    t.v = v;
    return t;
}

std::vector<float> normal_vec(Rng& r, size_t n, float scale) {
    std::vector<float> v(n);
    for (auto& x : v) x = float(r.normal()) * scale;
    return v;
}

std::vector<float> uniform_vec(Rng& r, size_t n, float lo, float hi) {
    std::vector<float> v(n);
    for (auto& x : v) x = r.uniformf(lo, hi);
    return v;
}

std::vector<float> he_weights(Rng& r, int oc, int ic, int k) {
    return normal_vec(r, size_t(oc) * ic * k * k, std::sqrt(2.0f / float(ic * k * k)));
}

ClassMap random_labels(Rng& r, int n, int h, int w, int classes) {
    ClassMap m(n, h, w);
    for (auto& l : m.v) l = uint8_t(r.uniform_int(0, classes - 1));
    return m;
}

// ---- case evaluators ------------------------------------------------------

template <typename T, int Stride>
Eval<T> run_conv(const Groups<T>& g, const ClassMap& labels, bool want) {
    const int hw = Stride == 2 ? 7 : 6;
    auto x = as_tensor(g[0], 2, 2, hw, hw);
    auto w = as_tensor(g[1], 3, 2, 3, 3);
    const std::vector<T>& b = g[2];
    auto z = conv2d_forward(x, w, std::span<const T>(b), Stride, 1);
    auto xr = softmax_xent(z, labels);
    Eval<T> r{xr.loss, {}};
    if (want) {
        auto cg = conv2d_backward(x, w, xr.grad_logits, Stride, 1);
        r.grads = {std::move(cg.input.v), std::move(cg.weights.v), std::move(cg.bias)};
    }
    return r;
}

template <typename T>
Eval<T> run_batchnorm(const Groups<T>& g, const ClassMap& labels, bool want) {
    auto x = as_tensor(g[0], 2, 4, 5, 5);
    std::span<const T> gamma(g[1]), beta(g[2]);
    auto stats = BnStats<T>::fresh(4);
    BnCache<T> cache;
    auto y = batchnorm_forward(x, gamma, beta, T(kBnEps), Mode::train, stats, &cache);
    auto xr = softmax_xent(y, labels);
    Eval<T> r{xr.loss, {}};
    if (want) {
        auto bg = batchnorm_backward(x, gamma, cache, xr.grad_logits);
        r.grads = {std::move(bg.input.v), std::move(bg.gamma), std::move(bg.beta)};
    }
    return r;
}

template <typename T>
Eval<T> run_relu(const Groups<T>& g, const ClassMap& labels, bool want) {
    auto x = as_tensor(g[0], 2, 4, 4, 4);
    auto a = relu_forward(x);
    auto xr = softmax_xent(a, labels);
    Eval<T> r{xr.loss, {}};
    if (want) r.grads = {relu_backward(a, xr.grad_logits).v};
    return r;
}

template <typename T>
Eval<T> run_softmax_xent(const Groups<T>& g, const ClassMap& labels, bool want) {
    auto x = as_tensor(g[0], 2, 5, 4, 4);
    auto xr = softmax_xent(x, labels);
    Eval<T> r{xr.loss, {}};
    if (want) r.grads = {std::move(xr.grad_logits.v)};
    return r;
}

template <typename T>
Eval<T> run_conv_bn_relu(const Groups<T>& g, const ClassMap& labels, bool want) {
    auto x = as_tensor(g[0], 2, 2, 6, 6);
    auto w = as_tensor(g[1], 4, 2, 3, 3);
    const std::vector<T>& b = g[2];
    std::span<const T> gamma(g[3]), beta(g[4]);
    auto c = conv2d_forward(x, w, std::span<const T>(b), 1, 1);
    auto stats = BnStats<T>::fresh(4);
    BnCache<T> cache;
    auto n = batchnorm_forward(c, gamma, beta, T(kBnEps), Mode::train, stats, &cache);
    auto a = relu_forward(n);
    auto xr = softmax_xent(a, labels);
    Eval<T> r{xr.loss, {}};
    if (want) {
        auto ga = relu_backward(a, xr.grad_logits);
        auto bg = batchnorm_backward(c, gamma, cache, ga);
        auto cg = conv2d_backward(x, w, bg.input, 1, 1);
        r.grads = {std::move(cg.input.v), std::move(cg.weights.v), std::move(cg.bias),
                   std::move(bg.gamma), std::move(bg.beta)};
    }
    return r;
}

// Miniature encoder/decoder with one pool/unpool pair sharing indices, the
// same structural motif as the full network.
template <typename T>
Eval<T> run_tiny_net(const Groups<T>& g, const ClassMap& labels, bool want) {
    auto x = as_tensor(g[0], 2, 1, 8, 8);
    auto w1 = as_tensor(g[1], 4, 1, 3, 3);
    const std::vector<T>&b1 = g[2];
    std::span<const T> g1(g[3]), be1(g[4]);
    auto w2 = as_tensor(g[5], 6, 4, 3, 3);
    const std::vector<T>& b2 = g[6];
    std::span<const T> g2(g[7]), be2(g[8]);
    auto w3 = as_tensor(g[9], 4, 6, 3, 3);
    const std::vector<T>& b3 = g[10];
    auto w4 = as_tensor(g[11], 3, 4, 3, 3);
    const std::vector<T>& b4 = g[12];

    auto c1 = conv2d_forward(x, w1, std::span<const T>(b1), 1, 1);
    auto s1 = BnStats<T>::fresh(4);
    BnCache<T> cache1;
    auto n1 = batchnorm_forward(c1, g1, be1, T(kBnEps), Mode::train, s1, &cache1);
    auto r1 = relu_forward(n1);
    auto pooled = maxpool2x2_forward(r1);
    auto c2 = conv2d_forward(pooled.output, w2, std::span<const T>(b2), 1, 1);
    auto s2 = BnStats<T>::fresh(6);
    BnCache<T> cache2;
    auto n2 = batchnorm_forward(c2, g2, be2, T(kBnEps), Mode::train, s2, &cache2);
    auto r2 = relu_forward(n2);
    auto c3 = conv2d_forward(r2, w3, std::span<const T>(b3), 1, 1);
    auto r3 = relu_forward(c3);
    auto up = maxunpool2x2(r3, pooled.indices, 8, 8);
    auto c4 = conv2d_forward(up, w4, std::span<const T>(b4), 1, 1);
    auto xr = softmax_xent(c4, labels);
    Eval<T> r{xr.loss, {}};
    if (!want) return r;

    auto gc4 = conv2d_backward(up, w4, xr.grad_logits, 1, 1);
    auto gup = maxunpool2x2_backward(gc4.input, pooled.indices);
    auto gr3 = relu_backward(r3, gup);
    auto gc3 = conv2d_backward(r2, w3, gr3, 1, 1);
    auto gr2 = relu_backward(r2, gc3.input);
    auto gb2 = batchnorm_backward(c2, g2, cache2, gr2);
    auto gc2 = conv2d_backward(pooled.output, w2, gb2.input, 1, 1);
    auto gpool = maxunpool2x2(gc2.input, pooled.indices, 8, 8);
    auto gr1 = relu_backward(r1, gpool);
    auto gb1 = batchnorm_backward(c1, g1, cache1, gr1);
    auto gc1 = conv2d_backward(x, w1, gb1.input, 1, 1);
    r.grads = {std::move(gc1.input.v),
               std::move(gc1.weights.v), std::move(gc1.bias),
               std::move(gb1.gamma),     std::move(gb1.beta),
               std::move(gc2.weights.v), std::move(gc2.bias),
               std::move(gb2.gamma),     std::move(gb2.beta),
               std::move(gc3.weights.v), std::move(gc3.bias),
               std::move(gc4.weights.v), std::move(gc4.bias)};
    return r;
}

// ---- case construction ----------------------------------------------------

struct CaseDef {
    std::vector<std::string> group_names;
    Groups<float> init;
    ClassMap labels{1, 1, 1};
    Eval<float> (*run_f)(const Groups<float>&, const ClassMap&, bool) = nullptr;
    Eval<double> (*run_d)(const Groups<double>&, const ClassMap&, bool) = nullptr;
};

CaseDef build_case(const std::string& name, uint64_t seed) {
    auto stream = [&](uint64_t a, uint64_t b) { return Rng(Rng::key(seed, a, b)); };
    CaseDef cd;
    if (name == "conv" || name == "conv_s2") {
        bool s2 = name == "conv_s2";
        int hw = s2 ? 7 : 6;
        Rng rx = stream(1, 0), rw = stream(1, 1), rb = stream(1, 2), rl = stream(1, 3);
        cd.group_names = {"input", "weights", "bias"};
        cd.init = {normal_vec(rx, size_t(2) * 2 * hw * hw, 1.0f), he_weights(rw, 3, 2, 3),
                   uniform_vec(rb, 3, -0.1f, 0.1f)};
        int ohw = s2 ? 4 : 6;
        cd.labels = random_labels(rl, 2, ohw, ohw, 3);
        if (s2) {
            cd.run_f = &run_conv<float, 2>;
            cd.run_d = &run_conv<double, 2>;
        } else {
            cd.run_f = &run_conv<float, 1>;
            cd.run_d = &run_conv<double, 1>;
        }
    } else if (name == "batchnorm") {
        Rng rx = stream(2, 0), rg = stream(2, 1), rb = stream(2, 2), rl = stream(2, 3);
        cd.group_names = {"input", "gamma", "beta"};
        cd.init = {normal_vec(rx, size_t(2) * 4 * 5 * 5, 1.0f),
                   uniform_vec(rg, 4, 0.8f, 1.2f), uniform_vec(rb, 4, -0.1f, 0.1f)};
        cd.labels = random_labels(rl, 2, 5, 5, 4);
        cd.run_f = &run_batchnorm<float>;
        cd.run_d = &run_batchnorm<double>;
    } else if (name == "relu") {
        Rng rx = stream(3, 0), rl = stream(3, 1);
        cd.group_names = {"input"};
        cd.init = {normal_vec(rx, size_t(2) * 4 * 4 * 4, 1.0f)};
        cd.labels = random_labels(rl, 2, 4, 4, 4);
        cd.run_f = &run_relu<float>;
        cd.run_d = &run_relu<double>;
    } else if (name == "softmax_xent") {
        Rng rx = stream(4, 0), rl = stream(4, 1);
        cd.group_names = {"input"};
        cd.init = {normal_vec(rx, size_t(2) * 5 * 4 * 4, 1.0f)};
        cd.labels = random_labels(rl, 2, 4, 4, 5);
        cd.run_f = &run_softmax_xent<float>;
        cd.run_d = &run_softmax_xent<double>;
    } else if (name == "conv_bn_relu") {
        Rng rx = stream(5, 0), rw = stream(5, 1), rb = stream(5, 2), rg = stream(5, 3),
            rbe = stream(5, 4), rl = stream(5, 5);
        cd.group_names = {"input", "conv_w", "conv_b", "gamma", "beta"};
        cd.init = {normal_vec(rx, size_t(2) * 2 * 6 * 6, 1.0f), he_weights(rw, 4, 2, 3),
                   uniform_vec(rb, 4, -0.1f, 0.1f), uniform_vec(rg, 4, 0.8f, 1.2f),
                   uniform_vec(rbe, 4, -0.1f, 0.1f)};
        cd.labels = random_labels(rl, 2, 6, 6, 4);
        cd.run_f = &run_conv_bn_relu<float>;
        cd.run_d = &run_conv_bn_relu<double>;
    } else if (name == "tiny_net") {
        cd.group_names = {"input", "conv1_w", "conv1_b", "bn1_gamma", "bn1_beta",
                          "conv2_w", "conv2_b", "bn2_gamma", "bn2_beta",
                          "conv3_w", "conv3_b", "conv4_w", "conv4_b"};
        Rng rx = stream(6, 0);
        cd.init.push_back(normal_vec(rx, size_t(2) * 1 * 8 * 8, 1.0f));
        auto push_conv = [&](uint64_t b, int oc, int ic) {
            Rng rw = stream(6, b), rb = stream(6, b + 1);
            cd.init.push_back(he_weights(rw, oc, ic, 3));
            cd.init.push_back(uniform_vec(rb, size_t(oc), -0.1f, 0.1f));
        };
        auto push_bn = [&](uint64_t b, int c) {
            Rng rg = stream(6, b), rbe = stream(6, b + 1);
            cd.init.push_back(uniform_vec(rg, size_t(c), 0.8f, 1.2f));
            cd.init.push_back(uniform_vec(rbe, size_t(c), -0.1f, 0.1f));
        };
        push_conv(1, 4, 1);
        push_bn(3, 4);
        push_conv(5, 6, 4);
        push_bn(7, 6);
        push_conv(9, 4, 6);
        push_conv(11, 3, 4);
        Rng rl = stream(6, 13);
        cd.labels = random_labels(rl, 2, 8, 8, 3);
        cd.run_f = &run_tiny_net<float>;
        cd.run_d = &run_tiny_net<double>;
    } else {
        throw DataError("gradcheck: unknown case '" + name + "'");
    }
    return cd;
}

}  // namespace

const std::vector<std::string>& gradcheck_cases() {
    static const std::vector<std::string> cases = {
        "conv", "conv_s2", "batchnorm", "relu", "softmax_xent", "conv_bn_relu",
        "tiny_net"};
    return cases;
}

GradCheckReport gradcheck(const std::string& case_name, uint64_t seed) {
    CaseDef cd = build_case(case_name, seed);
    Eval<float> analytic = cd.run_f(cd.init, cd.labels, true);
    if (!std::isfinite(double(analytic.loss)))
        throw NumericalError("gradcheck: non-finite loss in case " + case_name);

    Groups<double> gd(cd.init.size());
    for (size_t i = 0; i < cd.init.size(); ++i)
        gd[i].assign(cd.init[i].begin(), cd.init[i].end());

    GradCheckReport rep;
    rep.case_name = case_name;
    rep.seed = seed;
    Rng pick(Rng::key(seed, 7, 7));

    for (size_t gi = 0; gi < gd.size(); ++gi) {
        GradCheckGroup grp;
        grp.name = cd.group_names[gi];
        std::vector<size_t> idx;
        const size_t n = gd[gi].size();
        if (n <= kExhaustiveLimit) {
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), size_t(0));
        } else {
            std::vector<size_t> all(n);
            std::iota(all.begin(), all.end(), size_t(0));
            pick.shuffle(all);
            idx.assign(all.begin(), all.begin() + kSampleCount);
        }
        for (size_t k : idx) {
            const double orig = gd[gi][k];
            gd[gi][k] = orig + kStep;
            double lp = cd.run_d(gd, cd.labels, false).loss;
            gd[gi][k] = orig - kStep;
            double lm = cd.run_d(gd, cd.labels, false).loss;
            gd[gi][k] = orig;
            double fd = (lp - lm) / (2.0 * kStep);
            double an = double(analytic.grads[gi][k]);
            double rel = std::abs(an - fd) /
                         std::max(std::abs(an) + std::abs(fd), kDenomFloor);
            if (rel >= grp.max_rel_err) {
                grp.max_rel_err = rel;
                grp.worst_index = k;
                grp.analytic = an;
                grp.numeric = fd;
            }
            ++grp.checked;
        }
        rep.max_rel_err = std::max(rep.max_rel_err, grp.max_rel_err);
        rep.groups.push_back(std::move(grp));
    }
    return rep;
}

std::string GradCheckReport::to_string() const {
    std::string s = "case " + case_name + " seed " + std::to_string(seed) +
                    ": max_rel_err=" + io::format_float(max_rel_err) + "\n";
    for (const auto& g : groups)
        s += "  " + g.name + ": max_rel_err=" + io::format_float(g.max_rel_err) +
             " at #" + std::to_string(g.worst_index) + " (analytic=" +
             io::format_float(g.analytic) + ", numeric=" + io::format_float(g.numeric) +
             ", checked=" + std::to_string(g.checked) + ")\n";
    return s;
}

}  // namespace mtseg
