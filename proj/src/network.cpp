#include "mtseg/network.hpp"

#include <cmath>

#include "mtseg/rng.hpp"

namespace mtseg {

namespace {

constexpr int kStageWidths[] = {64, 128, 256, 512, 512};
constexpr int kStageConvs[] = {2, 2, 3, 3, 3};
constexpr int kStages = 5;
constexpr float kBnEps = 1e-5f;

int64_t layer_params(const LayerDef& d) {
    int64_t p = int64_t(d.out_ch) * d.in_ch * 9 + d.out_ch;
    if (d.bn) p += 2 * int64_t(d.out_ch);
    return p;
}

}  // namespace

int NetworkSpec::stage_width(int s) const {
    int w = int(std::ceil(double(kStageWidths[s]) * double(width_multiplier)));
    return w < 1 ? 1 : w;
}

int NetworkSpec::stage_count() { return kStages; }

int NetworkSpec::stage_convs(int s) { return kStageConvs[s]; }

void NetworkSpec::validate() const {
    if (input_h <= 0 || input_w <= 0)
        throw DataError("network spec: input dims must be positive");
    const int div = 1 << kStages;
    if (input_h % div != 0 || input_w % div != 0)
        throw DataError("network spec: input dims must be divisible by " +
                        std::to_string(div) + ", got " + std::to_string(input_h) + "x" +
                        std::to_string(input_w));
    if (in_channels < 1) throw DataError("network spec: in_channels must be >= 1");
    if (classes < 2) throw DataError("network spec: need at least 2 classes");
    if (!(width_multiplier > 0.0f))
        throw DataError("network spec: width_multiplier must be > 0");
}

std::vector<LayerDef> layer_defs(const NetworkSpec& spec) {
    spec.validate();
    std::vector<LayerDef> defs;

    int prev = spec.in_channels;
    for (int s = 0; s < kStages; ++s) {
        int width = spec.stage_width(s);
        for (int c = 0; c < kStageConvs[s]; ++c) {
            defs.push_back({"enc" + std::to_string(s + 1) + "_" + std::to_string(c + 1),
                            prev, width, true, 0});
            prev = width;
        }
    }

    // Decoder stages run deepest-first. Each stage ends on the width the
    // encoder had entering that stage, because the next unpool consumes
    // pooling indices of that width; the shallowest stage ends on the class
    // count with a plain linear conv.
    for (int section = 1; section <= 2; ++section) {
        const char* prefix = section == 1 ? "comp" : "tip";
        prev = spec.stage_width(kStages - 1);
        for (int s = kStages - 1; s >= 0; --s) {
            int end_width = s > 0 ? spec.stage_width(s - 1) : spec.classes;
            for (int c = 0; c < kStageConvs[s]; ++c) {
                bool last_of_stage = c == kStageConvs[s] - 1;
                int out = last_of_stage ? end_width : spec.stage_width(s);
                bool linear = s == 0 && last_of_stage;
                defs.push_back({std::string(prefix) + std::to_string(s + 1) + "_" +
                                    std::to_string(c + 1),
                                prev, out, !linear, section});
                prev = out;
            }
        }
    }
    return defs;
}

ParamCount count_params(const NetworkSpec& spec) {
    ParamCount pc;
    int64_t decoder_total = 0;
    for (const auto& d : layer_defs(spec)) {
        int64_t p = layer_params(d);
        if (d.section == 0)
            pc.encoder += p;
        else
            decoder_total += p;
    }
    pc.decoder_each = decoder_total / 2;
    pc.total = pc.encoder + decoder_total;
    pc.two_single_task = 2 * (pc.encoder + pc.decoder_each);
    pc.savings = pc.two_single_task - pc.total;
    return pc;
}

Network::Network(const NetworkSpec& spec, uint64_t seed) : spec_(spec) {
    spec_.validate();
    auto defs = layer_defs(spec_);
    layers_.reserve(defs.size());
    for (size_t li = 0; li < defs.size(); ++li) {
        const LayerDef& d = defs[li];
        ConvLayer l;
        l.def = d;
        l.w = Tensor4(d.out_ch, d.in_ch, 3, 3);
        Rng wr(Rng::key(seed, 11, li));
        const float scale = std::sqrt(2.0f / float(d.in_ch * 9));
        for (auto& x : l.w.v) x = float(wr.normal()) * scale;
        l.b.assign(size_t(d.out_ch), 0.0f);
        if (d.bn) {
            l.gamma.assign(size_t(d.out_ch), 1.0f);
            l.beta.assign(size_t(d.out_ch), 0.0f);
            l.stats = BnStats<float>::fresh(d.out_ch);
        }
        l.gw = Tensor4(d.out_ch, d.in_ch, 3, 3);
        l.gb.assign(size_t(d.out_ch), 0.0f);
        l.ggamma.assign(l.gamma.size(), 0.0f);
        l.gbeta.assign(l.beta.size(), 0.0f);
        layers_.push_back(std::move(l));
    }
}

void Network::zero_grads() {
    for (auto& l : layers_) {
        std::fill(l.gw.v.begin(), l.gw.v.end(), 0.0f);
        std::fill(l.gb.begin(), l.gb.end(), 0.0f);
        std::fill(l.ggamma.begin(), l.ggamma.end(), 0.0f);
        std::fill(l.gbeta.begin(), l.gbeta.end(), 0.0f);
    }
}

std::vector<ParamView> Network::param_views() {
    std::vector<ParamView> views;
    for (auto& l : layers_) {
        views.push_back({l.def.name + ".w", l.w.data(), l.gw.data(), l.w.size()});
        views.push_back({l.def.name + ".b", l.b.data(), l.gb.data(), l.b.size()});
        if (l.def.bn) {
            views.push_back(
                {l.def.name + ".gamma", l.gamma.data(), l.ggamma.data(), l.gamma.size()});
            views.push_back(
                {l.def.name + ".beta", l.beta.data(), l.gbeta.data(), l.beta.size()});
        }
    }
    return views;
}

namespace {

// Forward one conv(+bn+relu) block, optionally caching what backward needs.
Tensor4 block_forward(Network::ConvLayer& l, const Tensor4& x, Mode mode,
                      Tensor4* cache_conv_out, BnCache<float>* cache_bn) {
    auto c = conv2d_forward(x, l.w, std::span<const float>(l.b), 1, 1);
    if (!l.def.bn) {
        if (cache_conv_out) *cache_conv_out = c;
        return c;
    }
    if (cache_conv_out) *cache_conv_out = c;
    auto n = batchnorm_forward(c, std::span<const float>(l.gamma),
                               std::span<const float>(l.beta), kBnEps, mode, l.stats,
                               cache_bn);
    return relu_forward(n);
}

}  // namespace

Tensor4 Network::run_branch(const Tensor4& enc_out, int section, Mode mode,
                            const std::vector<PoolIndices>& idx,
                            std::vector<BlockCache>* blocks) {
    Tensor4 x = enc_out;
    std::vector<size_t> order;
    for (size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].def.section == section) order.push_back(i);

    size_t block_at = 0;
    for (int s = kStages - 1; s >= 0; --s) {
        x = maxunpool2x2(x, idx[s], x.h * 2, x.w * 2);
        for (int c = 0; c < kStageConvs[s]; ++c, ++block_at) {
            ConvLayer& l = layers_[order[block_at]];
            if (blocks) {
                BlockCache bc;
                bc.input = x;
                x = block_forward(l, x, mode, &bc.conv_out, &bc.bn);
                bc.act = x;
                blocks->push_back(std::move(bc));
            } else {
                x = block_forward(l, x, mode, nullptr, nullptr);
            }
        }
    }
    return x;
}

Network::Output Network::run_forward(const Tensor4& input, Mode mode, TrainCache* cache) {
    if (input.c != spec_.in_channels || input.h != spec_.input_h ||
        input.w != spec_.input_w)
        throw DataError("network forward: input " + input.shape_str() +
                        " does not match spec (" + std::to_string(spec_.in_channels) +
                        " channels, " + std::to_string(spec_.input_h) + "x" +
                        std::to_string(spec_.input_w) + ")");

    if (cache) {
        cache->input = input;
        cache->enc_blocks.clear();
        cache->pool_idx.clear();
        cache->pool_out.clear();
        cache->comp_blocks.clear();
        cache->tip_blocks.clear();
    }

    // Shared encoder: runs once regardless of how many branches consume it.
    ++encoder_passes_;
    Tensor4 x = input;
    std::vector<PoolIndices> idx;
    size_t li = 0;
    for (int s = 0; s < kStages; ++s) {
        for (int c = 0; c < kStageConvs[s]; ++c, ++li) {
            ConvLayer& l = layers_[li];
            if (cache) {
                BlockCache bc;
                bc.input = x;
                x = block_forward(l, x, mode, &bc.conv_out, &bc.bn);
                bc.act = x;
                cache->enc_blocks.push_back(std::move(bc));
            } else {
                x = block_forward(l, x, mode, nullptr, nullptr);
            }
        }
        auto pooled = maxpool2x2_forward(x);
        x = std::move(pooled.output);
        idx.push_back(std::move(pooled.indices));
        if (cache) {
            cache->pool_idx.push_back(idx.back());
            cache->pool_out.push_back(x);
        }
    }

    Output out;
    out.comp_logits = run_branch(x, 1, mode, idx, cache ? &cache->comp_blocks : nullptr);
    out.tip_logits = run_branch(x, 2, mode, idx, cache ? &cache->tip_blocks : nullptr);
    return out;
}

Network::Output Network::forward_train(const Tensor4& input, TrainCache& cache) {
    return run_forward(input, Mode::train, &cache);
}

namespace {

// Backward through one cached block, accumulating parameter gradients.
Tensor4 block_backward(Network::ConvLayer& l, const Tensor4& input,
                       const Tensor4& conv_out, const BnCache<float>& bn,
                       const Tensor4& act, const Tensor4& grad_act) {
    Tensor4 gconv;
    if (l.def.bn) {
        auto grelu = relu_backward(act, grad_act);
        auto bg = batchnorm_backward(conv_out, std::span<const float>(l.gamma), bn, grelu);
        for (size_t i = 0; i < l.ggamma.size(); ++i) l.ggamma[i] += bg.gamma[i];
        for (size_t i = 0; i < l.gbeta.size(); ++i) l.gbeta[i] += bg.beta[i];
        gconv = std::move(bg.input);
    } else {
        gconv = grad_act;
    }
    auto cg = conv2d_backward(input, l.w, gconv, 1, 1);
    for (size_t i = 0; i < l.gw.v.size(); ++i) l.gw.v[i] += cg.weights.v[i];
    for (size_t i = 0; i < l.gb.size(); ++i) l.gb[i] += cg.bias[i];
    return std::move(cg.input);
}

}  // namespace

Tensor4 Network::branch_backward(int section, const std::vector<BlockCache>& blocks,
                                 const std::vector<PoolIndices>& idx,
                                 const Tensor4& grad_logits) {
    std::vector<size_t> order;
    for (size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].def.section == section) order.push_back(i);

    Tensor4 g = grad_logits;
    int block_at = int(blocks.size()) - 1;
    for (int s = 0; s < kStages; ++s) {
        for (int c = kStageConvs[s] - 1; c >= 0; --c, --block_at) {
            const BlockCache& bc = blocks[size_t(block_at)];
            ConvLayer& l = layers_[order[size_t(block_at)]];
            g = block_backward(l, bc.input, bc.conv_out, bc.bn, bc.act, g);
        }
        g = maxunpool2x2_backward(g, idx[size_t(s)]);
    }
    return g;
}

void Network::backward(const TrainCache& cache, const Tensor4* grad_comp_logits,
                       const Tensor4* grad_tip_logits) {
    if (cache.pool_idx.size() != size_t(kStages))
        throw DataError("network backward: cache was not produced by forward_train");

    // Each branch contributes an independent gradient at the encoder output
    // and the encoder is walked once per contribution. Walking it on the sum
    // would save a pass but costs exact additivity: every parameter gradient
    // here is the float sum of the per-branch values, bit for bit.
    auto encoder_walk = [&](Tensor4 g) {
        int block_at = int(cache.enc_blocks.size()) - 1;
        for (int s = kStages - 1; s >= 0; --s) {
            g = maxunpool2x2(g, cache.pool_idx[size_t(s)], g.h * 2, g.w * 2);
            for (int c = kStageConvs[s] - 1; c >= 0; --c, --block_at) {
                const BlockCache& bc = cache.enc_blocks[size_t(block_at)];
                ConvLayer& l = layers_[size_t(block_at)];
                g = block_backward(l, bc.input, bc.conv_out, bc.bn, bc.act, g);
            }
        }
    };
    if (grad_comp_logits)
        encoder_walk(branch_backward(1, cache.comp_blocks, cache.pool_idx, *grad_comp_logits));
    if (grad_tip_logits)
        encoder_walk(branch_backward(2, cache.tip_blocks, cache.pool_idx, *grad_tip_logits));
}

Network::Prediction Network::predict(const Tensor4& input) {
    Output out = forward(input);
    auto argmax = [](const Tensor4& logits) {
        ClassMap m(logits.n, logits.h, logits.w);
        const size_t plane = size_t(logits.h) * logits.w;
        for (int i = 0; i < logits.n; ++i)
            for (size_t q = 0; q < plane; ++q) {
                int best = 0;
                float bv = logits.v[(size_t(i) * logits.c) * plane + q];
                for (int c = 1; c < logits.c; ++c) {
                    float v = logits.v[(size_t(i) * logits.c + c) * plane + q];
                    if (v > bv) {
                        bv = v;
                        best = c;
                    }
                }
                m.v[size_t(i) * plane + q] = uint8_t(best);
            }
        return m;
    };
    return {argmax(out.comp_logits), argmax(out.tip_logits)};
}

}  // namespace mtseg
