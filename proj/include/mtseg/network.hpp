#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtseg/layers.hpp"
#include "mtseg/tensor.hpp"

// Two-headed encoder-decoder segmentation network. One VGG-style encoder
// (13 conv+bn+relu layers in 5 stages, 2x2 max pooling after each stage) is
// shared by two structurally identical decoder branches, "comp" for hand
// component labels and "tip" for fingertip labels. Decoders upsample with
// max-unpooling driven by the encoder's pooling indices; only the shapes of
// those indices tie the two halves together, so decoder stage s must end on
// the channel width the encoder had entering stage s.

namespace mtseg {

struct NetworkSpec {
    int input_h = 96;
    int input_w = 96;
    int in_channels = 1;
    int classes = 7;
    float width_multiplier = 1.0f;

    // Channel width of stage index s (0-based) after scaling.
    int stage_width(int s) const;
    static int stage_count();
    static int stage_convs(int s);

    void validate() const;
    bool operator==(const NetworkSpec&) const = default;
};

struct LayerDef {
    std::string name;  // enc1_1 .. enc5_3, comp5_1 .. comp1_2, tip5_1 .. tip1_2
    int in_ch = 0;
    int out_ch = 0;
    bool bn = true;  // final conv of each branch is a plain linear conv
    int section = 0;  // 0 encoder, 1 comp branch, 2 tip branch
};

// Single source of truth for the architecture; parameter counting, weight
// allocation and the checkpoint layout all walk this list.
std::vector<LayerDef> layer_defs(const NetworkSpec& spec);

struct ParamCount {
    int64_t encoder = 0;
    int64_t decoder_each = 0;
    int64_t total = 0;            // encoder + 2 * decoder_each
    int64_t two_single_task = 0;  // cost of two unshared single-task networks
    int64_t savings = 0;          // two_single_task - total
};

ParamCount count_params(const NetworkSpec& spec);

// Mutable view of one parameter array and its gradient accumulator.
struct ParamView {
    std::string name;
    float* p = nullptr;
    float* g = nullptr;
    size_t len = 0;
};

class Network {
public:
    Network(const NetworkSpec& spec, uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }

    struct Output {
        Tensor4 comp_logits;
        Tensor4 tip_logits;
    };

    // Inference forward (running batch-norm stats, nothing cached).
    Output forward(const Tensor4& input) { return run_forward(input, Mode::infer, nullptr); }

    struct TrainCache;
    Output forward_train(const Tensor4& input, TrainCache& cache);

    // Accumulates parameter gradients. Either branch gradient may be null.
    // Encoder gradients are accumulated per branch contribution, so the
    // multi-task gradient is exactly the sum of the single-branch gradients.
    void backward(const TrainCache& cache, const Tensor4* grad_comp_logits,
                  const Tensor4* grad_tip_logits);

    void zero_grads();

    // Stable ordering, same order as layer_defs.
    std::vector<ParamView> param_views();

    // Per-pixel argmax labels for both branches (softmax is monotone, so the
    // argmax of the logits is the argmax of the probabilities).
    struct Prediction {
        ClassMap comp;
        ClassMap tip;
    };
    Prediction predict(const Tensor4& input);

    // How many times the shared encoder has run; two-branch inference costs
    // one encoder pass, which is the point of sharing it.
    int64_t encoder_passes() const { return encoder_passes_; }

    struct ConvLayer {
        LayerDef def;
        Tensor4 w;  // (out_ch, in_ch, 3, 3)
        std::vector<float> b;
        std::vector<float> gamma, beta;
        BnStats<float> stats;
        // gradient accumulators
        Tensor4 gw;
        std::vector<float> gb, ggamma, gbeta;
    };

    std::vector<ConvLayer>& layers() { return layers_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }

private:
    struct BlockCache {
        Tensor4 input;
        Tensor4 conv_out;
        Tensor4 act;  // after relu (or conv_out when the layer is linear)
        BnCache<float> bn;
    };

public:
    struct TrainCache {
        Tensor4 input;
        std::vector<BlockCache> enc_blocks;      // 13
        std::vector<PoolIndices> pool_idx;       // 5
        std::vector<Tensor4> pool_out;           // 5
        std::vector<BlockCache> comp_blocks;     // 13
        std::vector<BlockCache> tip_blocks;      // 13
    };

private:
    Output run_forward(const Tensor4& input, Mode mode, TrainCache* cache);
    Tensor4 run_branch(const Tensor4& enc_out, int section, Mode mode,
                       const std::vector<PoolIndices>& idx,
                       std::vector<BlockCache>* blocks);
    // Returns the gradient w.r.t. the branch input (the encoder output).
    Tensor4 branch_backward(int section, const std::vector<BlockCache>& blocks,
                            const std::vector<PoolIndices>& idx, const Tensor4& grad_logits);

    NetworkSpec spec_;
    std::vector<ConvLayer> layers_;
    int64_t encoder_passes_ = 0;
};

}  // namespace mtseg
