#pragma once

#include <cstdint>
#include <vector>

#include "mtseg/network.hpp"

namespace mtseg {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// First and second moment buffers, one pair per parameter group.
struct AdamState {
    uint64_t t = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;

    static AdamState init_for(const std::vector<ParamView>& views);
};

// One optimizer step over all groups. Throws NumericalError if any gradient
// is non-finite, naming the offending group.
void adam_step(std::vector<ParamView>& views, AdamState& state, const AdamConfig& cfg);

}  // namespace mtseg
