#pragma once

#include <array>

#include "mtseg/tensor.hpp"

namespace mtseg {

// Fingertip center in pixel coordinates; present=false means the tip is
// occluded or clipped and no point exists.
struct TipPoint {
    float x = 0.0f;
    float y = 0.0f;
    bool present = false;
};

// One network-ready training example: normalized depth input plus the two
// per-pixel label maps (hand components and fingertips) and the ground-truth
// tip centers in input coordinates. Finger order is thumb to pinky.
struct TrainSample {
    Tensor4 input;  // (1, 1, h, w), values in [0,1], 0 = no depth
    ClassMap comp;  // (1, h, w), classes 0..6
    ClassMap tip;   // (1, h, w), classes 0..6
    std::array<TipPoint, 5> tips{};
};

}  // namespace mtseg
