#pragma once

#include <filesystem>

#include "mtseg/adam.hpp"
#include "mtseg/network.hpp"

// Binary checkpoint: magic + version, the NetworkSpec, training metadata
// (including the lr-schedule state so a resumed run continues the exact
// trajectory), named little-endian f32 parameter blobs, and optionally the
// Adam moment buffers. Save/load round-trips bit-exactly.

namespace mtseg {

struct TrainMeta {
    uint64_t iteration = 0;
    uint64_t seed = 0;
    float lr = 0.0f;
    double best_smoothed = 0.0;
    uint32_t bad_windows = 0;
    std::vector<float> loss_tail;  // recent step losses, oldest first
};

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const TrainMeta& meta, const AdamState* adam = nullptr);

struct LoadedCheckpoint {
    Network net;
    TrainMeta meta;
    bool has_adam = false;
    AdamState adam;
};

// Throws DataError on bad magic, unsupported version, truncation, or any
// mismatch between the stored spec and the stored blobs.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mtseg
