#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mtseg/adam.hpp"
#include "mtseg/checkpoint.hpp"
#include "mtseg/network.hpp"
#include "mtseg/sample.hpp"

namespace mtseg {

struct TrainConfig {
    int batch_size = 8;
    float lr_start = 1e-3f;
    float lr_min = 1e-5f;
    float lr_decay = 0.5f;
    AdamConfig adam;  // adam.lr is ignored; the schedule drives the rate
    int epochs = 120;
    int64_t max_steps = 0;  // 0 means no step cap
    uint64_t seed = 1;
    bool augment = true;
    int smooth_window = 20;    // steps averaged for the plateau test
    int plateau_windows = 5;   // stale windows before the rate is halved
    int64_t window_steps = 0;  // plateau test cadence; 0 means once per epoch
    double min_improvement = 1e-3;
    std::filesystem::path out_dir;  // empty disables csv/checkpoint output
    int checkpoint_every_epochs = 0;

    void validate() const;
};

struct StepRecord {
    int64_t step = 0;
    float lr = 0;
    float loss_comp = 0;
    float loss_tip = 0;
    float loss_total = 0;
};

struct TrainResult {
    std::vector<StepRecord> history;
    bool diverged = false;
    int64_t steps_run = 0;
    std::string message;
    std::filesystem::path checkpoint_path;
};

struct TrainCallbacks {
    std::function<void(const StepRecord&)> on_step;
    std::function<void(int epoch, double mean_loss, float lr)> on_epoch;
    // Maps a sample to its augmented variant using the given stream key.
    // Unset (or cfg.augment=false) trains on the raw samples.
    std::function<TrainSample(const TrainSample&, uint64_t key)> augment;
};

// Optimizer and schedule state needed to continue a run bit-identically.
struct ResumeState {
    AdamState adam;
    TrainMeta meta;
};

TrainResult train_loop(Network& net, const std::vector<TrainSample>& dataset,
                       const TrainConfig& cfg, const TrainCallbacks& callbacks = {},
                       const ResumeState* resume = nullptr);

std::string loss_csv_header();
std::string loss_csv_row(const StepRecord& r);

}  // namespace mtseg
