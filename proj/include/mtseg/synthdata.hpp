#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtseg/pgm.hpp"
#include "mtseg/preprocess.hpp"
#include "mtseg/rng.hpp"
#include "mtseg/sample.hpp"

// Procedural labeled hand scenes: a palm ellipse with five finger capsules
// fanning out of it, rendered into a depth frame over an empty (invalid, 0)
// background, with exact-by-construction label maps. Component classes are
// {0 background, 1 palm, 2..6 fingers thumb..pinky}; fingertip classes are
// {0 background, 1 hand, 2..6 fingertips thumb..pinky}.

namespace mtseg {

struct FingerGeom {
    float angle_deg = 0;    // global direction from the palm center
    float length = 24;      // capsule length beyond the palm boundary
    float width = 3;        // capsule diameter; the tip disk radius equals this
    float depth_offset = 0; // millimeters relative to the palm depth
};

struct Occluder {
    bool enabled = false;
    int finger = 1;          // 0..4, whose tip gets covered
    float radius_factor = 2.5f;  // occluder radius = factor * tip radius
    float dx = 0, dy = 0;    // offset from the tip center, kept under the tip radius
    float depth_delta = 100; // millimeters nearer than the palm
};

struct HandPose {
    float cx = 80, cy = 80;
    float rx = 17, ry = 21;
    float orient_deg = 0;  // palm/fan orientation
    std::array<FingerGeom, 5> fingers;
    uint16_t base_depth = 750;
    float noise_sigma = 0;
    Occluder occluder;
};

struct LabelPair {
    Image8 components;
    Image8 fingertips;
    std::array<TipPoint, 5> tip_points;
};

struct Scene {
    RgbdFrame frame;
    LabelPair labels;
};

// Fixed, zero-noise, unoccluded pose used by geometry oracles.
HandPose canonical_pose();

// Desk-scale pose distribution; occluder enabled with probability
// occlude_prob over a uniformly chosen finger.
HandPose sample_pose(Rng& rng, float occlude_prob = 0.0f);

// Deterministic rasterization; seed drives only the depth noise.
// Labels are exact by construction and independent of the noise.
Scene render(const HandPose& pose, int size, uint64_t seed);

struct ManifestRow {
    std::string id;
    std::string depth_path, comp_path, tip_path;  // relative to the manifest
    std::array<TipPoint, 5> tips;
};

struct DatasetSummary {
    std::filesystem::path dir;
    std::vector<std::string> train_ids, test_ids;
    std::filesystem::path train_manifest, test_manifest;
};

// Renders `count` seeded scenes into dir and splits them train/test by a
// seeded hash of the scene index (split_ratio = train fraction). Files are
// 16-bit PGM depth plus 8-bit PGM label maps; regeneration with the same
// arguments is byte-identical.
DatasetSummary make_dataset(const std::filesystem::path& dir, int count, uint64_t seed,
                            double split_ratio = 0.7, int size = 160,
                            float occlude_prob = 0.2f);

std::vector<ManifestRow> load_manifest(const std::filesystem::path& manifest);

// Reads every manifest row and builds network-ready samples: bounding box of
// the valid depth pixels (padded by 2), mode-band thresholding, joint resize.
std::vector<TrainSample> load_samples(const std::filesystem::path& manifest,
                                      const ThresholdParams& params = {}, int out_h = 96,
                                      int out_w = 96);

// The same construction for one already-rendered scene.
TrainSample scene_to_sample(const Scene& scene, const ThresholdParams& params = {},
                            int out_h = 96, int out_w = 96);

}  // namespace mtseg
