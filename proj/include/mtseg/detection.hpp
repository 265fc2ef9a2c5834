#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mtseg/preprocess.hpp"

namespace mtseg {

struct Detection {
    BBox box;
    float confidence = 0.0f;
};

struct DetectionRecord {
    std::string frame_id;
    std::vector<Detection> detections;
};

// Text format, one detection per line: `frame_id x y x' y' conf` with
// inclusive integer corners and confidence in [0,1]. Malformed rows are
// rejected with their line number. Box bounds against a concrete frame are
// the caller's check (the file does not know frame dimensions).
std::map<std::string, DetectionRecord> load_detections(const std::filesystem::path& path);

void save_detections(const std::filesystem::path& path,
                     const std::map<std::string, DetectionRecord>& records);

// Fallback proposer: 8-connected components of valid pixels lying within
// depth_band of the globally nearest depth, tight boxes, area >= min_area,
// nearest component first. Throws DataError when the frame has no depth.
std::vector<BBox> propose_regions(const RgbdFrame& frame, int64_t min_area = 64,
                                  int depth_band = 300);

}  // namespace mtseg
