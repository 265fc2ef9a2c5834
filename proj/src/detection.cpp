#include "mtseg/detection.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "mtseg/blob.hpp"
#include "mtseg/io_util.hpp"

namespace mtseg {

std::map<std::string, DetectionRecord> load_detections(const std::filesystem::path& path) {
    const std::string text = io::read_text_file(path);
    std::map<std::string, DetectionRecord> out;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = io::split_ws(line);
        if (fields.empty()) continue;
        const auto fail = [&](const std::string& why) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        if (fields.size() != 6) fail("expected `frame_id x y x' y' conf`");

        Detection d;
        try {
            d.box.x0 = int(io::parse_int(fields[1], "x"));
            d.box.y0 = int(io::parse_int(fields[2], "y"));
            d.box.x1 = int(io::parse_int(fields[3], "x'"));
            d.box.y1 = int(io::parse_int(fields[4], "y'"));
            d.confidence = float(io::parse_double(fields[5], "confidence"));
        } catch (const DataError& e) {
            fail(e.what());
        }
        if (d.box.x0 < 0 || d.box.y0 < 0) fail("negative box corner");
        if (d.box.x1 < d.box.x0) fail("box has x' < x");
        if (d.box.y1 < d.box.y0) fail("box has y' < y");
        if (!(d.confidence >= 0.0f && d.confidence <= 1.0f))
            fail("confidence outside [0,1]");

        auto& rec = out[fields[0]];
        rec.frame_id = fields[0];
        rec.detections.push_back(d);
    }
    return out;
}

void save_detections(const std::filesystem::path& path,
                     const std::map<std::string, DetectionRecord>& records) {
    std::string out;
    for (const auto& [id, rec] : records)
        for (const auto& d : rec.detections)
            out += id + " " + std::to_string(d.box.x0) + " " + std::to_string(d.box.y0) +
                   " " + std::to_string(d.box.x1) + " " + std::to_string(d.box.y1) + " " +
                   io::format_float(double(d.confidence)) + "\n";
    io::write_file_atomic(path, out);
}

std::vector<BBox> propose_regions(const RgbdFrame& frame, int64_t min_area, int depth_band) {
    if (frame.width < 1 || frame.height < 1) throw DataError("empty frame");
    uint16_t nearest = std::numeric_limits<uint16_t>::max();
    for (uint16_t d : frame.depth)
        if (d != 0) nearest = std::min(nearest, d);
    if (nearest == std::numeric_limits<uint16_t>::max())
        throw DataError("frame has no valid depth pixels");

    std::vector<uint8_t> mask(frame.depth.size(), 0);
    for (size_t i = 0; i < frame.depth.size(); ++i) {
        const uint16_t d = frame.depth[i];
        mask[i] = d != 0 && int(d) - int(nearest) < depth_band;
    }

    std::vector<int32_t> labels;
    const auto blobs = find_blobs(mask.data(), frame.width, frame.height, &labels);
    std::vector<uint16_t> blob_min(blobs.size(), std::numeric_limits<uint16_t>::max());
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0)
            blob_min[size_t(labels[i])] = std::min(blob_min[size_t(labels[i])], frame.depth[i]);

    struct Candidate {
        BBox box;
        uint16_t min_depth;
    };
    std::vector<Candidate> candidates;
    for (size_t bi = 0; bi < blobs.size(); ++bi) {
        const Blob& b = blobs[bi];
        if (b.area < min_area) continue;
        candidates.push_back({BBox{b.min_x, b.min_y, b.max_x, b.max_y}, blob_min[bi]});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) {
                         return a.min_depth < b.min_depth;
                     });

    std::vector<BBox> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(c.box);
    return out;
}

}  // namespace mtseg
