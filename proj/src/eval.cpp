#include "mtseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtseg/blob.hpp"
#include "mtseg/io_util.hpp"

namespace mtseg {

namespace {

void check_thresholds(const std::vector<double>& ts) {
    if (ts.empty()) throw DataError("empty threshold list");
    for (size_t i = 1; i < ts.size(); ++i)
        if (!(ts[i] > ts[i - 1])) throw DataError("thresholds must be strictly ascending");
}

std::vector<std::string> csv_rows(const std::string& text) {
    std::vector<std::string> rows;
    size_t start = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.empty() || line[0] == '#') continue;
        rows.push_back(std::move(line));
    }
    return rows;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    for (;;) {
        const size_t comma = line.find(',', start);
        fields.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return fields;
}

}  // namespace

std::array<TipPoint, 5> extract_tip_centers(const ClassMap& pred, int min_blob) {
    if (pred.n != 1) throw DataError("extract_tip_centers expects a single frame");
    if (min_blob < 1) throw DataError("min_blob must be at least 1");
    std::array<TipPoint, 5> out{};
    std::vector<uint8_t> mask(pred.size());
    for (int cls = 2; cls <= 6; ++cls) {
        for (size_t i = 0; i < mask.size(); ++i) mask[i] = pred.v[i] == uint8_t(cls);
        const auto blobs = find_blobs(mask.data(), pred.w, pred.h);
        const Blob* best = nullptr;
        for (const auto& b : blobs)
            if (!best || b.area > best->area) best = &b;
        if (!best || best->area < min_blob) continue;
        out[size_t(cls - 2)] = {float(best->centroid_x()), float(best->centroid_y()), true};
    }
    return out;
}

std::array<TipPoint, 5> extract_tip_centers(const Tensor4& probmap, int min_blob) {
    if (probmap.n != 1 || probmap.c != 7)
        throw DataError("extract_tip_centers expects shape (1,7,h,w), got " +
                        probmap.shape_str());
    ClassMap pred(1, probmap.h, probmap.w);
    for (int y = 0; y < probmap.h; ++y)
        for (int x = 0; x < probmap.w; ++x) {
            int best = 0;
            float best_v = probmap.at(0, 0, y, x);
            for (int c = 1; c < 7; ++c)
                if (probmap.at(0, c, y, x) > best_v) {
                    best_v = probmap.at(0, c, y, x);
                    best = c;
                }
            pred.at(0, y, x) = uint8_t(best);
        }
    return extract_tip_centers(pred, min_blob);
}

TipErrors fingertip_error(const std::array<TipPoint, 5>& pred,
                          const std::array<TipPoint, 5>& truth, double unit_scale) {
    if (!(unit_scale > 0)) throw DataError("unit_scale must be positive");
    TipErrors out;
    for (size_t i = 0; i < 5; ++i) {
        if (!truth[i].present) continue;
        out.counted[i] = true;
        if (!pred[i].present) {
            out.e[i] = std::numeric_limits<double>::infinity();
            continue;
        }
        const double dx = double(pred[i].x) - double(truth[i].x);
        const double dy = double(pred[i].y) - double(truth[i].y);
        out.e[i] = std::sqrt(dx * dx + dy * dy) * unit_scale;
    }
    return out;
}

PrecisionCurve precision_curve(const std::vector<double>& errors,
                               const std::vector<double>& thresholds) {
    check_thresholds(thresholds);
    if (errors.empty()) throw DataError("empty error set");
    PrecisionCurve curve;
    curve.thresholds = thresholds;
    curve.n = int64_t(errors.size());
    for (const double t : thresholds) {
        int64_t hits = 0;
        for (const double e : errors)
            if (e < t) ++hits;
        curve.raw.push_back(hits);
        curve.normalized.push_back(double(hits) / double(curve.n));
    }
    return curve;
}

PrecisionCurve precision_curve(const std::vector<TipErrors>& errors,
                               const std::vector<double>& thresholds) {
    check_thresholds(thresholds);
    PrecisionCurve curve;
    curve.thresholds = thresholds;
    for (const auto& img : errors)
        for (size_t f = 0; f < 5; ++f)
            if (img.counted[f]) {
                ++curve.n;
                ++curve.n_finger[f];
            }
    if (curve.n == 0) throw DataError("empty error set");

    for (const double t : thresholds) {
        int64_t hits = 0;
        std::array<int64_t, 5> finger_hits{};
        for (const auto& img : errors)
            for (size_t f = 0; f < 5; ++f)
                if (img.counted[f] && img.e[f] < t) {
                    ++hits;
                    ++finger_hits[f];
                }
        curve.raw.push_back(hits);
        curve.normalized.push_back(double(hits) / double(curve.n));
        for (size_t f = 0; f < 5; ++f)
            curve.per_finger[f].push_back(
                curve.n_finger[f] == 0 ? 0.0 : double(finger_hits[f]) / double(curve.n_finger[f]));
    }
    return curve;
}

double seg_frame_error(const ClassMap& pred, const ClassMap& truth) {
    if (pred.n != truth.n || pred.h != truth.h || pred.w != truth.w)
        throw DataError("seg_frame_error: prediction and truth shapes differ");
    int64_t foreground = 0, wrong = 0;
    for (size_t i = 0; i < truth.v.size(); ++i) {
        if (truth.v[i] == 0) continue;
        ++foreground;
        wrong += pred.v[i] != truth.v[i];
    }
    return foreground == 0 ? 0.0 : double(wrong) / double(foreground);
}

SegErrorCurve seg_error_curve(const std::vector<ClassMap>& pred,
                              const std::vector<ClassMap>& truth,
                              const std::vector<double>& thresholds) {
    check_thresholds(thresholds);
    if (pred.size() != truth.size())
        throw DataError("seg_error_curve: prediction and truth counts differ");
    if (pred.empty()) throw DataError("empty frame set");

    std::vector<double> errors;
    errors.reserve(pred.size());
    for (size_t i = 0; i < pred.size(); ++i)
        errors.push_back(seg_frame_error(pred[i], truth[i]));

    SegErrorCurve curve;
    curve.thresholds = thresholds;
    for (const double t : thresholds) {
        int64_t below = 0;
        for (const double e : errors)
            if (e <= t) ++below;
        curve.fraction.push_back(double(below) / double(errors.size()));
    }
    return curve;
}

namespace {

void check_curves(const EvalReport& r) {
    const size_t pn = r.precision.thresholds.size();
    if (pn == 0 || r.precision.normalized.size() != pn || r.precision.raw.size() != pn)
        throw DataError("emit_report: malformed precision curve");
    for (const auto& pf : r.precision.per_finger)
        if (pf.size() != pn)
            throw DataError("emit_report: precision curve lacks the per-finger breakdown");
    for (const auto* seg : {&r.comp_seg, &r.tip_seg}) {
        if (seg->thresholds.empty() || seg->fraction.size() != seg->thresholds.size())
            throw DataError("emit_report: malformed segmentation curve");
    }
}

std::string seg_csv(const SegErrorCurve& curve) {
    std::string out =
        "# frame error = misclassified / non-background truth pixels;"
        " fraction = frames with error <= threshold\n"
        "threshold,fraction\n";
    for (size_t i = 0; i < curve.thresholds.size(); ++i)
        out += io::format_float(curve.thresholds[i]) + "," +
               io::format_float(curve.fraction[i]) + "\n";
    return out;
}

}  // namespace

ReportPaths emit_report(const EvalReport& report, const std::filesystem::path& dir) {
    check_curves(report);
    std::filesystem::create_directories(dir);

    std::string prec = "threshold,overall,thumb,index,middle,ring,pinky\n";
    for (size_t i = 0; i < report.precision.thresholds.size(); ++i) {
        prec += io::format_float(report.precision.thresholds[i]) + "," +
                io::format_float(report.precision.normalized[i]);
        for (const auto& pf : report.precision.per_finger)
            prec += "," + io::format_float(pf[i]);
        prec += "\n";
    }

    std::string summary;
    summary += "fingers_evaluated " + std::to_string(report.precision.n) + "\n";
    size_t at = report.precision.thresholds.size();
    for (size_t i = 0; i < report.precision.thresholds.size(); ++i)
        if (report.precision.thresholds[i] == 1.0) at = i;
    if (at < report.precision.thresholds.size()) {
        summary += "thumb_precision_at_1.0 " +
                   io::format_float(report.precision.per_finger[0][at]) +
                   " (reference pipelines: 0.83 vs 0.76 and 0.81)\n";
    } else {
        summary += "thumb_precision_at_1.0 n/a (threshold 1.0 not evaluated)\n";
    }
    summary +=
        "segmentation frame error = misclassified / non-background truth pixels\n";

    ReportPaths paths;
    paths.precision_csv = dir / "precision.csv";
    paths.comp_seg_csv = dir / "seg_components.csv";
    paths.tip_seg_csv = dir / "seg_fingertips.csv";
    paths.summary = dir / "summary.txt";
    io::write_file_atomic(paths.precision_csv, prec);
    io::write_file_atomic(paths.comp_seg_csv, seg_csv(report.comp_seg));
    io::write_file_atomic(paths.tip_seg_csv, seg_csv(report.tip_seg));
    io::write_file_atomic(paths.summary, summary);
    return paths;
}

PrecisionCurve read_precision_csv(const std::filesystem::path& path) {
    const auto rows = csv_rows(io::read_text_file(path));
    if (rows.empty() || rows[0] != "threshold,overall,thumb,index,middle,ring,pinky")
        throw DataError(path.string() + ": not a precision CSV");
    PrecisionCurve curve;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto fields = split_csv(rows[r]);
        if (fields.size() != 7)
            throw DataError(path.string() + ": bad precision row `" + rows[r] + "`");
        curve.thresholds.push_back(io::parse_double(fields[0], "threshold"));
        curve.normalized.push_back(io::parse_double(fields[1], "overall"));
        for (size_t f = 0; f < 5; ++f)
            curve.per_finger[f].push_back(io::parse_double(fields[2 + f], "per-finger value"));
    }
    return curve;
}

SegErrorCurve read_seg_csv(const std::filesystem::path& path) {
    const auto rows = csv_rows(io::read_text_file(path));
    if (rows.empty() || rows[0] != "threshold,fraction")
        throw DataError(path.string() + ": not a segmentation CSV");
    SegErrorCurve curve;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto fields = split_csv(rows[r]);
        if (fields.size() != 2)
            throw DataError(path.string() + ": bad segmentation row `" + rows[r] + "`");
        curve.thresholds.push_back(io::parse_double(fields[0], "threshold"));
        curve.fraction.push_back(io::parse_double(fields[1], "fraction"));
    }
    return curve;
}

}  // namespace mtseg
