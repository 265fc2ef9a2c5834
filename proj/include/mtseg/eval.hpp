#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "mtseg/sample.hpp"
#include "mtseg/tensor.hpp"

// Evaluation quantities for the two-branch segmentation: fingertip centers
// extracted from masks, distance errors and precision-vs-threshold curves,
// and per-frame segmentation error curves, all emitted as CSV reports.

namespace mtseg {

// Per fingertip class c in {2..6}: take the argmax-class mask, find its
// largest 8-connected component, and return the component centroid when it
// has at least min_blob pixels; otherwise the tip is absent. The tensor
// form expects one sample with 7 channels and argmaxes per pixel first.
std::array<TipPoint, 5> extract_tip_centers(const Tensor4& probmap, int min_blob = 3);
std::array<TipPoint, 5> extract_tip_centers(const ClassMap& pred, int min_blob = 3);

// Distances for one image. counted[i] marks fingers whose truth exists;
// a missing prediction against present truth scores +infinity so it fails
// every threshold.
struct TipErrors {
    std::array<double, 5> e{};
    std::array<bool, 5> counted{};
};

TipErrors fingertip_error(const std::array<TipPoint, 5>& pred,
                          const std::array<TipPoint, 5>& truth, double unit_scale = 1.0);

// Detection precision P(t) = #{e_i < t}: raw count plus the normalized P/N
// the figures plot, with a per-finger breakdown when built from TipErrors.
struct PrecisionCurve {
    std::vector<double> thresholds;
    std::vector<int64_t> raw;
    std::vector<double> normalized;
    std::array<std::vector<double>, 5> per_finger;
    int64_t n = 0;
    std::array<int64_t, 5> n_finger{};
};

PrecisionCurve precision_curve(const std::vector<double>& errors,
                               const std::vector<double>& thresholds);
PrecisionCurve precision_curve(const std::vector<TipErrors>& errors,
                               const std::vector<double>& thresholds);

// Fraction of this frame's non-background-truth pixels that are
// misclassified; frames without foreground truth count as error 0.
double seg_frame_error(const ClassMap& pred, const ClassMap& truth);

struct SegErrorCurve {
    std::vector<double> thresholds;
    std::vector<double> fraction;  // of frames with error <= threshold
};

SegErrorCurve seg_error_curve(const std::vector<ClassMap>& pred,
                              const std::vector<ClassMap>& truth,
                              const std::vector<double>& thresholds);

struct EvalReport {
    PrecisionCurve precision;
    SegErrorCurve comp_seg;
    SegErrorCurve tip_seg;
};

struct ReportPaths {
    std::filesystem::path precision_csv;
    std::filesystem::path comp_seg_csv;
    std::filesystem::path tip_seg_csv;
    std::filesystem::path summary;
};

// Writes precision.csv (`threshold,overall,thumb,index,middle,ring,pinky`),
// seg_components.csv and seg_fingertips.csv (`threshold,fraction`), and
// summary.txt with the thumb precision at threshold 1.0. Inputs are
// validated before anything is written; writes are atomic.
ReportPaths emit_report(const EvalReport& report, const std::filesystem::path& dir);

// Exact inverses of the emitted CSVs (comment and header lines skipped).
PrecisionCurve read_precision_csv(const std::filesystem::path& path);
SegErrorCurve read_seg_csv(const std::filesystem::path& path);

}  // namespace mtseg
