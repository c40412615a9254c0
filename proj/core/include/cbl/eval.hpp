#pragma once

#include <string>
#include <vector>

#include "cbl/model.hpp"
#include "cbl/synth.hpp"

namespace cbl {

/// Which classification results feed the inference score x^inf.
///   basic:     average of the K OICs and the R-CNN CLS branch
///   average:   basic plus the teacher score, pooled uniformly
///   weighted:  two-step average, (basic + teacher) / 2  [default]
///   wet_only:  teacher score alone
///   wet_head:  weighted, with the teacher head reading student features
enum class ScoreSource { kBasic, kAverage, kWeighted, kWetOnly, kWetHead };

ScoreSource score_source_from_string(const std::string& s);
std::string to_string(ScoreSource s);

/// Weighted two-step ensemble:
/// x^inf = 1/2 * ( (sum_k oic_k + cls) / (K+1) + wet ).
Mat inference_scores(const std::vector<Mat>& oic_outputs, const Mat& cls_output,
                     const Mat& wet_output);

struct Detection {
    long scene_id = 0;
    int cls = 0;
    BBox box;
    double score = 0.0;
};

/// Per-class regression decode, score floor, and NMS. Decoded boxes are
/// clipped to the unit canvas; boxes degenerate after clipping are dropped.
std::vector<Detection> decode_and_detect(const Mat& x_inf, const Mat& reg_out,
                                         const std::vector<BBox>& proposals, long scene_id,
                                         double nms_thresh, double score_floor);

/// Mean top-1 localization accuracy of the MIDN scores at a strict IoU
/// threshold. Per existing class, the top-scoring proposal counts as a hit
/// iff its best overlap with that class's ground truth exceeds the threshold.
/// Classes absent from the corpus are excluded (and reported).
struct MaccResult {
    std::vector<double> per_class;  // NaN for excluded classes
    std::vector<long> occurrences;
    std::vector<int> excluded;
    double mean = 0.0;
};
MaccResult macc_at_1(const std::vector<Mat>& x_midn_per_scene,
                     const std::vector<const Scene*>& scenes, double iou_thresh);

/// Correct localization rate in percent over (scene, existing class) pairs;
/// expects exactly one top detection per pair.
double corloc(const std::vector<Detection>& top1, const std::vector<const Scene*>& scenes);

/// Per-class average precision with greedy matching (each ground-truth box
/// matched at most once, IoU must exceed iou_thresh) and all-point
/// interpolation of the precision-recall curve.
struct ApResult {
    std::vector<double> per_class;  // NaN for classes with no ground truth
    std::vector<int> excluded;
    double map = 0.0;
};
ApResult average_precision(const std::vector<Detection>& detections,
                           const std::vector<const Scene*>& scenes, int num_classes,
                           double iou_thresh);

struct EvalOptions {
    ScoreSource source = ScoreSource::kWeighted;
    double nms_thresh = 0.3;
    double score_floor = 1e-3;
    double iou_thresh = 0.5;    // detection true-positive overlap
};

struct EvalReport {
    ApResult ap;             // test split
    double corloc = 0.0;     // train split, percent
    MaccResult macc75;       // train split, IoU 0.75
    MaccResult macc85;       // train split, IoU 0.85
    long train_scenes = 0;
    long test_scenes = 0;
};

/// Full evaluation pass: mAP on the test split, CorLoc and mAcc@1 diagnostics
/// on the train split. `teacher` may be null only for teacher-free sources.
EvalReport evaluate(const ModelParams& model, const WetParams* teacher,
                    const std::vector<Scene>& dataset, const EvalOptions& opts);

/// Metrics as comma-separated text and a JSON summary.
void write_metrics_csv(const EvalReport& report, const std::string& path);
void write_metrics_json(const EvalReport& report, const EvalOptions& opts,
                        const std::string& path);

}  // namespace cbl
