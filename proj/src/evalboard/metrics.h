#pragma once

#include "core/types.h"
#include "pipeline/pipeline.h"

#include <json.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace trapkit::evalboard {

inline constexpr double kDefaultIouThreshold = 0.5;
// Slack on the IoU threshold and on IoU ties between candidate ground truths.
inline constexpr double kIouEpsilon = 1e-9;

struct GroundTruth {
    BBox bbox;
    DetectionCategory category;

    bool operator==(const GroundTruth&) const = default;
};

struct MatchResult {
    std::vector<int> pred_to_gt;  // input order; -1 for a false positive
    std::vector<int> gt_to_pred;  // -1 for a false negative
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

// Predictions in descending confidence (ties: input order) each claim the unmatched
// same-category ground truth of highest IoU, provided IoU >= threshold. IoUs within
// kIouEpsilon of each other are ties and go to the lower ground-truth index.
MatchResult match_detections(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                             double iou_threshold = kDefaultIouThreshold);

struct PrecisionRecall {
    double precision;  // 1.0 without predictions
    double recall;     // 1.0 without ground truth
};

PrecisionRecall precision_recall(std::size_t tp, std::size_t fp, std::size_t fn);
PrecisionRecall precision_recall(const MatchResult& match);

struct ImageEval {
    std::vector<Detection> preds;
    std::vector<GroundTruth> gts;
};

// All-point interpolated AP of one category over a set of images; predictions are
// ranked by confidence, then image index, then position. nullopt without ground truth.
std::optional<double> average_precision(const std::vector<ImageEval>& images, DetectionCategory category,
                                        double iou_threshold = kDefaultIouThreshold);

// Mean of AP over categories with ground truth; 0.0 when there is none.
double mean_average_precision(const std::vector<ImageEval>& images, double iou_threshold = kDefaultIouThreshold);

struct DetectionMetrics {
    double precision;
    double recall;
    double map_score;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

// Precision and recall count predictions with confidence >= conf_threshold; mAP
// ranks every prediction.
DetectionMetrics evaluate_detections(const std::vector<ImageEval>& images, double conf_threshold,
                                     double iou_threshold = kDefaultIouThreshold);

struct TriageItem {
    double score;  // highest class probability
    bool correct;
};

struct TriageMetrics {
    double coverage;                       // share of items with score >= threshold
    std::optional<double> accuracy_above;  // nullopt when no item qualifies
    std::size_t covered = 0;
    std::size_t correct_above = 0;
    std::size_t total = 0;
};

TriageMetrics triage_metrics(const std::vector<TriageItem>& items, double threshold);

// Items from pipeline results: the top class of each image's most confident classified
// detection against truths keyed by image path. Images without a classification or
// without a truth are skipped.
std::vector<TriageItem> triage_items(const std::vector<pipeline::PipelineResult>& results,
                                     const std::map<std::string, std::string>& truths);

nlohmann::ordered_json triage_to_json(const TriageMetrics& metrics, double threshold);

}  // namespace trapkit::evalboard
