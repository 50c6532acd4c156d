#include "evalboard/metrics.h"

#include "core/error.h"
#include "core/geometry.h"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace trapkit::evalboard {

namespace {

std::vector<std::size_t> confidence_order(const std::vector<Detection>& preds) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].confidence() > preds[b].confidence(); });
    return order;
}

void check_threshold(double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("IoU threshold {} outside (0, 1]", iou_threshold));
    }
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                             double iou_threshold) {
    check_threshold(iou_threshold);
    MatchResult m;
    m.pred_to_gt.assign(preds.size(), -1);
    m.gt_to_pred.assign(gts.size(), -1);
    for (std::size_t p : confidence_order(preds)) {
        int best = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (m.gt_to_pred[g] != -1 || gts[g].category != preds[p].category()) {
                continue;
            }
            const double v = iou(preds[p].bbox(), gts[g].bbox);
            if (v < iou_threshold - kIouEpsilon) {
                continue;
            }
            if (best == -1 || v > best_iou + kIouEpsilon) {
                best = static_cast<int>(g);
                best_iou = v;
            }
        }
        if (best != -1) {
            m.pred_to_gt[p] = best;
            m.gt_to_pred[best] = static_cast<int>(p);
            ++m.tp;
        } else {
            ++m.fp;
        }
    }
    m.fn = gts.size() - m.tp;
    return m;
}

PrecisionRecall precision_recall(std::size_t tp, std::size_t fp, std::size_t fn) {
    return {tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp),
            tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn)};
}

PrecisionRecall precision_recall(const MatchResult& match) {
    return precision_recall(match.tp, match.fp, match.fn);
}

std::optional<double> average_precision(const std::vector<ImageEval>& images, DetectionCategory category,
                                        double iou_threshold) {
    struct Ranked {
        double confidence;
        std::size_t image;
        std::size_t index;
        bool tp;
    };
    std::vector<Ranked> ranked;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto match = match_detections(images[i].preds, images[i].gts, iou_threshold);
        for (const auto& g : images[i].gts) {
            positives += g.category == category;
        }
        for (std::size_t p = 0; p < images[i].preds.size(); ++p) {
            if (images[i].preds[p].category() == category) {
                ranked.push_back({images[i].preds[p].confidence(), i, p, match.pred_to_gt[p] != -1});
            }
        }
    }
    if (positives == 0) {
        return std::nullopt;
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.confidence != b.confidence) {
            return a.confidence > b.confidence;
        }
        return a.image != b.image ? a.image < b.image : a.index < b.index;
    });
    // Precision after each rank, then its running maximum from the right.
    std::vector<double> envelope(ranked.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        tp += ranked[k].tp;
        envelope[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    for (std::size_t k = ranked.size(); k-- > 1;) {
        envelope[k - 1] = std::max(envelope[k - 1], envelope[k]);
    }
    // Recall rises by 1/positives at each true positive.
    double sum = 0.0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        if (ranked[k].tp) {
            sum += envelope[k];
        }
    }
    return sum / static_cast<double>(positives);
}

double mean_average_precision(const std::vector<ImageEval>& images, double iou_threshold) {
    double sum = 0.0;
    std::size_t n = 0;
    for (auto category : kAllCategories) {
        if (const auto ap = average_precision(images, category, iou_threshold)) {
            sum += *ap;
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

DetectionMetrics evaluate_detections(const std::vector<ImageEval>& images, double conf_threshold,
                                     double iou_threshold) {
    if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("confidence threshold {} outside [0, 1]", conf_threshold));
    }
    DetectionMetrics out{};
    for (const auto& image : images) {
        std::vector<Detection> kept;
        for (const auto& d : image.preds) {
            if (d.confidence() >= conf_threshold) {
                kept.push_back(d);
            }
        }
        const auto m = match_detections(kept, image.gts, iou_threshold);
        out.tp += m.tp;
        out.fp += m.fp;
        out.fn += m.fn;
    }
    const auto pr = precision_recall(out.tp, out.fp, out.fn);
    out.precision = pr.precision;
    out.recall = pr.recall;
    out.map_score = mean_average_precision(images, iou_threshold);
    return out;
}

TriageMetrics triage_metrics(const std::vector<TriageItem>& items, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("triage threshold {} outside [0, 1]", threshold));
    }
    TriageMetrics m{};
    m.total = items.size();
    for (const auto& item : items) {
        if (item.score >= threshold) {
            ++m.covered;
            m.correct_above += item.correct;
        }
    }
    m.coverage = m.total == 0 ? 0.0 : static_cast<double>(m.covered) / static_cast<double>(m.total);
    if (m.covered > 0) {
        m.accuracy_above = static_cast<double>(m.correct_above) / static_cast<double>(m.covered);
    }
    return m;
}

std::vector<TriageItem> triage_items(const std::vector<pipeline::PipelineResult>& results,
                                     const std::map<std::string, std::string>& truths) {
    std::vector<TriageItem> items;
    for (const auto& r : results) {
        const pipeline::ScoredDetection* best = nullptr;
        for (const auto& d : r.detections) {
            if (d.scores && (!best || d.detection.confidence() > best->detection.confidence())) {
                best = &d;
            }
        }
        const auto truth = truths.find(r.image.path);
        if (best && truth != truths.end()) {
            const auto top = best->scores->top();
            items.push_back({top.probability, top.label == truth->second});
        }
    }
    return items;
}

nlohmann::ordered_json triage_to_json(const TriageMetrics& m, double threshold) {
    nlohmann::ordered_json doc;
    doc["threshold"] = threshold;
    doc["total"] = m.total;
    doc["covered"] = m.covered;
    doc["coverage"] = m.coverage;
    doc["accuracy_above"] = m.accuracy_above ? nlohmann::ordered_json(*m.accuracy_above) : nlohmann::ordered_json();
    doc["review_count"] = m.total - m.covered;
    return doc;
}

}  // namespace trapkit::evalboard
