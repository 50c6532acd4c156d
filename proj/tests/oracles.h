#pragma once

// Reference implementations that share no code with the library under test.

#include "core/types.h"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace trapkit::oracle {

// Exact fraction with a positive denominator.
struct Frac {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Frac of(std::int64_t n, std::int64_t d);
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
};
Frac operator+(Frac a, Frac b);
Frac operator/(Frac a, std::int64_t d);
bool operator<(Frac a, Frac b);
bool operator==(Frac a, Frac b);

// Box on an integer lattice; the library sees it divided by `grid`.
struct LatticeBox {
    int x, y, w, h;
    Frac iou(const LatticeBox& other) const;
    BBox to_bbox(int grid) const;
};

// Among all partial injections pred -> gt, the one whose sequence of choices, read in
// `order`, is lexicographically best under `preference` (preference[p][g] > 0 when the
// pair may match; larger is better; unmatched scores 0). Returns gt per pred or -1.
std::vector<int> best_assignment(const std::vector<std::vector<int>>& preference,
                                 const std::vector<std::size_t>& order, std::size_t gt_count);

struct RefPred {
    BBox bbox;
    DetectionCategory category;
    double confidence;
};

struct RefGt {
    BBox bbox;
    DetectionCategory category;
};

struct RefImage {
    std::vector<RefPred> preds;
    std::vector<RefGt> gts;
};

struct RefMetrics {
    double precision;
    double recall;
    double map;
    std::size_t tp, fp, fn;
};

// Protocol: IoU >= threshold - 1e-9 qualifies; IoUs within 1e-9 tie and go to the lower
// gt index; predictions rank by confidence, then image, then position. AP is the sum of
// interpolated precision at each true positive, divided by the positives; mAP averages
// categories with ground truth (0 without any). P/R use predictions >= conf_threshold.
RefMetrics reference_metrics(const std::vector<RefImage>& images, double conf_threshold,
                             double iou_threshold = 0.5);

// The same protocol on lattice boxes with exact IoU; AP and mAP returned exactly.
struct LatticePred {
    LatticeBox box;
    DetectionCategory category;
};
struct LatticeGt {
    LatticeBox box;
    DetectionCategory category;
};
struct ExactMetrics {
    Frac precision;
    Frac recall;
    Frac map;
    double map_recipe;  // floating value following the AP recipe operation by operation
};
// Predictions are given in strictly descending confidence order.
ExactMetrics exact_metrics(const std::vector<LatticePred>& preds, const std::vector<LatticeGt>& gts);

// The exhaustive instance space: ground truths are sequences of up to `max_gts`
// animal boxes from the palette, predictions sequences of up to `max_preds` palette
// boxes labelled animal or person, in descending confidence. The palette is five boxes
// on a 5x5 lattice chosen to produce IoU 1, exact 0.5, ties, sub-threshold overlap and
// disjointness.
inline constexpr int kPaletteGrid = 5;
const std::vector<LatticeBox>& grid_palette();
template <typename F>
void for_each_grid_instance(int max_preds, int max_gts, F&& visit);

// P(Binomial(n, p) > n / 2) for odd n; the chance a majority vote of n independent
// frames, each wrong with probability p, is right.
double majority_correct_probability(int n, double p);

namespace detail {
template <typename T, typename F>
void sequences(const std::vector<T>& alphabet, int max_len, std::vector<T>& current, F&& visit) {
    visit(current);
    if (static_cast<int>(current.size()) == max_len) {
        return;
    }
    for (const auto& a : alphabet) {
        current.push_back(a);
        sequences(alphabet, max_len, current, visit);
        current.pop_back();
    }
}
}  // namespace detail

template <typename F>
void for_each_grid_instance(int max_preds, int max_gts, F&& visit) {
    std::vector<LatticeGt> gt_alphabet;
    std::vector<LatticePred> pred_alphabet;
    for (const auto& b : grid_palette()) {
        gt_alphabet.push_back({b, DetectionCategory::animal});
        pred_alphabet.push_back({b, DetectionCategory::animal});
        pred_alphabet.push_back({b, DetectionCategory::person});
    }
    std::vector<LatticeGt> gts;
    detail::sequences(gt_alphabet, max_gts, gts, [&](const std::vector<LatticeGt>& g) {
        std::vector<LatticePred> preds;
        detail::sequences(pred_alphabet, max_preds, preds, [&](const std::vector<LatticePred>& p) { visit(p, g); });
    });
}

}  // namespace trapkit::oracle
