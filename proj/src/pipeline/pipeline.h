#pragma once

#include "backends/backend.h"
#include "core/geometry.h"
#include "core/image.h"
#include "core/types.h"

#include <opencv2/core.hpp>

#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace trapkit::pipeline {

struct PipelineConfig {
    double det_threshold = 0.2;
    // Applies to the top class score of each classified detection.
    double clf_threshold = 0.98;
    int crop_size_px = 256;
    std::set<DetectionCategory> classify_categories = {DetectionCategory::animal};
    // Images processed concurrently by run_batch.
    int workers = 1;

    // Throws InvalidArgument.
    void validate() const;
};

struct ScoredDetection {
    Detection detection;
    std::optional<ClassScores> scores;
};

struct PipelineResult {
    ImageRef image;
    std::vector<ScoredDetection> detections;
    bool is_empty = true;
    bool needs_review = false;
    // Set on per-image failures inside a batch: "<ErrorCode>: <message>".
    std::optional<std::string> error;
};

bool needs_review(const std::vector<ScoredDetection>& detections, double clf_threshold);

// Pixel region cropped for a detection: the box expanded about its centre to a
// square of its longer side, shifted to stay inside the image, and clipped only
// when the square is larger than the image.
PixelBox square_region(const BBox& bbox, int width_px, int height_px);

// square_region resized to crop_size_px x crop_size_px. Throws DegenerateBox.
cv::Mat crop_detection(const cv::Mat& image, const BBox& bbox, int crop_size_px);

// Detect, filter, crop and classify one decoded image. `ref` supplies the metadata
// recorded in the result; its dimensions are overwritten from the pixels.
PipelineResult run_decoded(const Image& image, ImageRef ref, const backends::Detector& detector,
                           const backends::Classifier* classifier, const PipelineConfig& config);

// Loads `ref.path` and runs run_decoded. ImageDecodeError propagates; backend failures
// are rethrown as BackendError naming the image.
PipelineResult run_image(const ImageRef& ref, const backends::Detector& detector,
                         const backends::Classifier* classifier, const PipelineConfig& config);

using ProgressSink = std::function<void(std::size_t done, std::size_t total)>;

// Results come back in input order. A failing image yields a result with `error` set
// instead of aborting the batch. The sink sees done = 1, 2, ..., images.size().
std::vector<PipelineResult> run_batch(const std::vector<ImageRef>& images,
                                      const backends::Detector& detector,
                                      const backends::Classifier* classifier,
                                      const PipelineConfig& config,
                                      const ProgressSink& progress = {});

struct TriagePartition {
    std::vector<PipelineResult> confident;
    std::vector<PipelineResult> review;
};

TriagePartition triage(const std::vector<PipelineResult>& results, double clf_threshold);

}  // namespace trapkit::pipeline
