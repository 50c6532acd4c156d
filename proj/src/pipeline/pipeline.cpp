#include "pipeline/pipeline.h"

#include "core/error.h"
#include "core/parallel.h"

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <mutex>

namespace trapkit::pipeline {

namespace {

// Calls into backends that cannot run concurrently are serialised through a lock
// chosen by the backend's address.
std::mutex& backend_lock(const void* backend) {
    static std::array<std::mutex, 64> locks;
    return locks[std::hash<const void*>{}(backend) % locks.size()];
}

template <typename Backend, typename Fn>
auto call_backend(const Backend& backend, Fn&& fn) {
    if (backend.info().supports_concurrent_inference) {
        return fn();
    }
    std::lock_guard lock(backend_lock(&backend));
    return fn();
}

void check_probability(double value, const char* name) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("{} {} outside [0,1]", name, value));
    }
}

}  // namespace

void PipelineConfig::validate() const {
    check_probability(det_threshold, "det_threshold");
    check_probability(clf_threshold, "clf_threshold");
    if (crop_size_px < 8) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("crop_size_px {} is below the minimum of 8", crop_size_px));
    }
    if (workers < 1) {
        throw Error(ErrorCode::InvalidArgument, "workers must be at least 1");
    }
}

bool needs_review(const std::vector<ScoredDetection>& detections, double clf_threshold) {
    return std::any_of(detections.begin(), detections.end(), [&](const ScoredDetection& d) {
        return d.scores && d.scores->top().probability < clf_threshold;
    });
}

PixelBox square_region(const BBox& bbox, int width_px, int height_px) {
    const PixelBox box = to_absolute(bbox, width_px, height_px);
    const int side = std::max(box.w, box.h);

    auto place = [side](int start, int extent, int limit, int& out_start, int& out_extent) {
        if (side >= limit) {
            out_start = 0;
            out_extent = limit;
            return;
        }
        const int centred = static_cast<int>(std::floor(start + extent / 2.0 - side / 2.0));
        out_start = std::clamp(centred, 0, limit - side);
        out_extent = side;
    };
    PixelBox region;
    place(box.x, box.w, width_px, region.x, region.w);
    place(box.y, box.h, height_px, region.y, region.h);
    return region;
}

cv::Mat crop_detection(const cv::Mat& image, const BBox& bbox, int crop_size_px) {
    if (crop_size_px < 1) {
        throw Error(ErrorCode::InvalidArgument, "crop size must be positive");
    }
    if (image.empty()) {
        throw Error(ErrorCode::DegenerateBox, "cannot crop from an empty image");
    }
    const PixelBox region = square_region(bbox, image.cols, image.rows);
    if (region.w < 1 || region.h < 1) {
        throw Error(ErrorCode::DegenerateBox, "crop region is smaller than one pixel");
    }
    const cv::Mat roi = image(cv::Rect(region.x, region.y, region.w, region.h));
    cv::Mat out;
    const bool shrinking = region.w > crop_size_px || region.h > crop_size_px;
    cv::resize(roi, out, cv::Size(crop_size_px, crop_size_px), 0, 0,
               shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    return out;
}

PipelineResult run_decoded(const Image& image, ImageRef ref, const backends::Detector& detector,
                           const backends::Classifier* classifier, const PipelineConfig& config) {
    config.validate();
    ref.width_px = image.width();
    ref.height_px = image.height();

    auto detections = call_backend(detector, [&] {
        return detector.detect(image, config.det_threshold);
    });
    std::erase_if(detections,
                  [&](const Detection& d) { return d.confidence() < config.det_threshold; });

    PipelineResult result;
    result.image = std::move(ref);
    result.detections.reserve(detections.size());
    for (const auto& det : detections) {
        ScoredDetection scored{det, std::nullopt};
        if (classifier && config.classify_categories.contains(det.category())) {
            const cv::Mat crop = crop_detection(image.pixels, det.bbox(), config.crop_size_px);
            scored.scores = call_backend(*classifier, [&] { return classifier->classify(crop); });
        }
        result.detections.push_back(std::move(scored));
    }
    result.is_empty = result.detections.empty();
    result.needs_review = needs_review(result.detections, config.clf_threshold);
    return result;
}

PipelineResult run_image(const ImageRef& ref, const backends::Detector& detector,
                         const backends::Classifier* classifier, const PipelineConfig& config) {
    config.validate();
    const Image image = load_image(ref.path);
    try {
        return run_decoded(image, ref, detector, classifier, config);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ImageDecodeError || e.code() == ErrorCode::InvalidArgument) {
            throw;
        }
        throw Error(ErrorCode::BackendError,
                    fmt::format("{}: {}: {}", ref.path, to_string(e.code()), e.what()));
    } catch (const std::exception& e) {
        throw Error(ErrorCode::BackendError, fmt::format("{}: {}", ref.path, e.what()));
    }
}

std::vector<PipelineResult> run_batch(const std::vector<ImageRef>& images,
                                      const backends::Detector& detector,
                                      const backends::Classifier* classifier,
                                      const PipelineConfig& config, const ProgressSink& progress) {
    if (images.empty()) {
        throw Error(ErrorCode::EmptyBatch, "batch contains no images");
    }
    config.validate();

    std::vector<PipelineResult> results(images.size());
    std::mutex progress_mutex;
    std::size_t done = 0;

    parallel_for(images.size(), config.workers, [&](std::size_t i) {
        try {
            results[i] = run_image(images[i], detector, classifier, config);
        } catch (const Error& e) {
            PipelineResult failed;
            failed.image = images[i];
            failed.error = fmt::format("{}: {}", to_string(e.code()), e.what());
            results[i] = std::move(failed);
        }
        std::lock_guard lock(progress_mutex);
        ++done;
        if (progress) {
            progress(done, images.size());
        }
    });
    return results;
}

TriagePartition triage(const std::vector<PipelineResult>& results, double clf_threshold) {
    check_probability(clf_threshold, "clf_threshold");
    TriagePartition partition;
    for (const auto& result : results) {
        if (needs_review(result.detections, clf_threshold)) {
            partition.review.push_back(result);
        } else {
            partition.confident.push_back(result);
        }
    }
    return partition;
}

}  // namespace trapkit::pipeline
