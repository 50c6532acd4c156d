#pragma once

#include "backends/manifest.h"
#include "core/image.h"
#include "core/types.h"

#include <json.hpp>
#include <opencv2/core.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace trapkit::backends {

struct BackendInfo {
    ModelManifest manifest;
    bool supports_concurrent_inference = false;
    std::optional<std::int64_t> parameter_count;
};

class Detector {
public:
    virtual ~Detector() = default;

    virtual const BackendInfo& info() const = 0;

    // Returns detections with confidence >= conf_threshold, highest confidence first.
    virtual std::vector<Detection> detect(const Image& image, double conf_threshold) const = 0;
};

class Classifier {
public:
    virtual ~Classifier() = default;

    virtual const BackendInfo& info() const = 0;

    // `crop` must be input_size_px x input_size_px; scores follow manifest.class_labels.
    virtual ClassScores classify(const cv::Mat& crop) const = 0;
};

struct BackendHandle {
    Task task = Task::detector;
    std::shared_ptr<const Detector> detector;
    std::shared_ptr<const Classifier> classifier;
};

// Artifacts are dispatched on their "kind" (JSON artifacts) or file extension.
using ArtifactLoader =
        std::function<BackendHandle(const ModelManifest& manifest, const nlohmann::json& artifact)>;

void register_artifact_kind(const std::string& kind, ArtifactLoader loader);

// Verifies the artifact checksum, then instantiates the backend it describes.
// Errors: ArtifactNotFound, ChecksumMismatch, UnsupportedTask.
BackendHandle load_backend(const ModelManifest& manifest);

// Shared helpers for implementations.
void check_detect_threshold(double conf_threshold);
void check_crop_shape(const cv::Mat& crop, int input_size_px);
std::vector<Detection> sort_and_filter(std::vector<Detection> detections, double conf_threshold);

}  // namespace trapkit::backends
