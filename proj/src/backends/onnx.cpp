#include "backends/onnx.h"

#include "core/error.h"

#include <fmt/format.h>
#include <opencv2/dnn.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace trapkit::backends {

namespace {

constexpr float kNmsIou = 0.45f;

cv::dnn::Net read_net(const ModelManifest& manifest) {
    try {
        return cv::dnn::readNetFromONNX(manifest.resolved_artifact().string());
    } catch (const cv::Exception& e) {
        throw Error(ErrorCode::UnsupportedTask,
                    fmt::format("cannot load ONNX model '{}': {}", manifest.key(), e.what()));
    }
}

BackendInfo make_info(const ModelManifest& manifest) {
    // cv::dnn::Net::forward mutates the net; calls are serialised internally.
    return {manifest, false, manifest.parameter_count};
}

class OnnxDetector final : public Detector {
public:
    explicit OnnxDetector(const ModelManifest& manifest)
            : m_info(make_info(manifest)), m_net(read_net(manifest)) {
        if (manifest.input_size_px <= 0) {
            throw Error(ErrorCode::UnsupportedTask, "ONNX detector needs input_size_px");
        }
    }

    const BackendInfo& info() const override { return m_info; }

    std::vector<Detection> detect(const Image& image, double conf_threshold) const override {
        check_detect_threshold(conf_threshold);
        const int size = m_info.manifest.input_size_px;
        cv::Mat blob = cv::dnn::blobFromImage(image.pixels, 1.0 / 255.0, cv::Size(size, size),
                                              cv::Scalar(), true, false);
        cv::Mat out;
        {
            std::lock_guard lock(m_mutex);
            m_net.setInput(blob);
            out = m_net.forward();
        }
        if (out.dims != 3 || out.size[2] < 6) {
            throw Error(ErrorCode::BackendError, "unexpected ONNX detector output layout");
        }
        const int rows = out.size[1];
        const int width = out.size[2];
        const cv::Mat table(rows, width, CV_32F, out.ptr<float>());

        std::vector<cv::Rect2d> boxes;
        std::vector<float> scores;
        std::vector<int> classes;
        for (int r = 0; r < rows; ++r) {
            const float* row = table.ptr<float>(r);
            const float* cls_begin = row + 5;
            const float* cls_end = row + std::min(width, 8);
            const auto best = std::max_element(cls_begin, cls_end);
            const float score = row[4] * *best;
            if (score < conf_threshold) {
                continue;
            }
            boxes.emplace_back((row[0] - row[2] / 2) / size, (row[1] - row[3] / 2) / size,
                               row[2] / size, row[3] / size);
            scores.push_back(score);
            classes.push_back(static_cast<int>(best - cls_begin));
        }
        std::vector<int> keep;
        cv::dnn::NMSBoxes(boxes, scores, static_cast<float>(conf_threshold), kNmsIou, keep);
        std::vector<Detection> detections;
        for (int i : keep) {
            const double x = std::clamp(boxes[i].x, 0.0, 1.0);
            const double y = std::clamp(boxes[i].y, 0.0, 1.0);
            const double w = std::min(boxes[i].width, 1.0 - x);
            const double h = std::min(boxes[i].height, 1.0 - y);
            if (w <= 0.0 || h <= 0.0) {
                continue;
            }
            detections.emplace_back(BBox(x, y, w, h), category_from_id(classes[i] + 1),
                                    std::clamp(static_cast<double>(scores[i]), 0.0, 1.0));
        }
        return sort_and_filter(std::move(detections), conf_threshold);
    }

private:
    BackendInfo m_info;
    mutable cv::dnn::Net m_net;
    mutable std::mutex m_mutex;
};

class OnnxClassifier final : public Classifier {
public:
    explicit OnnxClassifier(const ModelManifest& manifest)
            : m_info(make_info(manifest)), m_net(read_net(manifest)) {}

    const BackendInfo& info() const override { return m_info; }

    ClassScores classify(const cv::Mat& crop) const override {
        check_crop_shape(crop, m_info.manifest.input_size_px);
        cv::Mat blob = cv::dnn::blobFromImage(crop, 1.0 / 255.0, crop.size(), cv::Scalar(), true,
                                              false);
        cv::Mat logits;
        {
            std::lock_guard lock(m_mutex);
            m_net.setInput(blob);
            logits = m_net.forward().reshape(1, 1);
        }
        const auto& labels = m_info.manifest.class_labels;
        if (static_cast<std::size_t>(logits.total()) != labels.size()) {
            throw Error(ErrorCode::BackendError,
                        fmt::format("ONNX classifier produced {} outputs for {} labels",
                                    logits.total(), labels.size()));
        }
        const float* z = logits.ptr<float>();
        const double zmax = *std::max_element(z, z + labels.size());
        std::vector<double> exps(labels.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            exps[i] = std::exp(static_cast<double>(z[i]) - zmax);
            sum += exps[i];
        }
        std::vector<ClassScores::Entry> entries;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            entries.emplace_back(labels[i], exps[i] / sum);
        }
        return ClassScores(std::move(entries));
    }

private:
    BackendInfo m_info;
    mutable cv::dnn::Net m_net;
    mutable std::mutex m_mutex;
};

}  // namespace

BackendHandle load_onnx_backend(const ModelManifest& manifest) {
    BackendHandle handle;
    handle.task = manifest.task;
    if (manifest.task == Task::detector) {
        handle.detector = std::make_shared<OnnxDetector>(manifest);
    } else {
        handle.classifier = std::make_shared<OnnxClassifier>(manifest);
    }
    return handle;
}

}  // namespace trapkit::backends
