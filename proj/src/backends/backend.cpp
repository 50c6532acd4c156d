#include "backends/backend.h"

#include "backends/onnx.h"
#include "backends/synthetic.h"
#include "core/checksum.h"
#include "core/error.h"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <mutex>

namespace trapkit::backends {

namespace {

struct Registry {
    std::mutex mutex;
    std::map<std::string, ArtifactLoader> loaders;
};

Registry& registry() {
    static Registry instance;
    static std::once_flag builtins;
    std::call_once(builtins, [] {
        instance.loaders.emplace(std::string(kSyntheticDetectorKind), &load_synthetic_detector);
        instance.loaders.emplace(std::string(kSyntheticClassifierKind), &load_synthetic_classifier);
    });
    return instance;
}

}  // namespace

void register_artifact_kind(const std::string& kind, ArtifactLoader loader) {
    auto& reg = registry();
    std::lock_guard lock(reg.mutex);
    reg.loaders[kind] = std::move(loader);
}

BackendHandle load_backend(const ModelManifest& manifest) {
    const auto artifact = manifest.resolved_artifact();
    std::error_code ec;
    if (!std::filesystem::is_regular_file(artifact, ec)) {
        throw Error(ErrorCode::ArtifactNotFound,
                    fmt::format("artifact '{}' for model '{}' not found", artifact.string(),
                                manifest.key()));
    }
    const std::string actual = sha256_file(artifact);
    if (actual != manifest.checksum) {
        throw Error(ErrorCode::ChecksumMismatch,
                    fmt::format("artifact '{}' has sha256 {} but manifest declares {}",
                                artifact.string(), actual, manifest.checksum));
    }

    BackendHandle handle;
    if (artifact.extension() == ".onnx") {
        handle = load_onnx_backend(manifest);
    } else {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(read_file(artifact));
        } catch (const nlohmann::json::parse_error&) {
            throw Error(ErrorCode::UnsupportedTask,
                        fmt::format("artifact '{}' is neither ONNX nor a JSON model description",
                                    artifact.string()));
        }
        const std::string kind = doc.value("kind", "");
        ArtifactLoader loader;
        {
            auto& reg = registry();
            std::lock_guard lock(reg.mutex);
            auto it = reg.loaders.find(kind);
            if (it == reg.loaders.end()) {
                throw Error(ErrorCode::UnsupportedTask,
                            fmt::format("no backend registered for artifact kind '{}'", kind));
            }
            loader = it->second;
        }
        handle = loader(manifest, doc);
    }
    if (handle.task != manifest.task) {
        throw Error(ErrorCode::UnsupportedTask,
                    fmt::format("model '{}' declares task {} but its artifact is a {}",
                                manifest.key(), to_string(manifest.task), to_string(handle.task)));
    }
    spdlog::debug("loaded {} backend {}", to_string(handle.task), manifest.key());
    return handle;
}

void check_detect_threshold(double conf_threshold) {
    if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("detection threshold {} outside [0,1]", conf_threshold));
    }
}

void check_crop_shape(const cv::Mat& crop, int input_size_px) {
    if (crop.cols != input_size_px || crop.rows != input_size_px) {
        throw Error(ErrorCode::ShapeMismatch,
                    fmt::format("classifier expects {0}x{0} crops, got {1}x{2}", input_size_px,
                                crop.cols, crop.rows));
    }
}

std::vector<Detection> sort_and_filter(std::vector<Detection> detections, double conf_threshold) {
    std::erase_if(detections,
                  [&](const Detection& d) { return d.confidence() < conf_threshold; });
    std::stable_sort(detections.begin(), detections.end(),
                     [](const Detection& a, const Detection& b) {
                         return a.confidence() > b.confidence();
                     });
    return detections;
}

}  // namespace trapkit::backends
