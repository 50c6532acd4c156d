#pragma once

// Work shared by the CLI and the HTTP API. Both build result documents through these
// functions so identical inputs give byte-identical output.

#include "backends/backend.h"
#include "core/error.h"
#include "export/md_json.h"
#include "pipeline/pipeline.h"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace trapkit::service {

// Manifests found as *.manifest.json under a model directory. Backends load on first
// use and stay loaded.
class ModelRegistry {
public:
    explicit ModelRegistry(std::filesystem::path model_dir);

    const std::filesystem::path& model_dir() const noexcept { return m_dir; }

    // Manifests in model_id, version order.
    std::vector<backends::ModelManifest> manifests() const;

    // Summaries for GET /models: manifest fields plus "loaded".
    nlohmann::ordered_json summaries_json() const;

    // `id` is a model_id (highest version wins) or "model_id@version".
    // Throws UnknownModel when absent or of the wrong task.
    const backends::ModelManifest& find(const std::string& id, backends::Task task) const;

    // Loads on demand. Load failures surface as BackendError.
    backends::BackendHandle get(const std::string& id, backends::Task task);

    // First detector in manifests() order. Throws UnknownModel if there is none.
    std::string default_detector() const;

private:
    std::filesystem::path m_dir;
    std::vector<backends::ModelManifest> m_manifests;
    mutable std::mutex m_mutex;
    std::map<std::string, backends::BackendHandle> m_loaded;
};

inline constexpr const char* kImageExtensions[] = {".jpg", ".jpeg", ".png", ".tif", ".tiff", ".bmp", ".webp"};

bool is_image_file(const std::filesystem::path& path);

// A single image file, or every image below a directory in lexicographic path order.
// Throws IoError when the path does not exist and EmptyBatch when nothing is found.
std::vector<ImageRef> collect_images(const std::filesystem::path& input);

// Result "file" entries are rewritten relative to `base` (generic separators); `base`
// is the input directory, or the parent directory for a single file.
void relativize(std::vector<pipeline::PipelineResult>& results, const std::filesystem::path& base);

struct BatchRequest {
    std::filesystem::path input;
    std::string detector_id;
    std::optional<std::string> classifier_id;
    pipeline::PipelineConfig config;
};

// Crops must match the classifier input, so its input_size_px overrides
// config.crop_size_px whenever a classifier is present.
pipeline::PipelineConfig with_crop_size(pipeline::PipelineConfig config, const backends::BackendHandle& classifier);

// collect_images, run_batch and relativize, returning the canonical MegaDetector-batch
// text (dump_canonical(to_md_json(...))).
std::string run_batch_document(const BatchRequest& request, ModelRegistry& registry,
                               const pipeline::ProgressSink& progress = {});

struct VideoRequest {
    std::filesystem::path input;
    std::string detector_id;
    std::optional<std::string> classifier_id;
    pipeline::PipelineConfig config;
    double fps_cap = 30.0;
};

// Canonical text of video_result_to_json; the video is named by its file name.
std::string run_video_document(const VideoRequest& request, ModelRegistry& registry,
                               const pipeline::ProgressSink& progress = {});

// Result paths that are relative are resolved against `root`.
void anchor(std::vector<pipeline::PipelineResult>& results, const std::filesystem::path& root);

// {threshold, total, confident_count, review_count, confident: [file], review: [file]}
nlohmann::ordered_json triage_summary(const std::vector<pipeline::PipelineResult>& results, double threshold);

// {"error": {"code": ..., "message": ...}}
nlohmann::ordered_json error_json(ErrorCode code, const std::string& message);

}  // namespace trapkit::service
