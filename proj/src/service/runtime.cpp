#include "service/runtime.h"

#include "backends/manifest.h"
#include "finetune/train.h"
#include "video/video.h"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>

namespace trapkit::service {

namespace fs = std::filesystem;

ModelRegistry::ModelRegistry(fs::path model_dir) : m_dir(std::move(model_dir)) {
    finetune::register_finetune_backends();
    if (!fs::is_directory(m_dir)) {
        return;
    }
    for (const auto& entry : fs::recursive_directory_iterator(m_dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.size() > 14 && name.ends_with(".manifest.json")) {
            m_manifests.push_back(backends::load_manifest(entry.path()));
        }
    }
    std::sort(m_manifests.begin(), m_manifests.end(), [](const auto& a, const auto& b) {
        return std::tie(a.model_id, a.version) < std::tie(b.model_id, b.version);
    });
    for (std::size_t i = 1; i < m_manifests.size(); ++i) {
        if (m_manifests[i].key() == m_manifests[i - 1].key()) {
            throw Error(ErrorCode::InvalidArgument,
                        fmt::format("model {} is listed twice under {}", m_manifests[i].key(), m_dir.string()));
        }
    }
}

std::vector<backends::ModelManifest> ModelRegistry::manifests() const {
    return m_manifests;
}

nlohmann::ordered_json ModelRegistry::summaries_json() const {
    std::lock_guard lock(m_mutex);
    auto out = nlohmann::ordered_json::array();
    for (const auto& m : m_manifests) {
        out.push_back({{"model_id", m.model_id},
                       {"version", m.version},
                       {"task", to_string(m.task)},
                       {"class_labels", m.class_labels},
                       {"input_size_px", m.input_size_px},
                       {"description", m.description},
                       {"region_tags", m.region_tags},
                       {"parameter_count", m.parameter_count ? nlohmann::ordered_json(*m.parameter_count) : nullptr},
                       {"loaded", m_loaded.count(m.key()) > 0}});
    }
    return out;
}

const backends::ModelManifest& ModelRegistry::find(const std::string& id, backends::Task task) const {
    const backends::ModelManifest* hit = nullptr;
    for (const auto& m : m_manifests) {
        // Sorted by version, so the last plain-id match is the newest.
        if (m.task == task && (m.key() == id || m.model_id == id)) {
            hit = &m;
            if (m.key() == id) {
                break;
            }
        }
    }
    if (!hit) {
        throw Error(ErrorCode::UnknownModel, fmt::format("no {} named '{}' in {}", to_string(task), id, m_dir.string()));
    }
    return *hit;
}

backends::BackendHandle ModelRegistry::get(const std::string& id, backends::Task task) {
    const auto& manifest = find(id, task);
    std::lock_guard lock(m_mutex);
    if (auto it = m_loaded.find(manifest.key()); it != m_loaded.end()) {
        return it->second;
    }
    backends::BackendHandle handle;
    try {
        handle = backends::load_backend(manifest);
    } catch (const Error& e) {
        throw Error(ErrorCode::BackendError,
                    fmt::format("model {} could not be loaded: {}: {}", manifest.key(), to_string(e.code()), e.what()));
    }
    m_loaded.emplace(manifest.key(), handle);
    return handle;
}

std::string ModelRegistry::default_detector() const {
    for (const auto& m : m_manifests) {
        if (m.task == backends::Task::detector) {
            return m.key();
        }
    }
    throw Error(ErrorCode::UnknownModel, fmt::format("no detector in {}", m_dir.string()));
}

bool is_image_file(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::find(std::begin(kImageExtensions), std::end(kImageExtensions), ext) != std::end(kImageExtensions);
}

std::vector<ImageRef> collect_images(const fs::path& input) {
    if (!fs::exists(input)) {
        throw Error(ErrorCode::IoError, fmt::format("{} does not exist", input.string()));
    }
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::recursive_directory_iterator(input)) {
            if (entry.is_regular_file() && is_image_file(entry.path())) {
                files.push_back(entry.path());
            }
        }
    } else {
        files.push_back(input);
    }
    if (files.empty()) {
        throw Error(ErrorCode::EmptyBatch, fmt::format("no images under {}", input.string()));
    }
    std::sort(files.begin(), files.end());
    std::vector<ImageRef> refs(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        refs[i].path = files[i].string();
    }
    return refs;
}

void relativize(std::vector<pipeline::PipelineResult>& results, const fs::path& base) {
    for (auto& r : results) {
        r.image.path = fs::path(r.image.path).lexically_relative(base).generic_string();
    }
}

namespace {

struct Pair {
    backends::BackendHandle detector;
    backends::BackendHandle classifier;
};

Pair load_pair(ModelRegistry& registry, const std::string& detector_id, const std::optional<std::string>& classifier_id) {
    Pair p;
    p.detector = registry.get(detector_id.empty() ? registry.default_detector() : detector_id, backends::Task::detector);
    if (classifier_id && !classifier_id->empty()) {
        p.classifier = registry.get(*classifier_id, backends::Task::classifier);
    }
    return p;
}

}  // namespace

pipeline::PipelineConfig with_crop_size(pipeline::PipelineConfig config, const backends::BackendHandle& classifier) {
    if (classifier.classifier) {
        config.crop_size_px = classifier.classifier->info().manifest.input_size_px;
    }
    return config;
}

std::string run_batch_document(const BatchRequest& request, ModelRegistry& registry,
                               const pipeline::ProgressSink& progress) {
    request.config.validate();
    const auto models = load_pair(registry, request.detector_id, request.classifier_id);
    const auto images = collect_images(request.input);
    auto results = pipeline::run_batch(images, *models.detector.detector, models.classifier.classifier.get(),
                                       with_crop_size(request.config, models.classifier), progress);
    relativize(results, fs::is_directory(request.input) ? request.input : request.input.parent_path());
    return exporter::dump_canonical(exporter::to_md_json(results));
}

std::string run_video_document(const VideoRequest& request, ModelRegistry& registry,
                               const pipeline::ProgressSink& progress) {
    request.config.validate();
    const auto models = load_pair(registry, request.detector_id, request.classifier_id);
    auto source = video::open_video(request.input);
    auto result = video::classify_video(*source, *models.detector.detector, models.classifier.classifier.get(),
                                        with_crop_size(request.config, models.classifier), request.fps_cap,
                                        progress);
    result.video_path = request.input.filename().string();
    return exporter::dump_canonical(exporter::video_result_to_json(result));
}

void anchor(std::vector<pipeline::PipelineResult>& results, const fs::path& root) {
    for (auto& r : results) {
        const fs::path p(r.image.path);
        if (p.is_relative()) {
            r.image.path = (root / p).string();
        }
    }
}

nlohmann::ordered_json triage_summary(const std::vector<pipeline::PipelineResult>& results, double threshold) {
    const auto part = pipeline::triage(results, threshold);
    auto files = [](const std::vector<pipeline::PipelineResult>& rs) {
        auto a = nlohmann::ordered_json::array();
        for (const auto& r : rs) {
            a.push_back(r.image.path);
        }
        return a;
    };
    return {{"threshold", threshold},
            {"total", results.size()},
            {"confident_count", part.confident.size()},
            {"review_count", part.review.size()},
            {"confident", files(part.confident)},
            {"review", files(part.review)}};
}

nlohmann::ordered_json error_json(ErrorCode code, const std::string& message) {
    return {{"error", {{"code", to_string(code)}, {"message", message}}}};
}

}  // namespace trapkit::service
