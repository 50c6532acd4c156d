#include "backends/manifest.h"

#include "core/error.h"
#include "core/image.h"

#include <fmt/format.h>

namespace trapkit::backends {

std::string_view to_string(Task task) {
    return task == Task::detector ? "detector" : "classifier";
}

Task task_from_string(std::string_view name) {
    if (name == "detector") {
        return Task::detector;
    }
    if (name == "classifier") {
        return Task::classifier;
    }
    throw Error(ErrorCode::UnsupportedTask, fmt::format("unsupported model task '{}'", name));
}

std::filesystem::path ModelManifest::resolved_artifact() const {
    std::filesystem::path artifact(artifact_path);
    if (artifact.is_absolute() || base_dir.empty()) {
        return artifact;
    }
    return base_dir / artifact;
}

namespace {

template <typename T>
T require(const nlohmann::json& doc, const char* key) {
    if (!doc.contains(key)) {
        throw Error(ErrorCode::ParseError, fmt::format("manifest is missing '{}'", key));
    }
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::ParseError, fmt::format("manifest field '{}' has the wrong type", key));
    }
}

template <typename T>
T optional_field(const nlohmann::json& doc, const char* key, T fallback) {
    if (!doc.contains(key) || doc.at(key).is_null()) {
        return fallback;
    }
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::ParseError, fmt::format("manifest field '{}' has the wrong type", key));
    }
}

}  // namespace

ModelManifest manifest_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        throw Error(ErrorCode::ParseError, "manifest must be a JSON object");
    }
    ModelManifest m;
    m.model_id = require<std::string>(doc, "model_id");
    m.version = require<std::string>(doc, "version");
    m.task = task_from_string(require<std::string>(doc, "task"));
    m.class_labels = optional_field<std::vector<std::string>>(doc, "class_labels", {});
    m.artifact_path = require<std::string>(doc, "artifact_path");
    m.checksum = require<std::string>(doc, "checksum");
    m.input_size_px = optional_field<int>(doc, "input_size_px", 0);
    m.description = optional_field<std::string>(doc, "description", "");
    m.region_tags = optional_field<std::vector<std::string>>(doc, "region_tags", {});
    if (doc.contains("parameter_count") && !doc.at("parameter_count").is_null()) {
        m.parameter_count = require<std::int64_t>(doc, "parameter_count");
        if (*m.parameter_count <= 0) {
            throw Error(ErrorCode::ParseError, "parameter_count must be positive");
        }
    }
    if (m.model_id.empty()) {
        throw Error(ErrorCode::ParseError, "model_id must not be empty");
    }
    if (m.task == Task::classifier && m.class_labels.empty()) {
        throw Error(ErrorCode::ParseError,
                    fmt::format("classifier '{}' declares no class labels", m.model_id));
    }
    return m;
}

nlohmann::ordered_json manifest_to_json(const ModelManifest& m) {
    nlohmann::ordered_json doc;
    doc["model_id"] = m.model_id;
    doc["version"] = m.version;
    doc["task"] = to_string(m.task);
    doc["class_labels"] = m.class_labels;
    doc["artifact_path"] = m.artifact_path;
    doc["checksum"] = m.checksum;
    doc["input_size_px"] = m.input_size_px;
    doc["description"] = m.description;
    doc["region_tags"] = m.region_tags;
    if (m.parameter_count) {
        doc["parameter_count"] = *m.parameter_count;
    }
    return doc;
}

ModelManifest load_manifest(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError,
                    fmt::format("manifest '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    ModelManifest m = manifest_from_json(doc);
    m.base_dir = path.parent_path();
    return m;
}

void save_manifest(const std::filesystem::path& path, const ModelManifest& manifest) {
    write_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

}  // namespace trapkit::backends
