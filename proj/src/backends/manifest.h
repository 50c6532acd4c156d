#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trapkit::backends {

enum class Task { detector, classifier };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);

// One model-zoo entry. `artifact_path` is stored as written in the manifest file;
// relative paths resolve against `base_dir` (the manifest's directory).
struct ModelManifest {
    std::string model_id;
    std::string version;
    Task task = Task::detector;
    std::vector<std::string> class_labels;
    std::string artifact_path;
    std::string checksum;
    int input_size_px = 0;
    std::string description;
    std::vector<std::string> region_tags;
    std::optional<std::int64_t> parameter_count;

    std::filesystem::path base_dir;

    std::filesystem::path resolved_artifact() const;
    std::string key() const { return model_id + "@" + version; }
};

// Throws ParseError on missing or mistyped fields and UnsupportedTask on an unknown task.
ModelManifest manifest_from_json(const nlohmann::json& doc);
nlohmann::ordered_json manifest_to_json(const ModelManifest& manifest);

ModelManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const ModelManifest& manifest);

}  // namespace trapkit::backends
