#pragma once

#include "core/image.h"
#include "pipeline/pipeline.h"

#include <json.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace trapkit::exporter {

struct RenderConfig {
    int line_thickness = 2;
    double font_scale = 0.5;
    bool draw_labels = true;
};

// Draws onto a copy; the input is untouched and dimensions are preserved.
cv::Mat render_annotated(const cv::Mat& image, const pipeline::PipelineResult& result,
                         const RenderConfig& config = {});

// Reads `source`, draws and writes `destination`. A result without detections copies
// the file bytes unchanged. Throws ImageDecodeError or IoError.
void render_annotated_file(const std::filesystem::path& source,
                           const std::filesystem::path& destination,
                           const pipeline::PipelineResult& result, const RenderConfig& config = {});

// "<category> <conf>" plus " <label> <prob>" for classified detections.
std::string detection_caption(const pipeline::ScoredDetection& detection);

struct FolderAssignment {
    std::string source;
    std::string destination;
    std::string folder;
};

// Folder names: animal, person, vehicle, empty, and failed for results whose image
// could not be processed.
std::string folder_for(const pipeline::PipelineResult& result);

// Copies each image into out_dir/<folder>/. Same-named files get a numeric suffix.
// Throws IoError.
std::vector<FolderAssignment> separate_folders(const std::vector<pipeline::PipelineResult>& results,
                                               const std::filesystem::path& out_dir);

nlohmann::ordered_json folders_manifest_to_json(const std::vector<FolderAssignment>& manifest);

// `name` inside `dir`, suffixed "_1", "_2", ... until unused in `taken`; the result is
// added to `taken`.
std::filesystem::path unique_destination(const std::filesystem::path& dir,
                                         const std::filesystem::path& name,
                                         std::set<std::string>& taken);

}  // namespace trapkit::exporter
