#pragma once

#include "core/types.h"
#include "pipeline/pipeline.h"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace trapkit::datakit {

struct CropRecord {
    std::filesystem::path crop_path;
    std::string label;
    std::string source_image;
    BBox bbox;
    double confidence;
};

// One square crop of crop_size_px per animal detection, written to
// out_dir/<label>/<source stem>_<k>.png, plus out_dir/manifest.csv. Results without
// animal detections (or with errors) contribute nothing and need no label.
// Throws UnlabeledImage naming every contributing image missing from image_labels.
std::vector<CropRecord> build_crop_dataset(const std::vector<pipeline::PipelineResult>& results,
                                           const std::map<std::string, std::string>& image_labels,
                                           const std::filesystem::path& out_dir, int crop_size_px);

// Columns: crop_path,label,source_image,bbox,confidence. crop_path is relative to
// the manifest's directory; bbox is "x,y,w,h".
inline constexpr const char* kCropManifestName = "manifest.csv";
void write_crop_manifest(const std::filesystem::path& path, const std::vector<CropRecord>& records);
// Returned crop paths are resolved against the manifest's directory. Throws ParseError.
std::vector<CropRecord> read_crop_manifest(const std::filesystem::path& path);

// Image-level labels from a two-column CSV (image,label) with a header row.
std::map<std::string, std::string> read_image_labels(const std::filesystem::path& path);

// Label made safe for use as a directory name.
std::string label_directory(const std::string& label);

}  // namespace trapkit::datakit
