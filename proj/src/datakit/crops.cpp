#include "datakit/crops.h"

#include "core/csv.h"
#include "core/error.h"
#include "core/image.h"

#include <fmt/format.h>

#include <set>

namespace trapkit::datakit {

namespace {

const std::vector<std::string> kManifestHeader{"crop_path", "label", "source_image", "bbox", "confidence"};

bool has_animal(const pipeline::PipelineResult& r) {
    if (r.error) {
        return false;
    }
    for (const auto& d : r.detections) {
        if (d.detection.category() == DetectionCategory::animal) {
            return true;
        }
    }
    return false;
}

double parse_number(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, fmt::format("bad {} '{}' in crop manifest", what, text));
    }
}

}  // namespace

std::string label_directory(const std::string& label) {
    std::string out;
    for (char c : label) {
        const bool safe = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        out += safe ? c : '_';
    }
    if (out.empty() || out == "." || out == "..") {
        out = "_" + out;
    }
    return out;
}

std::vector<CropRecord> build_crop_dataset(const std::vector<pipeline::PipelineResult>& results,
                                           const std::map<std::string, std::string>& image_labels,
                                           const std::filesystem::path& out_dir, int crop_size_px) {
    std::vector<std::string> unlabeled;
    for (const auto& r : results) {
        if (has_animal(r)) {
            const auto it = image_labels.find(r.image.path);
            if (it == image_labels.end() || it->second.empty()) {
                unlabeled.push_back(r.image.path);
            }
        }
    }
    if (!unlabeled.empty()) {
        throw Error(ErrorCode::UnlabeledImage,
                    fmt::format("{} image(s) with animal detections have no label: {}", unlabeled.size(),
                                fmt::join(unlabeled, ", ")));
    }

    std::vector<CropRecord> records;
    std::set<std::filesystem::path> taken;
    for (const auto& r : results) {
        if (!has_animal(r)) {
            continue;
        }
        const std::string& label = image_labels.at(r.image.path);
        const Image image = load_image(r.image.path);
        const std::string stem = std::filesystem::path(r.image.path).stem().string();
        std::size_t k = 0;
        for (const auto& d : r.detections) {
            if (d.detection.category() != DetectionCategory::animal) {
                continue;
            }
            std::filesystem::path rel;
            do {
                rel = std::filesystem::path(label_directory(label)) / fmt::format("{}_{}.png", stem, k++);
            } while (!taken.insert(rel).second);
            save_image(out_dir / rel, pipeline::crop_detection(image.pixels, d.detection.bbox(), crop_size_px));
            records.push_back({out_dir / rel, label, r.image.path, d.detection.bbox(), d.detection.confidence()});
        }
    }
    write_crop_manifest(out_dir / kCropManifestName, records);
    return records;
}

void write_crop_manifest(const std::filesystem::path& path, const std::vector<CropRecord>& records) {
    std::string text = csv_row(kManifestHeader);
    const auto base = path.parent_path();
    for (const auto& r : records) {
        const auto rel = r.crop_path.lexically_relative(base);
        const auto& b = r.bbox;
        text += csv_row({(rel.empty() ? r.crop_path : rel).generic_string(), r.label, r.source_image,
                         fmt::format("{:.4f},{:.4f},{:.4f},{:.4f}", b.x_min(), b.y_min(), b.width(), b.height()),
                         fmt::format("{:.3f}", r.confidence)});
    }
    write_file(path, text);
}

std::vector<CropRecord> read_crop_manifest(const std::filesystem::path& path) {
    const auto rows = parse_csv(read_file(path));
    if (rows.empty() || rows.front() != kManifestHeader) {
        throw Error(ErrorCode::ParseError, fmt::format("'{}' is not a crop manifest", path.string()));
    }
    std::vector<CropRecord> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != kManifestHeader.size() || row[1].empty()) {
            throw Error(ErrorCode::ParseError, fmt::format("malformed row {} in '{}'", i + 1, path.string()));
        }
        const auto parts = parse_csv(row[3]);
        if (parts.size() != 1 || parts[0].size() != 4) {
            throw Error(ErrorCode::ParseError, fmt::format("bad bbox '{}' in '{}'", row[3], path.string()));
        }
        const BBox bbox(parse_number(parts[0][0], "bbox"), parse_number(parts[0][1], "bbox"),
                        parse_number(parts[0][2], "bbox"), parse_number(parts[0][3], "bbox"));
        std::filesystem::path crop = row[0];
        if (crop.is_relative()) {
            crop = path.parent_path() / crop;
        }
        out.push_back({crop, row[1], row[2], bbox, parse_number(row[4], "confidence")});
    }
    return out;
}

std::map<std::string, std::string> read_image_labels(const std::filesystem::path& path) {
    const auto rows = parse_csv(read_file(path));
    std::map<std::string, std::string> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 2 || rows[i][0].empty() || rows[i][1].empty()) {
            throw Error(ErrorCode::ParseError, fmt::format("malformed row {} in '{}'", i + 1, path.string()));
        }
        out[rows[i][0]] = rows[i][1];
    }
    return out;
}

}  // namespace trapkit::datakit
