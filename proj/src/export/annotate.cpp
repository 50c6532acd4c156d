#include "export/annotate.h"

#include "core/error.h"
#include "core/geometry.h"
#include "export/md_json.h"

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include <algorithm>

namespace trapkit::exporter {

namespace {

cv::Scalar category_color(DetectionCategory category) {
    switch (category) {
    case DetectionCategory::animal:
        return {0, 200, 0};
    case DetectionCategory::person:
        return {0, 0, 230};
    case DetectionCategory::vehicle:
        return {230, 120, 0};
    }
    return {255, 255, 255};
}

}  // namespace

std::string detection_caption(const pipeline::ScoredDetection& scored) {
    std::string caption = fmt::format("{} {:.2f}", to_string(scored.detection.category()),
                                      scored.detection.confidence());
    if (scored.scores) {
        const auto top = scored.scores->top();
        caption += fmt::format(" {} {:.2f}", top.label, top.probability);
    }
    return caption;
}

cv::Mat render_annotated(const cv::Mat& image, const pipeline::PipelineResult& result,
                         const RenderConfig& config) {
    cv::Mat out = image.clone();
    if (out.empty()) {
        throw Error(ErrorCode::ImageDecodeError, "cannot annotate an empty image");
    }
    for (const auto& scored : result.detections) {
        const PixelBox box = to_absolute(scored.detection.bbox(), out.cols, out.rows);
        const cv::Scalar color = category_color(scored.detection.category());
        // OpenCV clips drawing primitives to the image.
        cv::rectangle(out, cv::Rect(box.x, box.y, box.w, box.h), color, config.line_thickness);
        if (!config.draw_labels) {
            continue;
        }
        const std::string caption = detection_caption(scored);
        int baseline = 0;
        const cv::Size text = cv::getTextSize(caption, cv::FONT_HERSHEY_SIMPLEX, config.font_scale, 1, &baseline);
        // Caption sits above the box unless that would leave the image.
        int top = box.y - text.height - baseline;
        if (top < 0) {
            top = std::min(box.y, std::max(0, out.rows - text.height - baseline));
        }
        const cv::Rect background = cv::Rect(box.x, top, text.width, text.height + baseline) &
                                    cv::Rect(0, 0, out.cols, out.rows);
        cv::rectangle(out, background, color, cv::FILLED);
        cv::putText(out, caption, cv::Point(box.x, top + text.height), cv::FONT_HERSHEY_SIMPLEX,
                    config.font_scale, cv::Scalar(255, 255, 255), 1, cv::LINE_AA);
    }
    return out;
}

void render_annotated_file(const std::filesystem::path& source, const std::filesystem::path& destination,
                           const pipeline::PipelineResult& result, const RenderConfig& config) {
    if (result.detections.empty()) {
        load_image(source);  // rejects undecodable input
        write_file(destination, read_file(source));
        return;
    }
    const Image image = load_image(source);
    save_image(destination, render_annotated(image.pixels, result, config));
}

std::string folder_for(const pipeline::PipelineResult& result) {
    if (result.error) {
        return "failed";
    }
    const pipeline::ScoredDetection* best = nullptr;
    for (const auto& scored : result.detections) {
        // Strict comparison keeps the earlier category (animal < person < vehicle) on ties.
        if (!best || scored.detection.confidence() > best->detection.confidence() ||
            (scored.detection.confidence() == best->detection.confidence() &&
             category_id(scored.detection.category()) < category_id(best->detection.category()))) {
            best = &scored;
        }
    }
    return best ? std::string(to_string(best->detection.category())) : "empty";
}

std::filesystem::path unique_destination(const std::filesystem::path& dir, const std::filesystem::path& name,
                                         std::set<std::string>& taken) {
    std::filesystem::path candidate = dir / name;
    for (int n = 1; taken.contains(candidate.string()); ++n) {
        candidate = dir / fmt::format("{}_{}{}", name.stem().string(), n, name.extension().string());
    }
    taken.insert(candidate.string());
    return candidate;
}

std::vector<FolderAssignment> separate_folders(const std::vector<pipeline::PipelineResult>& results,
                                               const std::filesystem::path& out_dir) {
    std::vector<FolderAssignment> manifest;
    std::set<std::string> taken;
    for (const auto& result : results) {
        const std::string folder = folder_for(result);
        const std::filesystem::path source = result.image.path;
        const auto destination = unique_destination(out_dir / folder, source.filename(), taken);
        std::error_code ec;
        std::filesystem::create_directories(destination.parent_path(), ec);
        std::filesystem::copy_file(source, destination, std::filesystem::copy_options::overwrite_existing, ec);
        if (ec) {
            throw Error(ErrorCode::IoError, fmt::format("cannot copy '{}' to '{}': {}", source.string(),
                                                        destination.string(), ec.message()));
        }
        manifest.push_back({source.string(), destination.string(), folder});
    }
    return manifest;
}

nlohmann::ordered_json folders_manifest_to_json(const std::vector<FolderAssignment>& manifest) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& entry : manifest) {
        out.push_back({{"source", entry.source}, {"destination", entry.destination}, {"folder", entry.folder}});
    }
    return out;
}

}  // namespace trapkit::exporter
