#include "export/coco.h"

#include "core/error.h"
#include "core/geometry.h"

#include <fmt/format.h>

#include <algorithm>

namespace trapkit::exporter {

CategoryMap default_category_map() {
    CategoryMap map;
    for (auto category : kAllCategories) {
        map[std::string(to_string(category))] = {category_id(category), std::string(to_string(category))};
    }
    return map;
}

Json to_coco(const std::vector<pipeline::PipelineResult>& results, const CategoryMap& category_map) {
    Json images = Json::array();
    Json annotations = Json::array();
    long image_id = 0;
    long annotation_id = 0;
    for (const auto& result : results) {
        if (result.error) {
            continue;
        }
        if (!result.image.has_dimensions()) {
            throw Error(ErrorCode::MissingDimensions,
                        fmt::format("'{}' has no pixel dimensions", result.image.path));
        }
        const int width = *result.image.width_px;
        const int height = *result.image.height_px;
        ++image_id;
        Json image;
        image["id"] = image_id;
        image["file_name"] = result.image.path;
        image["width"] = width;
        image["height"] = height;
        images.push_back(std::move(image));

        for (const auto& scored : result.detections) {
            auto it = category_map.end();
            if (scored.scores) {
                it = category_map.find(scored.scores->top().label);
            }
            if (it == category_map.end()) {
                it = category_map.find(std::string(to_string(scored.detection.category())));
            }
            if (it == category_map.end()) {
                continue;
            }
            const PixelBox box = to_absolute(scored.detection.bbox(), width, height);
            Json annotation;
            annotation["id"] = ++annotation_id;
            annotation["image_id"] = image_id;
            annotation["category_id"] = it->second.id;
            annotation["bbox"] = Json::array({box.x, box.y, box.w, box.h});
            annotation["area"] = static_cast<long>(box.w) * box.h;
            annotation["iscrowd"] = 0;
            annotation["score"] = round_to(scored.detection.confidence(), kConfDecimals);
            annotations.push_back(std::move(annotation));
        }
    }

    std::vector<CocoCategory> categories;
    for (const auto& [key, category] : category_map) {
        categories.push_back(category);
    }
    std::sort(categories.begin(), categories.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    // Several keys may share one COCO category.
    categories.erase(std::unique(categories.begin(), categories.end(),
                                 [](const auto& a, const auto& b) { return a.id == b.id; }),
                     categories.end());
    Json category_list = Json::array();
    for (const auto& category : categories) {
        category_list.push_back({{"id", category.id}, {"name", category.name}, {"supercategory", "object"}});
    }

    Json doc;
    doc["info"] = {{"description", "camera trap detections"}, {"version", "1.0"},
                   {"contributor", kGenerator}};
    doc["licenses"] = Json::array();
    doc["images"] = std::move(images);
    doc["annotations"] = std::move(annotations);
    doc["categories"] = std::move(category_list);
    return doc;
}

}  // namespace trapkit::exporter
