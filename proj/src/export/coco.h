#pragma once

#include "export/md_json.h"

#include <map>
#include <string>
#include <vector>

namespace trapkit::exporter {

struct CocoCategory {
    int id;
    std::string name;
};

// Keyed by class label or detection category name. An annotation uses the top class
// label of a classified detection when that label is mapped, otherwise its detection
// category name; detections with neither key mapped are left out.
using CategoryMap = std::map<std::string, CocoCategory>;

// animal=1, person=2, vehicle=3.
CategoryMap default_category_map();

// Images get ids 1..n in input order and annotations 1..m; failed results are skipped.
// Throws MissingDimensions when a successful result lacks pixel dimensions.
Json to_coco(const std::vector<pipeline::PipelineResult>& results,
             const CategoryMap& category_map = default_category_map());

}  // namespace trapkit::exporter
