#pragma once

// MegaDetector-batch output format, the interchange read by Timelapse and EcoAssist.
//
// Key order is fixed: images, detection_categories, classification_categories, info.
// Each image is {file, max_detection_conf, detections} or {file, failure}; each
// detection is {category, conf, bbox[, classifications]}. conf and class probabilities
// carry 3 decimals, bbox values 4. Classification indices are assigned in first-seen
// label order and listed per detection by descending probability.

#include "pipeline/pipeline.h"
#include "video/video.h"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace trapkit::exporter {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kMdFormatVersion = "1.4";
inline constexpr std::string_view kGenerator = "trapkit 0.1.0";
inline constexpr int kConfDecimals = 3;
inline constexpr int kBboxDecimals = 4;

Json to_md_json(const std::vector<pipeline::PipelineResult>& results);

// Canonical text: one-space indentation, LF line endings, trailing newline.
std::string dump_canonical(const Json& document);

// Inverse of to_md_json up to rendering precision; needs_review is recomputed at
// `clf_threshold` since the format does not carry it. Throws ParseError.
std::vector<pipeline::PipelineResult> parse_md_json(const Json& document,
                                                    double clf_threshold = 0.98);
std::vector<pipeline::PipelineResult> parse_md_json_text(std::string_view text,
                                                    double clf_threshold = 0.98);

// Per-video summary with per-frame entries in the MegaDetector image layout plus
// frame timestamps.
Json video_result_to_json(const video::VideoResult& result);

double round_to(double value, int decimals);

}  // namespace trapkit::exporter
