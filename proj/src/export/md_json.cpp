#include "export/md_json.h"

#include "core/error.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace trapkit::exporter {

namespace {

class LabelIndex {
public:
    std::string index_of(const std::string& label) {
        auto [it, inserted] = m_index.try_emplace(label, m_labels.size());
        if (inserted) {
            m_labels.push_back(label);
        }
        return std::to_string(it->second);
    }

    Json to_json() const {
        Json out = Json::object();
        for (std::size_t i = 0; i < m_labels.size(); ++i) {
            out[std::to_string(i)] = m_labels[i];
        }
        return out;
    }

private:
    std::map<std::string, std::size_t> m_index;
    std::vector<std::string> m_labels;
};

Json detection_categories() {
    Json out = Json::object();
    for (auto category : kAllCategories) {
        out[std::to_string(category_id(category))] = std::string(to_string(category));
    }
    return out;
}

// Rounded box that still satisfies the BBox invariants when read back.
Json render_bbox(const BBox& box) {
    constexpr long long kUnits = 10000;
    long long x = std::llround(box.x_min() * kUnits);
    long long y = std::llround(box.y_min() * kUnits);
    long long w = std::max<long long>(1, std::llround(box.width() * kUnits));
    long long h = std::max<long long>(1, std::llround(box.height() * kUnits));
    x = std::clamp<long long>(x, 0, kUnits - 1);
    y = std::clamp<long long>(y, 0, kUnits - 1);
    w = std::min(w, kUnits - x);
    h = std::min(h, kUnits - y);
    const auto d = static_cast<double>(kUnits);
    return Json::array({x / d, y / d, w / d, h / d});
}

Json render_detections(const std::vector<pipeline::ScoredDetection>& detections, LabelIndex& labels,
                       double& max_conf) {
    Json out = Json::array();
    max_conf = 0.0;
    for (const auto& scored : detections) {
        const Detection& det = scored.detection;
        const double conf = round_to(det.confidence(), kConfDecimals);
        max_conf = std::max(max_conf, conf);
        Json entry;
        entry["category"] = std::to_string(category_id(det.category()));
        entry["conf"] = conf;
        entry["bbox"] = render_bbox(det.bbox());
        if (scored.scores) {
            std::vector<std::pair<std::string, double>> rows;
            for (const auto& [label, p] : scored.scores->entries()) {
                rows.emplace_back(labels.index_of(label), round_to(p, kConfDecimals));
            }
            std::stable_sort(rows.begin(), rows.end(),
                             [](const auto& a, const auto& b) { return a.second > b.second; });
            Json classifications = Json::array();
            for (const auto& [index, p] : rows) {
                classifications.push_back(Json::array({index, p}));
            }
            entry["classifications"] = std::move(classifications);
        }
        out.push_back(std::move(entry));
    }
    return out;
}

Json render_image(const pipeline::PipelineResult& result, LabelIndex& labels) {
    Json entry;
    entry["file"] = result.image.path;
    if (result.error) {
        entry["failure"] = *result.error;
        return entry;
    }
    double max_conf = 0.0;
    Json detections = render_detections(result.detections, labels, max_conf);
    entry["max_detection_conf"] = max_conf;
    entry["detections"] = std::move(detections);
    return entry;
}

[[noreturn]] void parse_error(const std::string& what) {
    throw Error(ErrorCode::ParseError, "malformed MegaDetector JSON: " + what);
}

}  // namespace

double round_to(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(value * scale) / scale;
}

Json to_md_json(const std::vector<pipeline::PipelineResult>& results) {
    LabelIndex labels;
    Json images = Json::array();
    for (const auto& result : results) {
        images.push_back(render_image(result, labels));
    }
    Json doc;
    doc["images"] = std::move(images);
    doc["detection_categories"] = detection_categories();
    doc["classification_categories"] = labels.to_json();
    doc["info"] = {{"format_version", kMdFormatVersion}, {"generator", kGenerator}};
    return doc;
}

std::string dump_canonical(const Json& document) {
    return document.dump(1, ' ', false, nlohmann::json::error_handler_t::strict) + "\n";
}

std::vector<pipeline::PipelineResult> parse_md_json(const Json& doc, double clf_threshold) {
    std::vector<pipeline::PipelineResult> results;
    try {
        std::map<std::string, std::string> class_names;
        if (doc.contains("classification_categories")) {
            for (const auto& [index, label] : doc.at("classification_categories").items()) {
                class_names[index] = label.get<std::string>();
            }
        }
        for (const auto& image : doc.at("images")) {
            pipeline::PipelineResult result;
            result.image.path = image.at("file").get<std::string>();
            if (image.contains("failure")) {
                result.error = image.at("failure").get<std::string>();
                results.push_back(std::move(result));
                continue;
            }
            for (const auto& det : image.at("detections")) {
                const auto& b = det.at("bbox");
                if (!b.is_array() || b.size() != 4) {
                    parse_error("bbox must have four values");
                }
                Detection detection(BBox(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                                         b[3].get<double>()),
                                    category_from_string(det.at("category").get<std::string>()),
                                    det.at("conf").get<double>());
                std::optional<ClassScores> scores;
                if (det.contains("classifications")) {
                    // Restore label order from the category indices.
                    std::vector<std::pair<long, ClassScores::Entry>> rows;
                    for (const auto& row : det.at("classifications")) {
                        const auto index = row.at(0).get<std::string>();
                        const auto name = class_names.find(index);
                        if (name == class_names.end()) {
                            parse_error("unknown classification index " + index);
                        }
                        rows.push_back({std::stol(index), {name->second, row.at(1).get<double>()}});
                    }
                    std::sort(rows.begin(), rows.end(),
                              [](const auto& a, const auto& b) { return a.first < b.first; });
                    std::vector<ClassScores::Entry> entries;
                    for (auto& row : rows) {
                        entries.push_back(std::move(row.second));
                    }
                    scores = ClassScores::from_rendered(std::move(entries), kConfDecimals);
                }
                result.detections.push_back({std::move(detection), std::move(scores)});
            }
            result.is_empty = result.detections.empty();
            result.needs_review = pipeline::needs_review(result.detections, clf_threshold);
            results.push_back(std::move(result));
        }
    } catch (const nlohmann::json::exception& e) {
        parse_error(e.what());
    } catch (const std::logic_error& e) {
        parse_error(e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseError) {
            throw;
        }
        parse_error(e.what());
    }
    return results;
}

std::vector<pipeline::PipelineResult> parse_md_json_text(std::string_view text, double clf_threshold) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        parse_error(e.what());
    }
    return parse_md_json(doc, clf_threshold);
}

Json video_result_to_json(const video::VideoResult& result) {
    LabelIndex labels;
    Json frames = Json::array();
    for (std::size_t i = 0; i < result.frame_results.size(); ++i) {
        const auto& frame = result.frame_results[i];
        Json entry;
        entry["frame"] = i;
        entry["timestamp_s"] = i < result.frame_timestamps.size() ? result.frame_timestamps[i] : 0.0;
        double max_conf = 0.0;
        Json detections = render_detections(frame.detections, labels, max_conf);
        entry["max_detection_conf"] = max_conf;
        entry["detections"] = std::move(detections);
        frames.push_back(std::move(entry));
    }
    Json tally = Json::object();
    for (const auto& [label, count] : result.vote_tally) {
        tally[label] = count;
    }
    Json doc;
    doc["video"] = result.video_path;
    doc["effective_fps"] = result.effective_fps;
    doc["frame_count"] = result.frame_results.size();
    doc["final_label"] = result.final_label;
    doc["vote_tally"] = std::move(tally);
    doc["detection_categories"] = detection_categories();
    doc["classification_categories"] = labels.to_json();
    doc["frames"] = std::move(frames);
    doc["info"] = {{"format_version", kMdFormatVersion}, {"generator", kGenerator}};
    return doc;
}

}  // namespace trapkit::exporter
