#include "evalboard/leaderboard.h"

#include "backends/synthetic.h"
#include "core/error.h"
#include "core/image.h"
#include "export/md_json.h"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

namespace trapkit::evalboard {

namespace {

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("{} {} outside [0, 1]", name, v));
    }
}

nlohmann::ordered_json bbox_json(const BBox& b) {
    return nlohmann::ordered_json::array({b.x_min(), b.y_min(), b.width(), b.height()});
}

bool key_matches(const std::string& file, const std::string& key) {
    return file == key || (file.size() > key.size() && file.compare(file.size() - key.size(), key.size(), key) == 0 &&
                           file[file.size() - key.size() - 1] == '/');
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::vector<std::string> lines;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

}  // namespace

std::string now_timestamp() {
    return format_timestamp(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now())) + "Z";
}

void EvalRecord::validate() const {
    if (model_id.empty() || test_set_id.empty()) {
        throw Error(ErrorCode::InvalidArgument, "evaluation records need a model_id and a test_set_id");
    }
    if (parameter_count <= 0) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("parameter_count {} must be positive", parameter_count));
    }
    check_unit(precision, "precision");
    check_unit(recall, "recall");
    check_unit(map_score, "mAP");
}

nlohmann::ordered_json record_to_json(const EvalRecord& r) {
    nlohmann::ordered_json doc;
    doc["model_id"] = r.model_id;
    doc["parameter_count"] = r.parameter_count;
    doc["precision"] = r.precision;
    doc["recall"] = r.recall;
    doc["map_score"] = r.map_score;
    doc["test_set_id"] = r.test_set_id;
    doc["timestamp"] = r.timestamp;
    return doc;
}

EvalRecord record_from_json(const nlohmann::json& doc) {
    EvalRecord r;
    try {
        r.model_id = doc.at("model_id").get<std::string>();
        r.parameter_count = doc.at("parameter_count").get<std::int64_t>();
        r.precision = doc.at("precision").get<double>();
        r.recall = doc.at("recall").get<double>();
        r.map_score = doc.at("map_score").get<double>();
        r.test_set_id = doc.at("test_set_id").get<std::string>();
        r.timestamp = doc.value("timestamp", "");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad evaluation record: {}", e.what()));
    }
    r.validate();
    return r;
}

HiddenTestSet::HiddenTestSet(std::string test_set_id, TestSetDescriptor descriptor,
                             std::map<std::string, std::vector<GroundTruth>> ground_truth)
        : m_id(std::move(test_set_id)), m_descriptor(std::move(descriptor)), m_truth(std::move(ground_truth)) {
    if (m_id.empty()) {
        throw Error(ErrorCode::InvalidArgument, "test set without an id");
    }
    m_descriptor.size = m_truth.size();
}

nlohmann::ordered_json HiddenTestSet::public_json() const {
    nlohmann::ordered_json doc;
    doc["test_set_id"] = m_id;
    doc["size"] = m_descriptor.size;
    doc["regions"] = m_descriptor.regions;
    doc["classes"] = m_descriptor.classes;
    return doc;
}

HiddenTestSet HiddenTestSet::load(const std::filesystem::path& path) {
    try {
        const auto doc = nlohmann::json::parse(read_file(path));
        TestSetDescriptor d;
        d.regions = doc.value("regions", std::vector<std::string>{});
        d.classes = doc.value("classes", std::vector<std::string>{});
        std::map<std::string, std::vector<GroundTruth>> truth;
        for (const auto& [key, boxes] : doc.at("images").items()) {
            auto& list = truth[key];
            for (const auto& b : boxes) {
                const auto& v = b.at("bbox");
                list.push_back({BBox(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>(),
                                     v.at(3).get<double>()),
                                category_from_string(b.at("category").get<std::string>())});
            }
        }
        return HiddenTestSet(doc.at("test_set_id").get<std::string>(), std::move(d), std::move(truth));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad test set '{}': {}", path.string(), e.what()));
    }
}

void HiddenTestSet::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json doc;
    doc["test_set_id"] = m_id;
    doc["regions"] = m_descriptor.regions;
    doc["classes"] = m_descriptor.classes;
    auto& images = doc["images"] = nlohmann::ordered_json::object();
    for (const auto& [key, boxes] : m_truth) {
        auto& list = images[key] = nlohmann::ordered_json::array();
        for (const auto& g : boxes) {
            list.push_back({{"bbox", bbox_json(g.bbox)}, {"category", std::string(to_string(g.category))}});
        }
    }
    write_file(path, doc.dump(1) + "\n");
}

HiddenTestSet HiddenTestSet::from_sidecars(const std::string& test_set_id,
                                           const std::vector<std::filesystem::path>& images,
                                           std::vector<std::string> regions) {
    std::map<std::string, std::vector<GroundTruth>> truth;
    std::set<std::string> classes;
    for (const auto& image : images) {
        auto& list = truth[image.filename().string()];
        for (const auto& obj : backends::read_sidecar(image)) {
            list.push_back({obj.bbox, obj.category});
            classes.insert(std::string(to_string(obj.category)));
        }
    }
    TestSetDescriptor d;
    d.regions = std::move(regions);
    d.classes.assign(classes.begin(), classes.end());
    return HiddenTestSet(test_set_id, std::move(d), std::move(truth));
}

DetectionMetrics score_submission(const nlohmann::json& submission, const HiddenTestSet& test_set,
                                  const EvalProtocol& protocol) {
    std::vector<pipeline::PipelineResult> results;
    try {
        results = exporter::parse_md_json(exporter::Json(submission));
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedSubmission, fmt::format("submission does not parse: {}", e.what()));
    }
    std::map<std::string, const pipeline::PipelineResult*> by_key;
    for (const auto& r : results) {
        const std::string* found = nullptr;
        for (const auto& [key, boxes] : test_set.ground_truth()) {
            if (key_matches(r.image.path, key)) {
                found = &key;
                break;
            }
        }
        if (!found) {
            throw Error(ErrorCode::MalformedSubmission,
                        fmt::format("image '{}' is not part of test set '{}'", r.image.path, test_set.id()));
        }
        if (!by_key.emplace(*found, &r).second) {
            throw Error(ErrorCode::MalformedSubmission, fmt::format("image '{}' appears twice", *found));
        }
    }
    std::vector<ImageEval> images;
    for (const auto& [key, boxes] : test_set.ground_truth()) {
        ImageEval eval;
        eval.gts = boxes;
        if (const auto it = by_key.find(key); it != by_key.end()) {
            for (const auto& d : it->second->detections) {
                eval.preds.push_back(d.detection);
            }
        }
        images.push_back(std::move(eval));
    }
    return evaluate_detections(images, protocol.conf_threshold, protocol.iou_threshold);
}

nlohmann::ordered_json feedback_to_json(const FeedbackEntry& f) {
    nlohmann::ordered_json doc;
    doc["model_id"] = f.model_id;
    doc["user_id"] = f.user_id;
    doc["verified"] = f.verified;
    doc["rating"] = f.rating;
    doc["comment"] = f.comment;
    doc["timestamp"] = f.timestamp;
    return doc;
}

FeedbackEntry feedback_from_json(const nlohmann::json& doc) {
    FeedbackEntry f;
    try {
        f.model_id = doc.at("model_id").get<std::string>();
        f.user_id = doc.value("user_id", "");
        f.verified = doc.value("verified", false);
        f.rating = doc.at("rating").get<int>();
        f.comment = doc.value("comment", "");
        f.timestamp = doc.value("timestamp", "");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("bad feedback entry: {}", e.what()));
    }
    return f;
}

nlohmann::ordered_json rating_to_json(const RatingSummary& s) {
    nlohmann::ordered_json doc;
    doc["model_id"] = s.model_id;
    doc["verified_count"] = s.verified_count;
    doc["unverified_count"] = s.unverified_count;
    doc["mean_rating"] = s.mean_rating ? nlohmann::ordered_json(*s.mean_rating) : nlohmann::ordered_json();
    return doc;
}

Leaderboard::Leaderboard(std::filesystem::path store_dir, EvalProtocol protocol)
        : m_store_dir(std::move(store_dir)), m_protocol(protocol) {
    auto state = std::make_shared<State>();
    if (!m_store_dir.empty()) {
        std::filesystem::create_directories(m_store_dir);
        for (const auto& line : read_lines(m_store_dir / "records.jsonl")) {
            state->records.push_back(record_from_json(nlohmann::json::parse(line, nullptr, false)));
        }
        for (const auto& line : read_lines(m_store_dir / "feedback.jsonl")) {
            state->feedback.push_back(feedback_from_json(nlohmann::json::parse(line, nullptr, false)));
        }
    }
    m_state = std::move(state);
}

std::shared_ptr<const Leaderboard::State> Leaderboard::snapshot() const {
    return std::atomic_load(&m_state);
}

void Leaderboard::publish(std::shared_ptr<const State> state) {
    std::atomic_store(&m_state, std::move(state));
}

void Leaderboard::append_line(const char* file, const std::string& line) {
    if (m_store_dir.empty()) {
        return;
    }
    std::ofstream out(m_store_dir / file, std::ios::app);
    out << line << '\n';
    out.flush();
    if (!out) {
        throw Error(ErrorCode::IoError, fmt::format("cannot append to '{}'", (m_store_dir / file).string()));
    }
}

void Leaderboard::register_test_set(HiddenTestSet test_set) {
    std::lock_guard lock(m_write_mutex);
    auto next = std::make_shared<State>(*snapshot());
    const std::string id = test_set.id();
    next->test_sets[id] = std::make_shared<const HiddenTestSet>(std::move(test_set));
    publish(std::move(next));
}

std::vector<nlohmann::ordered_json> Leaderboard::test_sets() const {
    std::vector<nlohmann::ordered_json> out;
    for (const auto& [id, set] : snapshot()->test_sets) {
        out.push_back(set->public_json());
    }
    return out;
}

void Leaderboard::register_model(const std::string& model_id) {
    std::lock_guard lock(m_write_mutex);
    const auto current = snapshot();
    if (std::find(current->models.begin(), current->models.end(), model_id) != current->models.end()) {
        return;
    }
    auto next = std::make_shared<State>(*current);
    next->models.push_back(model_id);
    publish(std::move(next));
}

bool Leaderboard::knows_model(const std::string& model_id) const {
    const auto s = snapshot();
    return std::find(s->models.begin(), s->models.end(), model_id) != s->models.end() ||
           std::any_of(s->records.begin(), s->records.end(),
                       [&](const EvalRecord& r) { return r.model_id == model_id; });
}

EvalRecord Leaderboard::evaluate_submission(const nlohmann::json& submission, const std::string& test_set_id,
                                            const std::string& model_id, std::int64_t parameter_count) {
    const auto s = snapshot();
    const auto it = s->test_sets.find(test_set_id);
    if (it == s->test_sets.end()) {
        throw Error(ErrorCode::UnknownTestSet, fmt::format("no test set '{}'", test_set_id));
    }
    const auto metrics = score_submission(submission, *it->second, m_protocol);
    EvalRecord record{model_id,     parameter_count, metrics.precision, metrics.recall, metrics.map_score,
                      test_set_id, now_timestamp()};
    add_record(record);
    return record;
}

void Leaderboard::add_record(EvalRecord record) {
    record.validate();
    if (record.timestamp.empty()) {
        record.timestamp = now_timestamp();
    }
    std::lock_guard lock(m_write_mutex);
    append_line("records.jsonl", record_to_json(record).dump());
    auto next = std::make_shared<State>(*snapshot());
    next->records.push_back(std::move(record));
    publish(std::move(next));
}

std::vector<EvalRecord> Leaderboard::leaderboard(const std::string& test_set_id) const {
    std::vector<EvalRecord> out;
    for (const auto& r : snapshot()->records) {
        if (r.test_set_id == test_set_id) {
            out.push_back(r);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const EvalRecord& a, const EvalRecord& b) {
        if (a.map_score != b.map_score) {
            return a.map_score > b.map_score;
        }
        if (a.recall != b.recall) {
            return a.recall > b.recall;
        }
        return a.model_id < b.model_id;
    });
    return out;
}

nlohmann::ordered_json Leaderboard::leaderboard_json(const std::string& test_set_id) const {
    nlohmann::ordered_json doc;
    doc["test_set_id"] = test_set_id;
    auto& rows = doc["records"] = nlohmann::ordered_json::array();
    for (const auto& r : leaderboard(test_set_id)) {
        rows.push_back(record_to_json(r));
    }
    return doc;
}

FeedbackEntry Leaderboard::add_feedback(FeedbackEntry entry) {
    if (entry.rating < 1 || entry.rating > 5) {
        throw Error(ErrorCode::InvalidRating, fmt::format("rating {} is not in 1..5", entry.rating));
    }
    if (!knows_model(entry.model_id)) {
        throw Error(ErrorCode::UnknownModel, fmt::format("no model '{}'", entry.model_id));
    }
    if (entry.timestamp.empty()) {
        entry.timestamp = now_timestamp();
    }
    std::lock_guard lock(m_write_mutex);
    append_line("feedback.jsonl", feedback_to_json(entry).dump());
    auto next = std::make_shared<State>(*snapshot());
    next->feedback.push_back(entry);
    publish(std::move(next));
    return entry;
}

std::vector<FeedbackEntry> Leaderboard::feedback(const std::string& model_id) const {
    std::vector<FeedbackEntry> out;
    for (const auto& f : snapshot()->feedback) {
        if (f.model_id == model_id) {
            out.push_back(f);
        }
    }
    return out;
}

RatingSummary Leaderboard::rating(const std::string& model_id) const {
    if (!knows_model(model_id)) {
        throw Error(ErrorCode::UnknownModel, fmt::format("no model '{}'", model_id));
    }
    RatingSummary s{model_id, 0, 0, std::nullopt};
    double sum = 0.0;
    for (const auto& f : feedback(model_id)) {
        if (f.verified) {
            ++s.verified_count;
            sum += f.rating;
        } else {
            ++s.unverified_count;
        }
    }
    if (s.verified_count > 0) {
        s.mean_rating = sum / static_cast<double>(s.verified_count);
    }
    return s;
}

}  // namespace trapkit::evalboard
