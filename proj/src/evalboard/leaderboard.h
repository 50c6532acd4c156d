#pragma once

#include "evalboard/metrics.h"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace trapkit::evalboard {

struct EvalRecord {
    std::string model_id;
    std::int64_t parameter_count = 0;
    double precision = 0.0;
    double recall = 0.0;
    double map_score = 0.0;
    std::string test_set_id;
    std::string timestamp;

    // Metrics in [0, 1], parameter_count > 0, ids nonempty. Throws InvalidArgument.
    void validate() const;
};

nlohmann::ordered_json record_to_json(const EvalRecord& record);
EvalRecord record_from_json(const nlohmann::json& doc);

struct TestSetDescriptor {
    std::size_t size = 0;
    std::vector<std::string> regions;
    std::vector<std::string> classes;
};

// Ground truth stays server-side: only public_json() is meant for responses.
class HiddenTestSet {
public:
    HiddenTestSet(std::string test_set_id, TestSetDescriptor descriptor,
                  std::map<std::string, std::vector<GroundTruth>> ground_truth);

    const std::string& id() const noexcept { return m_id; }
    const TestSetDescriptor& descriptor() const noexcept { return m_descriptor; }
    const std::map<std::string, std::vector<GroundTruth>>& ground_truth() const noexcept { return m_truth; }

    nlohmann::ordered_json public_json() const;

    // Server-side file: {"test_set_id", "regions", "classes", "images": {key: [{"bbox", "category"}]}}.
    static HiddenTestSet load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    // Keys are the image file names; ground truth comes from the synthetic sidecars.
    static HiddenTestSet from_sidecars(const std::string& test_set_id,
                                       const std::vector<std::filesystem::path>& images,
                                       std::vector<std::string> regions = {});

private:
    std::string m_id;
    TestSetDescriptor m_descriptor;
    std::map<std::string, std::vector<GroundTruth>> m_truth;
};

struct EvalProtocol {
    double iou_threshold = kDefaultIouThreshold;
    double conf_threshold = 0.2;
};

// Scores a MegaDetector-batch submission. An entry's "file" names a test image when it
// equals the key or ends with "/" + key; images absent from the submission count as
// having no detections. Errors: MalformedSubmission (unparsable, unknown or repeated
// images).
DetectionMetrics score_submission(const nlohmann::json& submission, const HiddenTestSet& test_set,
                                  const EvalProtocol& protocol = {});

struct FeedbackEntry {
    std::string model_id;
    std::string user_id;
    bool verified = false;
    int rating = 0;  // 1..5
    std::string comment;
    std::string timestamp;
};

nlohmann::ordered_json feedback_to_json(const FeedbackEntry& entry);
FeedbackEntry feedback_from_json(const nlohmann::json& doc);

struct RatingSummary {
    std::string model_id;
    std::size_t verified_count = 0;
    std::size_t unverified_count = 0;
    std::optional<double> mean_rating;  // verified entries only
};

nlohmann::ordered_json rating_to_json(const RatingSummary& summary);

// Evaluation records and feedback, optionally persisted as append-only JSON-lines
// (records.jsonl, feedback.jsonl) under store_dir. Writers are serialized; readers
// work on immutable snapshots.
class Leaderboard {
public:
    explicit Leaderboard(std::filesystem::path store_dir = {}, EvalProtocol protocol = {});

    void register_test_set(HiddenTestSet test_set);
    // Public descriptors of every registered test set, by id.
    std::vector<nlohmann::ordered_json> test_sets() const;
    void register_model(const std::string& model_id);
    bool knows_model(const std::string& model_id) const;

    // Scores against a registered test set and stores the record.
    // Errors: UnknownTestSet, MalformedSubmission, InvalidArgument.
    EvalRecord evaluate_submission(const nlohmann::json& submission, const std::string& test_set_id,
                                   const std::string& model_id, std::int64_t parameter_count);

    void add_record(EvalRecord record);
    // Sorted by mAP, then recall, both descending; then model id and submission order.
    std::vector<EvalRecord> leaderboard(const std::string& test_set_id) const;
    nlohmann::ordered_json leaderboard_json(const std::string& test_set_id) const;

    // Errors: UnknownModel, InvalidRating.
    FeedbackEntry add_feedback(FeedbackEntry entry);
    std::vector<FeedbackEntry> feedback(const std::string& model_id) const;
    RatingSummary rating(const std::string& model_id) const;

private:
    struct State {
        std::vector<EvalRecord> records;
        std::vector<FeedbackEntry> feedback;
        std::vector<std::string> models;
        std::map<std::string, std::shared_ptr<const HiddenTestSet>> test_sets;
    };

    std::shared_ptr<const State> snapshot() const;
    void publish(std::shared_ptr<const State> state);
    void append_line(const char* file, const std::string& line);

    std::filesystem::path m_store_dir;
    EvalProtocol m_protocol;
    std::mutex m_write_mutex;
    std::shared_ptr<const State> m_state;
};

std::string now_timestamp();

}  // namespace trapkit::evalboard
