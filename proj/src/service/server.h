#pragma once

// HTTP+JSON API. Every error response is {"error": {"code", "message"}} with the
// status from http_status().
//
//   GET  /health
//   GET  /models
//   POST /detect                       multipart: image, [sidecar], det_threshold,
//                                      clf_threshold, detector_id, classifier_id, annotate
//   POST /jobs/batch                   {"input": server path, detector_id, classifier_id, config}
//   POST /jobs/video                   same JSON with "fps_cap", or multipart with a "video" file
//   GET  /jobs/{id}
//   GET  /jobs/{id}/result
//   POST /triage                       {"job_id" | "results": document, "threshold"}
//   GET  /test-sets
//   GET  /leaderboard/{test_set_id}
//   POST /leaderboard/{test_set_id}    {"model_id", "parameter_count", "submission"}
//   POST /feedback                     {"model_id", "user_id", "rating", "comment"}
//   GET  /models/{model_id}/rating

#include "core/error.h"
#include "evalboard/leaderboard.h"
#include "pipeline/pipeline.h"
#include "service/config.h"
#include "service/jobs.h"
#include "service/runtime.h"

#include <json.hpp>

#include <memory>

namespace trapkit::service {

int http_status(ErrorCode code);

// Reads det_threshold, clf_threshold, crop_size_px and workers from `doc`, starting
// from `base`. Mistyped fields raise ParseError; range checks are left to validate().
pipeline::PipelineConfig pipeline_config_from_json(const nlohmann::json& doc,
                                                   pipeline::PipelineConfig base = {});

class Server {
public:
    // Loads manifests from model_dir, hidden test sets from data_dir/test_sets/*.json
    // and the leaderboard store from data_dir/leaderboard.
    explicit Server(ServiceConfig config);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds config.host:config.port (0 picks a free port) and returns the port.
    int bind();
    // Serves until stop(). Requires bind().
    void run();
    void stop();

    const ServiceConfig& config() const noexcept;
    ModelRegistry& registry() noexcept;
    evalboard::Leaderboard& leaderboard() noexcept;
    JobManager& jobs() noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> m_impl;
};

}  // namespace trapkit::service
