#pragma once

// Service settings resolve per key as: command-line flag > environment > config file
// > built-in default. The config file is a flat JSON object whose keys are the field
// names below; the environment variable for a key is TRAPKIT_ plus the upper-cased key
// (TRAPKIT_MODEL_DIR, TRAPKIT_DATA_DIR, ...). TRAPKIT_CONFIG names the file when no
// --config flag is given.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

namespace trapkit::service {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path model_dir = "models";
    std::filesystem::path data_dir = "data";
    // Jobs running at once; further jobs wait in FIFO order.
    int job_workers = 2;
    std::size_t queue_capacity = 64;
    // Images processed concurrently inside one job.
    int pipeline_workers = 1;
    std::uint64_t max_image_upload_bytes = 100ULL << 20;
    std::uint64_t max_video_upload_bytes = 2ULL << 30;
    // Feedback carrying this token in X-Operator-Token is stored as verified. Empty
    // disables verification.
    std::string operator_token;

    // Throws InvalidArgument.
    void validate() const;
};

nlohmann::ordered_json config_to_json(const ServiceConfig& config);

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

// Reads the real process environment.
std::optional<std::string> process_env(const std::string& name);

// `flags` maps config keys to raw flag text; a "config" entry names the file.
// Unknown keys and unparsable values raise ParseError naming their source.
ServiceConfig resolve_service_config(const std::map<std::string, std::string>& flags,
                                     const EnvLookup& env = process_env);

}  // namespace trapkit::service
