#include "service/config.h"

#include "core/error.h"
#include "core/image.h"

#include <fmt/format.h>

#include <cctype>
#include <charconv>
#include <cstdlib>

namespace trapkit::service {

namespace {

using Json = nlohmann::ordered_json;

// Converts `text` to the JSON type of `like`.
Json parse_value(const std::string& key, const std::string& text, const Json& like, const std::string& source) {
    if (like.is_string()) {
        return text;
    }
    if (like.is_number_unsigned() || like.is_number_integer()) {
        long long v = 0;
        const auto* end = text.data() + text.size();
        const auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc() || ptr != end || (like.is_number_unsigned() && v < 0)) {
            throw Error(ErrorCode::ParseError,
                        fmt::format("{}: '{}' is not a valid integer for {}", source, text, key));
        }
        return like.is_number_unsigned() ? Json(static_cast<std::uint64_t>(v)) : Json(v);
    }
    throw Error(ErrorCode::ParseError, fmt::format("{}: cannot set {}", source, key));
}

void overlay_file(Json& merged, const std::filesystem::path& path) {
    Json doc;
    try {
        doc = Json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("config file {}: {}", path.string(), e.what()));
    }
    if (!doc.is_object()) {
        throw Error(ErrorCode::ParseError, fmt::format("config file {} must hold a JSON object", path.string()));
    }
    for (const auto& [key, value] : doc.items()) {
        if (!merged.contains(key)) {
            throw Error(ErrorCode::ParseError, fmt::format("config file {}: unknown key '{}'", path.string(), key));
        }
        const Json& like = merged[key];
        const bool ok = like.is_string() ? value.is_string()
                                         : value.is_number_integer() && !(like.is_number_unsigned() && value < 0);
        if (!ok) {
            throw Error(ErrorCode::ParseError,
                        fmt::format("config file {}: '{}' has the wrong type", path.string(), key));
        }
        merged[key] = like.is_number_unsigned() ? Json(value.get<std::uint64_t>()) : value;
    }
}

std::string env_name(const std::string& key) {
    std::string name = "TRAPKIT_";
    for (char c : key) {
        name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return name;
}

}  // namespace

void ServiceConfig::validate() const {
    if (port < 0 || port > 65535) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("port {} out of range", port));
    }
    if (job_workers < 1 || pipeline_workers < 1) {
        throw Error(ErrorCode::InvalidArgument, "job_workers and pipeline_workers must be >= 1");
    }
    if (queue_capacity < 1) {
        throw Error(ErrorCode::InvalidArgument, "queue_capacity must be >= 1");
    }
}

Json config_to_json(const ServiceConfig& config) {
    return {{"host", config.host},
            {"port", config.port},
            {"model_dir", config.model_dir.string()},
            {"data_dir", config.data_dir.string()},
            {"job_workers", config.job_workers},
            {"queue_capacity", static_cast<std::uint64_t>(config.queue_capacity)},
            {"pipeline_workers", config.pipeline_workers},
            {"max_image_upload_bytes", config.max_image_upload_bytes},
            {"max_video_upload_bytes", config.max_video_upload_bytes},
            {"operator_token", config.operator_token}};
}

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) {
        return std::string(v);
    }
    return std::nullopt;
}

ServiceConfig resolve_service_config(const std::map<std::string, std::string>& flags, const EnvLookup& env) {
    Json merged = config_to_json(ServiceConfig{});

    std::optional<std::string> file;
    if (auto it = flags.find("config"); it != flags.end()) {
        file = it->second;
    } else {
        file = env("TRAPKIT_CONFIG");
    }
    if (file && !file->empty()) {
        overlay_file(merged, *file);
    }

    for (auto& [key, value] : merged.items()) {
        if (auto text = env(env_name(key))) {
            value = parse_value(key, *text, value, env_name(key));
        }
    }
    for (const auto& [key, text] : flags) {
        if (key == "config") {
            continue;
        }
        if (!merged.contains(key)) {
            throw Error(ErrorCode::ParseError, fmt::format("unknown config key '{}'", key));
        }
        merged[key] = parse_value(key, text, merged[key], "--" + key);
    }

    ServiceConfig c;
    c.host = merged["host"].get<std::string>();
    c.port = merged["port"].get<int>();
    c.model_dir = merged["model_dir"].get<std::string>();
    c.data_dir = merged["data_dir"].get<std::string>();
    c.job_workers = merged["job_workers"].get<int>();
    c.queue_capacity = merged["queue_capacity"].get<std::size_t>();
    c.pipeline_workers = merged["pipeline_workers"].get<int>();
    c.max_image_upload_bytes = merged["max_image_upload_bytes"].get<std::uint64_t>();
    c.max_video_upload_bytes = merged["max_video_upload_bytes"].get<std::uint64_t>();
    c.operator_token = merged["operator_token"].get<std::string>();
    c.validate();
    return c;
}

}  // namespace trapkit::service
