#include "service/server.h"

#include "backends/synthetic.h"
#include "core/image.h"
#include "export/annotate.h"
#include "export/md_json.h"

#include <fmt/format.h>
#include <httplib.h>
#include <opencv2/imgcodecs.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <fstream>
#include <random>

namespace trapkit::service {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::MalformedSubmission:
    case ErrorCode::ImageDecodeError:
    case ErrorCode::VideoDecodeError:
    case ErrorCode::EmptyBatch:
    case ErrorCode::IoError:
        return 400;
    case ErrorCode::UnknownModel:
    case ErrorCode::UnknownTestSet:
        return 404;
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidRating:
    case ErrorCode::InvalidBox:
    case ErrorCode::DegenerateBox:
        return 422;
    case ErrorCode::QueueFull:
        return 429;
    case ErrorCode::BackendError:
    case ErrorCode::ArtifactNotFound:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::UnsupportedTask:
        return 503;
    default:
        return 500;
    }
}

pipeline::PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, pipeline::PipelineConfig base) {
    if (doc.is_null()) {
        return base;
    }
    if (!doc.is_object()) {
        throw Error(ErrorCode::ParseError, "config must be a JSON object");
    }
    auto number = [&](const char* key, double& out) {
        if (doc.contains(key)) {
            if (!doc[key].is_number()) {
                throw Error(ErrorCode::ParseError, fmt::format("config.{} must be a number", key));
            }
            out = doc[key].get<double>();
        }
    };
    auto integer = [&](const char* key, int& out) {
        if (doc.contains(key)) {
            if (!doc[key].is_number_integer()) {
                throw Error(ErrorCode::ParseError, fmt::format("config.{} must be an integer", key));
            }
            out = doc[key].get<int>();
        }
    };
    number("det_threshold", base.det_threshold);
    number("clf_threshold", base.clf_threshold);
    integer("crop_size_px", base.crop_size_px);
    integer("workers", base.workers);
    return base;
}

namespace {

std::string base64(const std::string& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

void send_json(httplib::Response& res, int status, const Json& doc) {
    res.status = status;
    res.set_content(doc.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
    send_json(res, http_status(code), error_json(code, message));
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

nlohmann::json parse_body(const std::string& body) {
    try {
        auto doc = nlohmann::json::parse(body);
        if (!doc.is_object()) {
            throw Error(ErrorCode::ParseError, "request body must be a JSON object");
        }
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("request body is not JSON: {}", e.what()));
    }
}

std::string string_field(const nlohmann::json& doc, const char* key, bool required) {
    if (!doc.contains(key) || doc[key].is_null()) {
        if (required) {
            throw Error(ErrorCode::ParseError, fmt::format("missing field '{}'", key));
        }
        return {};
    }
    if (!doc[key].is_string()) {
        throw Error(ErrorCode::ParseError, fmt::format("'{}' must be a string", key));
    }
    return doc[key].get<std::string>();
}

double number_text(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::ParseError, fmt::format("'{}' is not a number: '{}'", key, text));
    }
    return v;
}

// Directory names for uploads: unique within the process and hard to guess.
std::string scratch_name() {
    static std::mutex m;
    static std::mt19937_64 gen(std::random_device{}());
    std::lock_guard lock(m);
    return fmt::format("{:016x}", gen());
}

// Removes a directory tree when it goes out of scope.
struct ScratchDir {
    fs::path path;
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// Keeps only a safe final path component of an uploaded file name.
std::string upload_name(const std::string& filename, const char* fallback) {
    const std::string base = fs::path(filename).filename().string();
    if (base.empty() || base == "." || base == "..") {
        return fallback;
    }
    return base;
}

}  // namespace

struct Server::Impl {
    ServiceConfig config;
    ModelRegistry registry;
    evalboard::Leaderboard leaderboard;
    JobManager jobs;
    httplib::Server http;
    bool bound = false;

    explicit Impl(ServiceConfig c)
            : config(std::move(c)),
              registry(config.model_dir),
              leaderboard(config.data_dir / "leaderboard"),
              jobs(config.job_workers, config.queue_capacity) {
        for (const auto& m : registry.manifests()) {
            leaderboard.register_model(m.model_id);
        }
        const fs::path sets = config.data_dir / "test_sets";
        if (fs::is_directory(sets)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(sets)) {
                if (e.path().extension() == ".json") {
                    files.push_back(e.path());
                }
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                leaderboard.register_test_set(evalboard::HiddenTestSet::load(f));
            }
        }
        routes();
    }

    // Runs `fn`, turning exceptions into error responses.
    template <typename Fn>
    void guard(httplib::Response& res, Fn&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            send_error(res, e.code(), e.what());
        } catch (const nlohmann::json::exception& e) {
            send_error(res, ErrorCode::ParseError, e.what());
        } catch (const std::exception& e) {
            spdlog::error("request failed: {}", e.what());
            send_error(res, 500, "InternalError", e.what());
        }
    }

    pipeline::PipelineConfig job_config(const nlohmann::json& doc) const {
        pipeline::PipelineConfig base;
        base.workers = config.pipeline_workers;
        auto c = pipeline_config_from_json(doc.contains("config") ? doc["config"] : nlohmann::json(), base);
        c.validate();
        return c;
    }

    // Resolves models before queuing so unknown ids fail the request, not the job.
    void check_models(const std::string& detector_id, const std::optional<std::string>& classifier_id) {
        registry.find(detector_id.empty() ? registry.default_detector() : detector_id, backends::Task::detector);
        if (classifier_id) {
            registry.find(*classifier_id, backends::Task::classifier);
        }
    }

    std::optional<std::string> optional_id(const nlohmann::json& doc, const char* key) {
        auto s = string_field(doc, key, false);
        return s.empty() ? std::nullopt : std::optional(s);
    }

    void routes() {
        http.set_payload_max_length(static_cast<std::size_t>(
                std::max(config.max_image_upload_bytes, config.max_video_upload_bytes) + (1 << 20)));
        http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
            send_error(res, 500, "InternalError", "unhandled exception");
        });

        http.Get("/health", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
        });

        http.Get("/models", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, registry.summaries_json());
        });

        http.Post("/detect", [this](const httplib::Request& req, httplib::Response& res) {
            guard(res, [&] { detect(req, res); });
        });

        http.Post("/jobs/batch", [this](const httplib::Request& req, httplib::Response& res) {
            guard(res, [&] {
                const auto doc = parse_body(req.body);
                BatchRequest r;
                r.input = string_field(doc, "input", true);
                r.detector_id = string_field(doc, "detector_id", false);
                r.classifier_id = optional_id(doc, "classifier_id");
                r.config = job_config(doc);
                check_models(r.detector_id, r.classifier_id);
                if (!fs::exists(r.input)) {
                    throw Error(ErrorCode::IoError, fmt::format("{} does not exist on the server", r.input.string()));
                }
                const auto id = jobs.submit(JobKind::batch, [this, r](const JobProgress& progress) {
                    return run_batch_document(r, registry, progress);
                });
                send_json(res, 202, {{"job_id", id}});
            });
        });

        http.Post("/jobs/video",
                  [this](const httplib::Request& req, httplib::Response& res, const httplib::ContentReader& reader) {
                      guard(res, [&] { submit_video(req, res, reader); });
                  });

        http.Get("/jobs/:id", [this](const httplib::Request& req, httplib::Response& res) {
            const auto job = jobs.get(req.path_params.at("id"));
            if (!job) {
                send_error(res, 404, "UnknownJob", fmt::format("no job '{}'", req.path_params.at("id")));
                return;
            }
            send_json(res, 200, job_to_json(*job));
        });

        http.Get("/jobs/:id/result", [this](const httplib::Request& req, httplib::Response& res) {
            const auto& id = req.path_params.at("id");
            const auto job = jobs.get(id);
            if (!job) {
                send_error(res, 404, "UnknownJob", fmt::format("no job '{}'", id));
                return;
            }
            if (job->state == JobState::failed) {
                send_error(res, 409, "JobFailed", job->error_message.value_or("job failed"));
                return;
            }
            const auto result = jobs.result(id);
            if (!result) {
                send_error(res, 409, "JobNotDone", fmt::format("job '{}' is {}", id, to_string(job->state)));
                return;
            }
            res.status = 200;
            res.set_content(*result, "application/json");
        });

        http.Post("/triage", [this](const httplib::Request& req, httplib::Response& res) {
            guard(res, [&] { triage(req, res); });
        });

        http.Get("/test-sets", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, leaderboard.test_sets());
        });

        http.Get("/leaderboard/:id", [this](const httplib::Request& req, httplib::Response& res) {
            guard(res, [&] {
                const auto& id = req.path_params.at("id");
                require_test_set(id);
                send_json(res, 200, leaderboard.leaderboard_json(id));
            });
        });

        http.Post("/leaderboard/:id", [this](const httplib::Request& req, httplib::Response& res) {
            guard(res, [&] {
                const auto doc = parse_body(req.body);
                if (!doc.contains("submission") || !doc.contains("parameter_count") ||
                    !doc["parameter_count"].is_number_integer()) {
                    throw Error(ErrorCode::ParseError, "need 'submission' and an integer 'parameter_count'");
                }
                const auto record = leaderboard.evaluate_submission(doc["submission"], req.path_params.at("id"),
                                                                    string_field(doc, "model_id", true),
                                                                    doc["parameter_count"].get<std::int64_t>());
                send_json(res, 201, evalboard::record_to_json(record));
            });
        });

        http.Post("/feedback", [this](const httplib::Request& req, httplib::Response& res) {
            guard(res, [&] {
                const auto doc = parse_body(req.body);
                evalboard::FeedbackEntry entry;
                entry.model_id = string_field(doc, "model_id", true);
                entry.user_id = string_field(doc, "user_id", true);
                entry.comment = string_field(doc, "comment", false);
                if (!doc.contains("rating") || !doc["rating"].is_number_integer()) {
                    throw Error(ErrorCode::ParseError, "'rating' must be an integer");
                }
                entry.rating = doc["rating"].get<int>();
                entry.verified = !config.operator_token.empty() &&
                                 req.get_header_value("X-Operator-Token") == config.operator_token;
                send_json(res, 201, evalboard::feedback_to_json(leaderboard.add_feedback(std::move(entry))));
            });
        });

        http.Get("/models/:id/rating", [this](const httplib::Request& req, httplib::Response& res) {
            guard(res, [&] {
                const auto& id = req.path_params.at("id");
                if (!leaderboard.knows_model(id)) {
                    throw Error(ErrorCode::UnknownModel, fmt::format("no model '{}'", id));
                }
                send_json(res, 200, evalboard::rating_to_json(leaderboard.rating(id)));
            });
        });
    }

    void require_test_set(const std::string& id) const {
        for (const auto& set : leaderboard.test_sets()) {
            if (set.value("test_set_id", "") == id) {
                return;
            }
        }
        throw Error(ErrorCode::UnknownTestSet, fmt::format("no test set '{}'", id));
    }

    void detect(const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data() || !req.has_file("image")) {
            throw Error(ErrorCode::ParseError, "expected multipart form data with an 'image' file");
        }
        const auto image = req.get_file_value("image");
        if (image.content.size() > config.max_image_upload_bytes) {
            send_error(res, 413, "PayloadTooLarge",
                       fmt::format("image exceeds {} bytes", config.max_image_upload_bytes));
            return;
        }
        auto field = [&](const char* key) -> std::optional<std::string> {
            if (!req.has_file(key)) {
                return std::nullopt;
            }
            return req.get_file_value(key).content;
        };
        pipeline::PipelineConfig c;
        if (auto v = field("det_threshold")) {
            c.det_threshold = number_text("det_threshold", *v);
        }
        if (auto v = field("clf_threshold")) {
            c.clf_threshold = number_text("clf_threshold", *v);
        }
        c.validate();
        const std::string detector_id = field("detector_id").value_or("");
        auto classifier_id = field("classifier_id");
        if (classifier_id && classifier_id->empty()) {
            classifier_id.reset();
        }
        const auto models_det = registry.get(detector_id.empty() ? registry.default_detector() : detector_id,
                                             backends::Task::detector);
        const auto models_clf = classifier_id ? registry.get(*classifier_id, backends::Task::classifier)
                                              : backends::BackendHandle{};

        // Detectors may locate per-image data next to the file, so the upload is
        // written to a scratch directory under its own name.
        ScratchDir scratch{config.data_dir / "uploads" / scratch_name()};
        const fs::path path = scratch.path / upload_name(image.filename, "upload.png");
        write_file(path, image.content);
        if (auto sidecar = field("sidecar")) {
            write_file(backends::sidecar_path(path), *sidecar);
        }
        ImageRef ref;
        ref.path = path.filename().string();
        const Image decoded = load_image(path);
        auto result = pipeline::run_decoded(decoded, ref, *models_det.detector, models_clf.classifier.get(),
                                            with_crop_size(c, models_clf));

        Json out;
        out["is_empty"] = result.is_empty;
        out["needs_review"] = result.needs_review;
        out["result"] = exporter::to_md_json({result});
        const auto annotate = field("annotate");
        if (annotate && (*annotate == "1" || *annotate == "true")) {
            std::vector<unsigned char> png;
            cv::imencode(".png", exporter::render_annotated(decoded.pixels, result), png);
            out["annotated_image"] = {{"media_type", "image/png"},
                                      {"base64", base64(std::string(png.begin(), png.end()))}};
        }
        send_json(res, 200, out);
    }

    void submit_video(const httplib::Request& req, httplib::Response& res, const httplib::ContentReader& reader) {
        VideoRequest r;
        r.config.workers = config.pipeline_workers;
        std::optional<fs::path> upload_dir;

        if (req.is_multipart_form_data()) {
            std::map<std::string, std::string> fields;
            std::string current;
            std::ofstream out;
            std::uint64_t written = 0;
            bool too_large = false;
            reader(
                    [&](const httplib::MultipartFormData& part) {
                        current = part.name;
                        if (part.name == "video") {
                            upload_dir = config.data_dir / "uploads" / scratch_name();
                            fs::create_directories(*upload_dir);
                            r.input = *upload_dir / upload_name(part.filename, "upload.mp4");
                            out.open(r.input, std::ios::binary);
                        } else {
                            fields[part.name].clear();
                        }
                        return true;
                    },
                    [&](const char* data, std::size_t n) {
                        if (current == "video") {
                            written += n;
                            too_large = too_large || written > config.max_video_upload_bytes;
                            if (!too_large) {
                                out.write(data, static_cast<std::streamsize>(n));
                            }
                        } else {
                            fields[current].append(data, n);
                        }
                        return true;
                    });
            out.close();
            if (too_large || !upload_dir) {
                if (upload_dir) {
                    std::error_code ec;
                    fs::remove_all(*upload_dir, ec);
                }
                if (too_large) {
                    send_error(res, 413, "PayloadTooLarge",
                               fmt::format("video exceeds {} bytes", config.max_video_upload_bytes));
                    return;
                }
                throw Error(ErrorCode::ParseError, "multipart request lacks a 'video' file");
            }
            nlohmann::json doc = nlohmann::json::object();
            for (const auto& [k, v] : fields) {
                if (k == "det_threshold" || k == "clf_threshold" || k == "fps_cap") {
                    doc[k] = number_text(k, v);
                } else {
                    doc[k] = v;
                }
            }
            fill_video_request(r, doc, doc);
        } else {
            std::string body;
            reader([&](const char* data, std::size_t n) {
                body.append(data, n);
                return true;
            });
            const auto doc = parse_body(body);
            r.input = string_field(doc, "input", true);
            fill_video_request(r, doc, doc.contains("config") ? doc["config"] : nlohmann::json());
            if (!fs::exists(r.input)) {
                throw Error(ErrorCode::IoError, fmt::format("{} does not exist on the server", r.input.string()));
            }
        }

        const auto id = jobs.submit(JobKind::video, [this, r, upload_dir](const JobProgress& progress) {
            std::optional<ScratchDir> cleanup;
            if (upload_dir) {
                cleanup.emplace().path = *upload_dir;
            }
            return run_video_document(r, registry, progress);
        });
        send_json(res, 202, {{"job_id", id}});
    }

    void fill_video_request(VideoRequest& r, const nlohmann::json& doc, const nlohmann::json& config_doc) {
        r.detector_id = string_field(doc, "detector_id", false);
        r.classifier_id = optional_id(doc, "classifier_id");
        nlohmann::json only_config = nlohmann::json::object();
        for (const char* key : {"det_threshold", "clf_threshold", "crop_size_px", "workers"}) {
            if (config_doc.contains(key)) {
                only_config[key] = config_doc[key];
            }
        }
        r.config = pipeline_config_from_json(only_config, r.config);
        r.config.validate();
        if (doc.contains("fps_cap")) {
            if (!doc["fps_cap"].is_number()) {
                throw Error(ErrorCode::ParseError, "'fps_cap' must be a number");
            }
            r.fps_cap = doc["fps_cap"].get<double>();
            if (!(r.fps_cap > 0.0)) {
                throw Error(ErrorCode::InvalidArgument, "fps_cap must be positive");
            }
        }
        check_models(r.detector_id, r.classifier_id);
    }

    void triage(const httplib::Request& req, httplib::Response& res) {
        const auto doc = parse_body(req.body);
        double threshold = 0.98;
        if (doc.contains("threshold")) {
            if (!doc["threshold"].is_number()) {
                throw Error(ErrorCode::ParseError, "'threshold' must be a number");
            }
            threshold = doc["threshold"].get<double>();
        }
        if (!(threshold >= 0.0 && threshold <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("threshold {} outside [0, 1]", threshold));
        }
        std::vector<pipeline::PipelineResult> results;
        if (doc.contains("job_id")) {
            const auto id = string_field(doc, "job_id", true);
            const auto job = jobs.get(id);
            if (!job) {
                send_error(res, 404, "UnknownJob", fmt::format("no job '{}'", id));
                return;
            }
            if (job->kind != JobKind::batch) {
                throw Error(ErrorCode::ParseError, fmt::format("job '{}' is not a batch job", id));
            }
            const auto text = jobs.result(id);
            if (!text) {
                send_error(res, 409, "JobNotDone", fmt::format("job '{}' is {}", id, to_string(job->state)));
                return;
            }
            results = exporter::parse_md_json_text(*text, threshold);
        } else if (doc.contains("results")) {
            results = exporter::parse_md_json(doc["results"], threshold);
        } else {
            throw Error(ErrorCode::ParseError, "need 'job_id' or 'results'");
        }
        send_json(res, 200, triage_summary(results, threshold));
    }
};

Server::Server(ServiceConfig config) {
    config.validate();
    m_impl = std::make_unique<Impl>(std::move(config));
}

Server::~Server() {
    stop();
    m_impl->jobs.shutdown();
}

int Server::bind() {
    auto& c = m_impl->config;
    int port = c.port;
    if (port == 0) {
        port = m_impl->http.bind_to_any_port(c.host);
    } else if (!m_impl->http.bind_to_port(c.host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw Error(ErrorCode::IoError, fmt::format("cannot bind {}:{}", c.host, c.port));
    }
    m_impl->bound = true;
    return port;
}

void Server::run() {
    if (!m_impl->bound) {
        throw Error(ErrorCode::InvalidArgument, "bind() must precede run()");
    }
    m_impl->http.listen_after_bind();
}

void Server::stop() {
    m_impl->http.stop();
}

const ServiceConfig& Server::config() const noexcept {
    return m_impl->config;
}

ModelRegistry& Server::registry() noexcept {
    return m_impl->registry;
}

evalboard::Leaderboard& Server::leaderboard() noexcept {
    return m_impl->leaderboard;
}

JobManager& Server::jobs() noexcept {
    return m_impl->jobs;
}

}  // namespace trapkit::service
